#include "ricl/report.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <sstream>

#include "ricl/error.hpp"
#include "ricl/io.hpp"

namespace ricl {

namespace {

std::string join_ablations(const std::vector<std::string>& ablations) {
  if (ablations.empty()) return "none";
  std::string out;
  for (const auto& a : ablations) {
    if (!out.empty()) out += '+';
    out += a;
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::ordered_json record_to_json(const Record& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["gold"] = r.gold;
  j["raw"] = r.raw;
  j["mapped"] = r.mapped ? nlohmann::ordered_json(*r.mapped) : nlohmann::ordered_json(nullptr);
  j["via"] = r.via ? nlohmann::ordered_json(to_string(*r.via)) : nlohmann::ordered_json(nullptr);
  j["demo_ids"] = r.demo_ids;
  if (r.error) j["error"] = *r.error;
  return j;
}

Record record_from_json(const nlohmann::json& j) {
  Record r;
  r.id = j.at("id").get<std::string>();
  r.gold = j.at("gold").get<std::string>();
  r.raw = j.value("raw", "");
  if (j.contains("mapped") && !j["mapped"].is_null()) r.mapped = j["mapped"].get<std::string>();
  if (j.contains("via") && !j["via"].is_null()) {
    r.via = j["via"].get<std::string>() == "exact" ? MappedVia::exact : MappedVia::nearest_label;
  }
  r.demo_ids = j.value("demo_ids", std::vector<std::string>{});
  if (j.contains("error")) r.error = j["error"].get<std::string>();
  return r;
}

}  // namespace

nlohmann::ordered_json to_json(const RunReport& report, bool include_timing) {
  nlohmann::ordered_json j;
  j["fingerprint"] = report.fingerprint;
  j["name"] = report.name;
  j["dataset"] = report.dataset;
  j["k"] = report.k;
  j["seed"] = report.seed;
  j["strategy"] = report.strategy;
  j["ablations"] = report.ablations;
  j["complete"] = report.complete;
  if (report.error) j["error"] = *report.error;
  j["pool_size"] = report.pool_size;
  auto& shortfall = j["shortfall"] = nlohmann::ordered_json::array();
  for (const auto& s : report.shortfall) shortfall.push_back({{"label", s.label}, {"available", s.available}});
  j["labels"] = report.labels;
  nlohmann::ordered_json metrics;
  metrics["accuracy"] = report.metrics.accuracy;
  metrics["macro_f1"] = report.metrics.macro_f1;
  metrics["mismatch_rate"] = report.metrics.mismatch_rate;
  metrics["failure_count"] = report.metrics.failure_count;
  metrics["per_class_f1"] = report.metrics.per_class_f1;
  j["metrics"] = std::move(metrics);
  j["notes"] = report.notes;
  if (include_timing) j["elapsed_seconds"] = report.elapsed_seconds;
  auto& records = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) records.push_back(record_to_json(r));
  return j;
}

RunReport run_report_from_json(const nlohmann::json& j) {
  RunReport report;
  try {
    report.fingerprint = j.at("fingerprint").get<std::string>();
    report.name = j.value("name", "");
    report.dataset = j.value("dataset", "");
    report.k = j.value("k", std::size_t{0});
    report.seed = j.value("seed", std::uint64_t{0});
    report.strategy = j.value("strategy", "");
    report.ablations = j.value("ablations", std::vector<std::string>{});
    report.complete = j.value("complete", true);
    if (j.contains("error")) report.error = j["error"].get<std::string>();
    report.pool_size = j.value("pool_size", std::size_t{0});
    for (const auto& s : j.value("shortfall", nlohmann::json::array())) {
      report.shortfall.push_back({s.at("label").get<std::string>(), s.at("available").get<std::size_t>()});
    }
    report.labels = j.at("labels").get<std::set<std::string>>();
    const auto& m = j.at("metrics");
    report.metrics.accuracy = m.at("accuracy").get<double>();
    report.metrics.macro_f1 = m.at("macro_f1").get<double>();
    report.metrics.mismatch_rate = m.at("mismatch_rate").get<double>();
    report.metrics.failure_count = m.at("failure_count").get<std::size_t>();
    report.metrics.per_class_f1 = m.at("per_class_f1").get<std::map<std::string, double>>();
    report.notes = j.value("notes", std::map<std::string, std::size_t>{});
    report.elapsed_seconds = j.value("elapsed_seconds", 0.0);
    for (const auto& r : j.at("records")) report.records.push_back(record_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid run report: ") + e.what());
  }
  return report;
}

std::string serialize_report(const RunReport& report, bool include_timing) {
  return to_json(report, include_timing).dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const RunReport& report, bool include_timing) {
  io::write_file(path, serialize_report(report, include_timing));
}

RunReport read_report(const std::filesystem::path& path) {
  try {
    return run_report_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Metrics recompute_metrics(const RunReport& report) {
  return compute_metrics(report.records, report.labels);
}

std::string summary_csv(const std::vector<RunReport>& reports) {
  std::string out = "dataset,k,strategy,ablations,seed,accuracy,macro_f1,mismatch_rate\n";
  for (const auto& r : reports) {
    out += csv_field(r.dataset) + ',' + std::to_string(r.k) + ',' + csv_field(r.strategy) + ',' +
           csv_field(join_ablations(r.ablations)) + ',' + std::to_string(r.seed) + ',' +
           fixed6(r.metrics.accuracy) + ',' + fixed6(r.metrics.macro_f1) + ',' +
           fixed6(r.metrics.mismatch_rate) + '\n';
  }
  return out;
}

std::map<std::string, Summary> aggregate(const std::vector<RunReport>& reports, StdKind kind) {
  std::vector<double> acc, f1, mismatch;
  for (const auto& r : reports) {
    acc.push_back(r.metrics.accuracy);
    f1.push_back(r.metrics.macro_f1);
    mismatch.push_back(r.metrics.mismatch_rate);
  }
  return {{"accuracy", summarize(acc, kind)},
          {"macro_f1", summarize(f1, kind)},
          {"mismatch_rate", summarize(mismatch, kind)}};
}

std::string summary_markdown(const std::vector<RunReport>& reports, StdKind kind) {
  std::map<std::string, std::vector<RunReport>> groups;
  std::vector<std::string> order;
  for (const auto& r : reports) {
    std::string key = r.dataset + "\x1f" + std::to_string(r.k) + "\x1f" + r.strategy + "\x1f" +
                      join_ablations(r.ablations);
    auto& g = groups[key];
    if (g.empty()) order.push_back(key);
    g.push_back(r);
  }
  std::ostringstream out;
  out << "| dataset | k | strategy | ablations | runs | accuracy | macro F1 | mismatch |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& key : order) {
    const auto& g = groups[key];
    auto agg = aggregate(g, kind);
    const auto& first = g.front();
    out << "| " << first.dataset << " | " << first.k << " | " << first.strategy << " | "
        << join_ablations(first.ablations) << " | " << g.size() << " | "
        << format_percent(agg["accuracy"]) << " | " << format_percent(agg["macro_f1"]) << " | "
        << format_percent(agg["mismatch_rate"]) << " |\n";
  }
  return out.str();
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace ricl
