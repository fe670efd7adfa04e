#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ricl/corpus.hpp"
#include "ricl/metrics.hpp"

namespace ricl {

/// Everything one (config, seed) run produced.
///
/// `labels` is the label set the metrics were scored against, stored so
/// metrics can be recomputed from the records alone. Wall-clock timing is
/// kept out of the JSON unless asked for, so identical runs serialize to
/// identical bytes.
struct RunReport {
  std::string fingerprint;
  std::string name;
  std::string dataset;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string strategy;
  std::vector<std::string> ablations;
  std::size_t pool_size = 0;
  std::vector<Shortfall> shortfall;
  std::set<std::string> labels;
  std::vector<Record> records;
  Metrics metrics;
  std::map<std::string, std::size_t> notes;
  bool complete = true;
  std::optional<std::string> error;
  double elapsed_seconds = 0.0;
};

nlohmann::ordered_json to_json(const RunReport& report, bool include_timing = false);
RunReport run_report_from_json(const nlohmann::json& j);

/// Pretty-printed JSON plus trailing newline.
std::string serialize_report(const RunReport& report, bool include_timing = false);
void write_report(const std::filesystem::path& path, const RunReport& report,
                  bool include_timing = false);
RunReport read_report(const std::filesystem::path& path);

/// Recomputes metrics from the stored records and label set.
Metrics recompute_metrics(const RunReport& report);

/// Columns: dataset,k,strategy,ablations,seed,accuracy,macro_f1,mismatch_rate.
/// Ablations are joined with '+', "none" when empty.
std::string summary_csv(const std::vector<RunReport>& reports);

/// Mean and std of accuracy, macro_f1 and mismatch_rate over reports.
std::map<std::string, Summary> aggregate(const std::vector<RunReport>& reports,
                                         StdKind kind = StdKind::population);

/// Markdown table of aggregates, one row per (dataset, k, strategy,
/// ablations) group, cells as "mean ± std" in percent.
std::string summary_markdown(const std::vector<RunReport>& reports,
                             StdKind kind = StdKind::population);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace ricl
