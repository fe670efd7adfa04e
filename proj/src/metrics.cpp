#include "ricl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ricl/error.hpp"

namespace ricl {

double accuracy(const std::vector<Record>& records) {
  if (records.empty()) throw std::invalid_argument("accuracy: no records");
  std::size_t correct = 0;
  for (const auto& r : records) correct += r.correct();
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

F1Report macro_f1(const std::vector<Record>& records, const std::set<std::string>& labels) {
  if (labels.empty()) throw std::invalid_argument("macro_f1: empty label set");
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<std::string, Counts> counts;
  for (const auto& label : labels) counts[label];
  auto at = [&](const std::string& label) -> Counts& {
    auto it = counts.find(label);
    if (it == counts.end()) throw std::invalid_argument("macro_f1: label '" + label + "' not in label set");
    return it->second;
  };
  for (const auto& r : records) {
    Counts& gold = at(r.gold);
    if (!r.mapped) {
      ++gold.fn;
    } else if (*r.mapped == r.gold) {
      ++gold.tp;
    } else {
      ++gold.fn;
      ++at(*r.mapped).fp;
    }
  }
  F1Report report;
  double sum = 0.0;
  for (const auto& [label, c] : counts) {
    // 2PR/(P+R) == 2TP/(2TP+FP+FN), and is 0 whenever TP is 0.
    const double f1 = c.tp == 0 ? 0.0
                                : 2.0 * static_cast<double>(c.tp) /
                                      static_cast<double>(2 * c.tp + c.fp + c.fn);
    report.per_class[label] = f1;
    sum += f1;
  }
  report.macro = sum / static_cast<double>(counts.size());
  return report;
}

Metrics compute_metrics(const std::vector<Record>& records, const std::set<std::string>& labels) {
  Metrics m;
  m.accuracy = accuracy(records);
  auto f1 = macro_f1(records, labels);
  m.macro_f1 = f1.macro;
  m.per_class_f1 = std::move(f1.per_class);
  std::vector<MappedVia> vias;
  for (const auto& r : records) {
    if (r.failed()) {
      ++m.failure_count;
    } else if (r.via) {
      vias.push_back(*r.via);
    }
  }
  m.mismatch_rate = mismatch_rate(vias);
  return m;
}

std::string_view to_string(StdKind k) noexcept {
  return k == StdKind::population ? "population" : "sample";
}

StdKind parse_std_kind(std::string_view name) {
  if (name == "population") return StdKind::population;
  if (name == "sample") return StdKind::sample;
  throw ConfigError("std must be 'population' or 'sample'");
}

Summary summarize(std::vector<double> values, StdKind kind) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::vector<double> sq;
  sq.reserve(values.size());
  for (double v : values) sq.push_back((v - s.mean) * (v - s.mean));
  std::sort(sq.begin(), sq.end());
  double ss = 0.0;
  for (double v : sq) ss += v;
  const double denom = kind == StdKind::population ? static_cast<double>(values.size())
                                                   : static_cast<double>(values.size()) - 1.0;
  s.std = denom > 0.0 ? std::sqrt(ss / denom) : 0.0;
  return s;
}

std::string format_percent(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * s.mean, 100.0 * s.std);
  return buf;
}

}  // namespace ricl
