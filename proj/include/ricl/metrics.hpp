#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ricl/infer.hpp"

namespace ricl {

/// Outcome for one evaluation example. A failed example has no mapped
/// label and carries the error text; it scores as incorrect.
struct Record {
  std::string id;
  std::string gold;
  std::string raw;
  std::optional<std::string> mapped;
  std::optional<MappedVia> via;
  std::vector<std::string> demo_ids;
  std::optional<std::string> error;

  bool failed() const noexcept { return !mapped.has_value(); }
  bool correct() const noexcept { return mapped && *mapped == gold; }
  bool operator==(const Record&) const = default;
};

/// Fraction of records whose mapped label equals gold. Throws
/// std::invalid_argument on an empty list.
double accuracy(const std::vector<Record>& records);

struct F1Report {
  double macro = 0.0;
  std::map<std::string, double> per_class;
};

/// Unweighted mean of one-vs-rest F1 over `labels`. A class with
/// precision + recall = 0 (including one never predicted and never gold)
/// scores 0. Failed records count as a miss for their gold class. Throws
/// std::invalid_argument on an empty label set or a label outside it.
F1Report macro_f1(const std::vector<Record>& records, const std::set<std::string>& labels);

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, double> per_class_f1;
  double mismatch_rate = 0.0;
  std::size_t failure_count = 0;

  bool operator==(const Metrics&) const = default;
};

Metrics compute_metrics(const std::vector<Record>& records, const std::set<std::string>& labels);

enum class StdKind { population, sample };

std::string_view to_string(StdKind k) noexcept;
StdKind parse_std_kind(std::string_view name);

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and standard deviation. Values are summed in sorted order so the
/// result does not depend on input order. Sample std of one value is 0.
Summary summarize(std::vector<double> values, StdKind kind = StdKind::population);

/// "85.39 ± 0.58" style, in percent with two decimals.
std::string format_percent(const Summary& s);

}  // namespace ricl
