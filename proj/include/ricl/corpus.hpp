#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace ricl {

/// One labeled text instance.
struct Example {
  std::string id;
  std::string text;
  std::string label;

  bool operator==(const Example&) const = default;
};

/// An immutable, validated collection of examples.
///
/// Construction checks that ids are unique and texts are non-blank, and
/// normalizes every label (NFC + trim). The label set is always derived
/// from the examples, so filtering can never leave phantom classes behind.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::vector<Example> examples);

  const std::string& name() const noexcept { return name_; }
  const std::vector<Example>& examples() const noexcept { return examples_; }
  const std::set<std::string>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return examples_.size(); }
  std::size_t num_classes() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return examples_.empty(); }

  const Example* find(std::string_view id) const;
  bool has_label(std::string_view label) const;

  /// Indices of the examples of each class, in dataset order.
  std::unordered_map<std::string, std::vector<std::size_t>> indices_by_label() const;

  /// Throws DataError unless the dataset has at least `n` classes.
  void require_classes(std::size_t n) const;

 private:
  std::string name_;
  std::vector<Example> examples_;
  std::set<std::string> labels_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

enum class DatasetFormat { jsonl, csv };

DatasetFormat parse_dataset_format(std::string_view name);
/// Picks the format from the file extension (.csv, otherwise jsonl).
DatasetFormat format_from_path(const std::filesystem::path& path);

/// Field (column) names read from dataset files.
struct FieldNames {
  std::string text = "text";
  std::string label = "label";
  std::string labels = "labels";
  std::string id = "id";
};

/// A record as found on disk, possibly carrying several labels.
struct RawRecord {
  std::optional<std::string> id;
  std::string text;
  std::vector<std::string> labels;
  std::size_t row = 0;  // 1-based record number, for messages
};

/// Reads records without interpreting the label count.
///
/// JSONL: one object per non-blank line with `text` and either `label`
/// (string) or `labels` (array of strings). CSV: RFC 4180 quoting, header
/// row required, comma separator; a `labels` column holds a
/// comma-separated list. Row numbers in errors count records from 1.
std::vector<RawRecord> load_records(const std::filesystem::path& path, DatasetFormat format,
                                    const FieldNames& fields = {});

/// Loads a single-label dataset. Ids default to the 0-based record index.
/// Records with more than one label are rejected (see filter_single_label).
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const FieldNames& fields = {});

struct SingleLabelResult {
  Dataset dataset;
  std::size_t kept = 0;
  std::size_t total = 0;
  double retention = 0.0;  // kept / total, 0 when total == 0
  bool empty_warning = false;
};

/// Keeps exactly the records that carry one label.
SingleLabelResult filter_single_label(const std::vector<RawRecord>& records,
                                      std::string name = {});

/// Removes every example of `label`. Throws std::invalid_argument when the
/// label is not present.
Dataset drop_class(const Dataset& dataset, std::string_view label);

struct Shortfall {
  std::string label;
  std::size_t available = 0;

  bool operator==(const Shortfall&) const = default;
};

/// A K-shot retrieval pool plus its evaluation set.
struct Split {
  Dataset pool;
  Dataset eval;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<Shortfall> shortfall;  // classes with fewer than k examples
};

/// Draws min(k, class size) examples per class uniformly without
/// replacement. Classes are visited in sorted label order from a single
/// Rng(seed) stream; selected examples keep dataset order. With
/// `carve_heldout` the unselected remainder becomes the eval set.
Split sample_kshot(const Dataset& dataset, std::size_t k, std::uint64_t seed,
                   bool carve_heldout = false);

/// Explicit id lists, e.g. a published few-shot split.
struct SplitFile {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> pool_ids;
  std::vector<std::string> eval_ids;
};

SplitFile split_file_of(const Split& split);
nlohmann::ordered_json split_file_to_json(const SplitFile& file);
SplitFile split_file_from_json(const nlohmann::json& j);
SplitFile read_split_file(const std::filesystem::path& path);
void write_split_file(const std::filesystem::path& path, const SplitFile& file);

/// Materializes a split file. Pool ids resolve against `pool_source`; eval
/// ids against `eval_source` when given, otherwise against `pool_source`.
Split apply_split_file(const SplitFile& file, const Dataset& pool_source,
                       const Dataset* eval_source = nullptr);

/// Writes the normalized dataset as JSONL (`id`, `text`, `label`).
void write_dataset_jsonl(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace ricl
