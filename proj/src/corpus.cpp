#include "ricl/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "ricl/error.hpp"
#include "ricl/io.hpp"
#include "ricl/rng.hpp"
#include "ricl/text.hpp"

namespace ricl {

Dataset::Dataset(std::string name, std::vector<Example> examples)
    : name_(std::move(name)), examples_(std::move(examples)) {
  by_id_.reserve(examples_.size());
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    Example& ex = examples_[i];
    if (text::trim(ex.text).empty()) {
      throw DataError("example '" + ex.id + "': empty text");
    }
    ex.label = text::normalize_label(ex.label);
    if (ex.label.empty()) throw DataError("example '" + ex.id + "': empty label");
    if (!by_id_.emplace(ex.id, i).second) {
      throw DataError("duplicate example id '" + ex.id + "'");
    }
    labels_.insert(ex.label);
  }
}

const Example* Dataset::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &examples_[it->second];
}

bool Dataset::has_label(std::string_view label) const {
  return labels_.count(std::string(label)) > 0;
}

std::unordered_map<std::string, std::vector<std::size_t>> Dataset::indices_by_label() const {
  std::unordered_map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < examples_.size(); ++i) out[examples_[i].label].push_back(i);
  return out;
}

void Dataset::require_classes(std::size_t n) const {
  if (labels_.size() < n) {
    throw DataError("dataset '" + name_ + "' has " + std::to_string(labels_.size()) +
                    " classes; at least " + std::to_string(n) + " required");
  }
}

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "jsonl") return DatasetFormat::jsonl;
  if (name == "csv") return DatasetFormat::csv;
  throw std::invalid_argument("unknown dataset format '" + std::string(name) + "'");
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::csv : DatasetFormat::jsonl;
}

namespace {

std::string row_prefix(std::size_t row) { return "row " + std::to_string(row) + ": "; }

std::string json_scalar_to_string(const nlohmann::json& v, std::size_t row, const char* field) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  throw DataError(row_prefix(row) + "field '" + field + "' must be a string");
}

void check_record(RawRecord& rec) {
  if (!text::is_valid_utf8(rec.text)) throw DataError(row_prefix(rec.row) + "invalid UTF-8");
  if (text::trim(rec.text).empty()) throw DataError(row_prefix(rec.row) + "empty text");
  if (rec.labels.empty()) throw DataError(row_prefix(rec.row) + "missing label");
  for (auto& label : rec.labels) {
    if (!text::is_valid_utf8(label)) throw DataError(row_prefix(rec.row) + "invalid UTF-8");
    label = text::normalize_label(label);
    if (label.empty()) throw DataError(row_prefix(rec.row) + "empty label");
  }
}

std::vector<RawRecord> parse_jsonl(std::string_view content, const FieldNames& fields) {
  std::vector<RawRecord> records;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    if (text::trim(line).empty()) continue;

    RawRecord rec;
    rec.row = records.size() + 1;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(row_prefix(rec.row) + "malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw DataError(row_prefix(rec.row) + "expected a JSON object");
    auto text_it = obj.find(fields.text);
    if (text_it == obj.end() || !text_it->is_string()) {
      throw DataError(row_prefix(rec.row) + "missing string field '" + fields.text + "'");
    }
    rec.text = text_it->get<std::string>();
    if (auto it = obj.find(fields.id); it != obj.end() && !it->is_null()) {
      rec.id = json_scalar_to_string(*it, rec.row, "id");
    }
    if (auto it = obj.find(fields.label); it != obj.end() && !it->is_null()) {
      rec.labels.push_back(json_scalar_to_string(*it, rec.row, "label"));
    } else if (auto it2 = obj.find(fields.labels); it2 != obj.end()) {
      if (!it2->is_array()) {
        throw DataError(row_prefix(rec.row) + "field '" + fields.labels + "' must be an array");
      }
      for (const auto& v : *it2) rec.labels.push_back(json_scalar_to_string(v, rec.row, "labels"));
    }
    check_record(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

// RFC 4180 reader. Returns rows of fields; quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv_rows(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (content.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    bool blank = row.size() == 1 && row[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row.clear();
  };

  for (; i < content.size(); ++i) {
    char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw DataError("row " + std::to_string(rows.size()) + ": stray quote in unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < content.size() && content[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("row " + std::to_string(rows.size()) + ": unterminated quote");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::vector<RawRecord> parse_csv(std::string_view content, const FieldNames& fields) {
  auto rows = parse_csv_rows(content);
  if (rows.empty()) throw DataError("empty file");
  const auto& header = rows.front();
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  auto text_col = column(fields.text);
  auto label_col = column(fields.label);
  auto labels_col = column(fields.labels);
  auto id_col = column(fields.id);
  if (!text_col) throw DataError("CSV header lacks column '" + fields.text + "'");
  if (!label_col && !labels_col) {
    throw DataError("CSV header lacks column '" + fields.label + "'");
  }

  std::vector<RawRecord> records;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    RawRecord rec;
    rec.row = r;
    if (row.size() != header.size()) {
      throw DataError(row_prefix(rec.row) + "expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(row.size()));
    }
    rec.text = row[*text_col];
    if (id_col && !row[*id_col].empty()) rec.id = row[*id_col];
    if (label_col) {
      rec.labels.push_back(row[*label_col]);
    } else {
      std::stringstream ss(row[*labels_col]);
      std::string part;
      while (std::getline(ss, part, ',')) {
        if (!text::trim(part).empty()) rec.labels.push_back(part);
      }
    }
    check_record(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

Example to_example(const RawRecord& rec, std::size_t index) {
  return Example{rec.id.value_or(std::to_string(index)), rec.text, rec.labels.front()};
}

}  // namespace

std::vector<RawRecord> load_records(const std::filesystem::path& path, DatasetFormat format,
                                    const FieldNames& fields) {
  std::string content = io::read_file(path);
  if (text::trim(content).empty()) throw DataError(path.string() + ": empty file");
  try {
    auto records = format == DatasetFormat::csv ? parse_csv(content, fields)
                                                : parse_jsonl(content, fields);
    if (records.empty()) throw DataError("empty file");
    return records;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const FieldNames& fields) {
  auto records = load_records(path, format, fields);
  std::vector<Example> examples;
  examples.reserve(records.size());
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.labels.size() != 1) {
      throw DataError(path.string() + ": " + row_prefix(rec.row) + std::to_string(rec.labels.size()) +
                      " labels; filter multi-label data with filter_single_label");
    }
    Example ex = to_example(rec, i);
    if (!seen.insert(ex.id).second) {
      throw DataError(path.string() + ": " + row_prefix(rec.row) + "duplicate id '" + ex.id + "'");
    }
    examples.push_back(std::move(ex));
  }
  Dataset dataset(path.stem().string(), std::move(examples));
  dataset.require_classes(2);
  return dataset;
}

SingleLabelResult filter_single_label(const std::vector<RawRecord>& records, std::string name) {
  std::vector<Example> kept;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].labels.size() == 1) kept.push_back(to_example(records[i], i));
  }
  SingleLabelResult result;
  result.total = records.size();
  result.kept = kept.size();
  result.retention = records.empty() ? 0.0
                                     : static_cast<double>(kept.size()) /
                                           static_cast<double>(records.size());
  result.empty_warning = kept.empty();
  result.dataset = Dataset(std::move(name), std::move(kept));
  return result;
}

Dataset drop_class(const Dataset& dataset, std::string_view label) {
  std::string key = text::normalize_label(label);
  if (!dataset.has_label(key)) {
    throw std::invalid_argument("drop_class: label '" + key + "' not in dataset '" +
                                dataset.name() + "'");
  }
  std::vector<Example> kept;
  kept.reserve(dataset.size());
  for (const auto& ex : dataset.examples()) {
    if (ex.label != key) kept.push_back(ex);
  }
  return Dataset(dataset.name(), std::move(kept));
}

Split sample_kshot(const Dataset& dataset, std::size_t k, std::uint64_t seed, bool carve_heldout) {
  if (k == 0) throw std::invalid_argument("sample_kshot: k must be at least 1");
  auto by_label = dataset.indices_by_label();
  Rng rng(seed);
  std::vector<char> chosen(dataset.size(), 0);
  Split split;
  split.k = k;
  split.seed = seed;
  for (const auto& label : dataset.labels()) {
    auto members = by_label.at(label);
    if (members.empty()) throw DataError("class '" + label + "' has no examples");
    const std::size_t take = std::min(k, members.size());
    // Partial Fisher-Yates: the first `take` slots become a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(members.size() - i));
      std::swap(members[i], members[j]);
      chosen[members[i]] = 1;
    }
    if (members.size() < k) split.shortfall.push_back({label, members.size()});
  }
  std::vector<Example> pool;
  std::vector<Example> rest;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (chosen[i] ? pool : rest).push_back(dataset.examples()[i]);
  }
  split.pool = Dataset(dataset.name() + "/pool", std::move(pool));
  if (carve_heldout) split.eval = Dataset(dataset.name() + "/heldout", std::move(rest));
  return split;
}

SplitFile split_file_of(const Split& split) {
  SplitFile file;
  file.k = split.k;
  file.seed = split.seed;
  for (const auto& ex : split.pool.examples()) file.pool_ids.push_back(ex.id);
  for (const auto& ex : split.eval.examples()) file.eval_ids.push_back(ex.id);
  return file;
}

nlohmann::ordered_json split_file_to_json(const SplitFile& file) {
  nlohmann::ordered_json j;
  j["k"] = file.k;
  j["seed"] = file.seed;
  j["pool_ids"] = file.pool_ids;
  j["eval_ids"] = file.eval_ids;
  return j;
}

SplitFile split_file_from_json(const nlohmann::json& j) {
  try {
    SplitFile file;
    file.k = j.at("k").get<std::size_t>();
    file.seed = j.at("seed").get<std::uint64_t>();
    file.pool_ids = j.at("pool_ids").get<std::vector<std::string>>();
    file.eval_ids = j.value("eval_ids", std::vector<std::string>{});
    return file;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid split file: ") + e.what());
  }
}

SplitFile read_split_file(const std::filesystem::path& path) {
  try {
    return split_file_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_split_file(const std::filesystem::path& path, const SplitFile& file) {
  io::write_file(path, split_file_to_json(file).dump(2) + "\n");
}

Split apply_split_file(const SplitFile& file, const Dataset& pool_source, const Dataset* eval_source) {
  auto pick = [](const Dataset& source, const std::vector<std::string>& ids, const char* role) {
    std::vector<Example> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const Example* ex = source.find(id);
      if (ex == nullptr) {
        throw DataError(std::string("split file: ") + role + " id '" + id + "' not found in '" +
                        source.name() + "'");
      }
      out.push_back(*ex);
    }
    return out;
  };
  Split split;
  split.k = file.k;
  split.seed = file.seed;
  split.pool = Dataset(pool_source.name() + "/pool", pick(pool_source, file.pool_ids, "pool"));
  const Dataset& eval_from = eval_source ? *eval_source : pool_source;
  split.eval = Dataset(eval_from.name() + "/eval", pick(eval_from, file.eval_ids, "eval"));
  if (eval_source == nullptr) {
    for (const auto& id : file.eval_ids) {
      if (split.pool.find(id) != nullptr) {
        throw DataError("split file: id '" + id + "' is in both pool and eval");
      }
    }
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& ex : split.pool.examples()) ++counts[ex.label];
  for (const auto& label : split.pool.labels()) {
    if (counts[label] < file.k) split.shortfall.push_back({label, counts[label]});
  }
  return split;
}

void write_dataset_jsonl(const std::filesystem::path& path, const Dataset& dataset) {
  std::string out;
  for (const auto& ex : dataset.examples()) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["text"] = ex.text;
    j["label"] = ex.label;
    out += j.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

}  // namespace ricl
