#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ricl/corpus.hpp"
#include "ricl/embedder.hpp"
#include "ricl/http.hpp"
#include "ricl/infer.hpp"
#include "ricl/metrics.hpp"
#include "ricl/prompt.hpp"
#include "ricl/report.hpp"
#include "ricl/retrieve.hpp"

namespace ricl {

enum class Ablation { obfuscate, resample, shuffle };
enum class EmbeddingSource { file, mock, http };
enum class MetricChoice { accuracy, macro_f1, both };

std::string_view to_string(Ablation a) noexcept;
std::string_view to_string(EmbeddingSource s) noexcept;
std::string_view to_string(MetricChoice m) noexcept;
Ablation parse_ablation(std::string_view name);
EmbeddingSource parse_embedding_source(std::string_view name);
MetricChoice parse_metric(std::string_view name);

/// Where the pool and eval examples come from.
///
/// Without a split file the pool is a K-shot sample of `train`; the eval
/// set is `test`, or the unsampled remainder of `train` with `heldout`.
struct DatasetRefs {
  std::filesystem::path train;
  std::optional<std::filesystem::path> test;
  std::optional<std::filesystem::path> split_file;
  std::optional<DatasetFormat> format;  // by extension when unset
  FieldNames fields;
  bool heldout = false;
  bool single_label_filter = false;
  std::optional<std::size_t> eval_limit;  // first n eval examples
};

/// Vector source for pool and eval texts. `file` reads precomputed indexes
/// (`eval` defaults to `pool`); `mock` hashes texts locally; `http` calls
/// the endpoint. The endpoint, when it has a url, also embeds generations
/// that need the nearest-label fallback under the `file` source.
struct EmbeddingSettings {
  EmbeddingSource source = EmbeddingSource::mock;
  std::optional<std::filesystem::path> pool;
  std::optional<std::filesystem::path> eval;
  std::size_t dim = 64;
  std::uint64_t mock_seed = 0;
  EndpointConfig endpoint;
  std::size_t batch_size = 512;
};

struct BackendSettings {
  BackendKind kind = BackendKind::oracle_mock;
  std::optional<std::filesystem::path> fixture;  // scripted
  EndpointConfig endpoint;                       // http
  bool chat = false;
  std::size_t max_new_tokens = 16;
  double temperature = 0.0;
  std::vector<std::string> stop{"\n"};
  /// In-flight completions per run.
  std::size_t concurrency = 4;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetRefs dataset;
  std::size_t k = 10;
  std::vector<std::uint64_t> seeds{1};
  RetrievalConfig retrieval;
  /// The budget mode and fixed m follow `retrieval.m`.
  PromptSpec prompt;
  std::optional<EndpointConfig> tokenizer;  // external estimator
  EmbeddingSettings embeddings;
  BackendSettings backend;
  std::set<Ablation> ablations;
  std::optional<std::string> class_drop;
  MetricChoice metric = MetricChoice::both;
  StdKind std_kind = StdKind::population;
  std::optional<std::filesystem::path> prompt_dump;
  /// Relative paths resolve against this (the config file's directory).
  /// Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  /// Copies retrieval.m into the prompt budget.
  void sync_budget();
  /// Throws ConfigError.
  void validate() const;
};

/// Canonical form: every field spelled out, keys sorted.
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON of the config.
std::string fingerprint(const ExperimentConfig& cfg);

/// Sorted ablation names.
std::vector<std::string> ablation_names(const std::set<Ablation>& ablations);

/// Everything the per-example pipeline needs, already materialized.
struct PipelineInputs {
  const Dataset* pool = nullptr;
  const Dataset* eval = nullptr;
  const EmbeddingIndex* pool_vectors = nullptr;  // null only for bm25
  const EmbeddingIndex* eval_vectors = nullptr;  // keyed by eval ids
  const EmbeddingIndex* label_vectors = nullptr;
  std::shared_ptr<TextEmbedder> embedder;        // nearest-label fallback
  std::shared_ptr<CompletionBackend> backend;
  std::shared_ptr<TokenCounter> counter;         // saturate mode
};

struct PipelineSettings {
  RetrievalConfig retrieval;
  PromptSpec prompt;
  std::set<Ablation> ablations;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 16;
  double temperature = 0.0;
  std::vector<std::string> stop{"\n"};
  std::size_t concurrency = 4;
  bool dump_prompts = false;
};

struct PipelineOutput {
  /// In eval order. When `aborted` is set only finished examples appear.
  std::vector<Record> records;
  std::vector<std::string> prompt_dump;  // JSONL lines, eval order
  std::map<std::string, std::size_t> notes;
  std::optional<std::string> aborted;
};

/// retrieve, resample, saturate or fixed m, shuffle, order, obfuscate,
/// render, complete, map, record. Per-example HTTP, budget and generation
/// failures are recorded against the example; anything else stops the run
/// and is reported in `aborted` with the example id.
PipelineOutput run_pipeline(const PipelineInputs& inputs, const PipelineSettings& settings);

/// Predicts the label of the single nearest pool example.
std::vector<Record> knn1_records(const Dataset& pool, const EmbeddingIndex& pool_vectors,
                                 const Dataset& eval, const EmbeddingIndex& eval_vectors);

struct BaselineResult {
  std::vector<Record> records;
  Metrics metrics;
};

/// knn1_records scored over pool labels plus eval gold labels.
BaselineResult knn1_baseline(const Dataset& pool, const EmbeddingIndex& pool_vectors,
                             const Dataset& eval, const EmbeddingIndex& eval_vectors);

/// Label set a run is scored against.
std::set<std::string> scoring_labels(const Dataset& pool, const Dataset& eval);

/// Pool and eval for one seed.
struct SeedSplit {
  Split split;
  std::set<std::string> labels;  // scoring labels
};

/// Loads datasets and embeddings once and runs the configured seeds.
class Experiment {
 public:
  /// `transport` is used by the http embedding source, the http backend
  /// and the external token counter; defaults to the httplib transport.
  explicit Experiment(ExperimentConfig cfg, std::shared_ptr<HttpTransport> transport = nullptr);

  const ExperimentConfig& config() const noexcept { return cfg_; }

  SeedSplit split_for(std::uint64_t seed) const;

  RunReport run(std::uint64_t seed);
  std::vector<RunReport> run_all();

  /// 1-NN over the same split, reported with strategy "knn1".
  RunReport baseline(std::uint64_t seed);

 private:
  const EmbeddingIndex& vectors_for(const Dataset& ds, bool eval_side);
  std::shared_ptr<TextEmbedder> fallback_embedder() const;
  RunReport report_shell(const SeedSplit& s, std::uint64_t seed, std::string strategy) const;

  ExperimentConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  Dataset train_;
  std::optional<Dataset> test_;
  std::optional<SplitFile> split_file_;
  std::optional<EmbeddingIndex> pool_file_;
  std::optional<EmbeddingIndex> eval_file_;
  // Computed vectors for the mock and http sources, one cache per side.
  EmbeddingIndex pool_cache_;
  EmbeddingIndex eval_cache_;
  std::shared_ptr<TextEmbedder> embedder_;
  std::shared_ptr<CompletionBackend> backend_;
  std::shared_ptr<TokenCounter> counter_;
};

/// The {none, obfuscate, resample, shuffle} variants of a config; each
/// replaces the base ablation set and suffixes the name.
std::vector<ExperimentConfig> ablation_variants(const ExperimentConfig& cfg);

/// Every variant times every seed, variant-major.
std::vector<RunReport> run_ablation_sweep(const ExperimentConfig& cfg,
                                          std::shared_ptr<HttpTransport> transport = nullptr);

}  // namespace ricl
