#include "ricl/experiment.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <stdexcept>

#include "ricl/embed_io.hpp"
#include "ricl/error.hpp"
#include "ricl/io.hpp"
#include "ricl/rng.hpp"

namespace ricl {

std::string_view to_string(Ablation a) noexcept {
  switch (a) {
    case Ablation::obfuscate: return "obfuscate";
    case Ablation::resample: return "resample";
    case Ablation::shuffle: return "shuffle";
  }
  return "?";
}

std::string_view to_string(EmbeddingSource s) noexcept {
  switch (s) {
    case EmbeddingSource::file: return "file";
    case EmbeddingSource::mock: return "mock";
    case EmbeddingSource::http: return "http";
  }
  return "?";
}

std::string_view to_string(MetricChoice m) noexcept {
  switch (m) {
    case MetricChoice::accuracy: return "accuracy";
    case MetricChoice::macro_f1: return "macro_f1";
    case MetricChoice::both: return "both";
  }
  return "?";
}

Ablation parse_ablation(std::string_view name) {
  if (name == "obfuscate") return Ablation::obfuscate;
  if (name == "resample") return Ablation::resample;
  if (name == "shuffle") return Ablation::shuffle;
  throw ConfigError("unknown ablation '" + std::string(name) + "'");
}

EmbeddingSource parse_embedding_source(std::string_view name) {
  if (name == "file") return EmbeddingSource::file;
  if (name == "mock") return EmbeddingSource::mock;
  if (name == "http") return EmbeddingSource::http;
  throw ConfigError("unknown embedding source '" + std::string(name) + "'");
}

MetricChoice parse_metric(std::string_view name) {
  if (name == "accuracy") return MetricChoice::accuracy;
  if (name == "macro_f1") return MetricChoice::macro_f1;
  if (name == "both") return MetricChoice::both;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

std::vector<std::string> ablation_names(const std::set<Ablation>& ablations) {
  std::vector<std::string> out;
  for (auto a : ablations) out.emplace_back(to_string(a));
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------- config

std::filesystem::path ExperimentConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void ExperimentConfig::sync_budget() {
  if (retrieval.m) {
    prompt.budget.mode = BudgetMode::fixed;
    prompt.budget.m = *retrieval.m;
  } else {
    prompt.budget.mode = BudgetMode::saturate;
  }
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seed list must not be empty");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (dataset.train.empty()) throw ConfigError("dataset.train is required");
  if (!dataset.split_file) {
    if (dataset.heldout && dataset.test) {
      throw ConfigError("dataset.heldout and dataset.test are mutually exclusive");
    }
    if (!dataset.heldout && !dataset.test) {
      throw ConfigError("dataset needs a test file, heldout = true, or a split file");
    }
  }
  if (dataset.eval_limit && *dataset.eval_limit == 0) throw ConfigError("dataset.eval_limit must be >= 1");
  retrieval.validate();
  prompt.validate();
  if ((prompt.budget.mode == BudgetMode::saturate) != retrieval.saturate() ||
      (retrieval.m && prompt.budget.m != *retrieval.m)) {
    throw ConfigError("prompt budget disagrees with retrieval.m");
  }
  if (prompt.estimator == EstimatorKind::external && (!tokenizer || tokenizer->url.empty())) {
    throw ConfigError("the external estimator needs tokenizer.url");
  }
  switch (embeddings.source) {
    case EmbeddingSource::file:
      if (!embeddings.pool) throw ConfigError("embeddings.pool is required for the file source");
      break;
    case EmbeddingSource::mock:
      if (embeddings.dim < 2) throw ConfigError("embeddings.dim must be >= 2");
      break;
    case EmbeddingSource::http:
      if (embeddings.endpoint.url.empty()) throw ConfigError("embeddings.endpoint.url is required");
      if (embeddings.batch_size < 1) throw ConfigError("embeddings.batch_size must be >= 1");
      break;
  }
  switch (backend.kind) {
    case BackendKind::scripted_mock:
      if (!backend.fixture) throw ConfigError("backend.fixture is required for the scripted backend");
      break;
    case BackendKind::http:
      if (backend.endpoint.url.empty()) throw ConfigError("backend.endpoint.url is required");
      break;
    case BackendKind::oracle_mock:
      break;
  }
  if (backend.max_new_tokens < 1) throw ConfigError("backend.max_new_tokens must be >= 1");
  if (!(backend.temperature >= 0.0)) throw ConfigError("backend.temperature must be >= 0");
  if (backend.concurrency < 1) throw ConfigError("backend.concurrency must be >= 1");
  if (class_drop && class_drop->empty()) throw ConfigError("class_drop must not be empty");
}

namespace {

nlohmann::json opt_path(const std::optional<std::filesystem::path>& p) {
  return p ? nlohmann::json(p->generic_string()) : nlohmann::json(nullptr);
}

std::optional<std::filesystem::path> read_opt_path(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return std::filesystem::path(j[key].get<std::string>());
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["k"] = cfg.k;
  j["seeds"] = cfg.seeds;
  j["dataset"] = {
      {"train", cfg.dataset.train.generic_string()},
      {"test", opt_path(cfg.dataset.test)},
      {"split_file", opt_path(cfg.dataset.split_file)},
      {"format", cfg.dataset.format
                     ? nlohmann::json(*cfg.dataset.format == DatasetFormat::csv ? "csv" : "jsonl")
                     : nlohmann::json(nullptr)},
      {"fields",
       {{"text", cfg.dataset.fields.text},
        {"label", cfg.dataset.fields.label},
        {"labels", cfg.dataset.fields.labels},
        {"id", cfg.dataset.fields.id}}},
      {"heldout", cfg.dataset.heldout},
      {"single_label_filter", cfg.dataset.single_label_filter},
      {"eval_limit", cfg.dataset.eval_limit ? nlohmann::json(*cfg.dataset.eval_limit)
                                            : nlohmann::json(nullptr)}};
  j["retrieval"] = to_json(cfg.retrieval);
  j["prompt"] = to_json(cfg.prompt);
  j["tokenizer"] = cfg.tokenizer ? endpoint_to_json(*cfg.tokenizer) : nlohmann::json(nullptr);
  j["embeddings"] = {{"source", to_string(cfg.embeddings.source)},
                     {"pool", opt_path(cfg.embeddings.pool)},
                     {"eval", opt_path(cfg.embeddings.eval)},
                     {"dim", cfg.embeddings.dim},
                     {"seed", cfg.embeddings.mock_seed},
                     {"endpoint", endpoint_to_json(cfg.embeddings.endpoint)},
                     {"batch_size", cfg.embeddings.batch_size}};
  j["backend"] = {{"kind", to_string(cfg.backend.kind)},
                  {"fixture", opt_path(cfg.backend.fixture)},
                  {"endpoint", endpoint_to_json(cfg.backend.endpoint)},
                  {"chat", cfg.backend.chat},
                  {"max_new_tokens", cfg.backend.max_new_tokens},
                  {"temperature", cfg.backend.temperature},
                  {"stop", cfg.backend.stop},
                  {"concurrency", cfg.backend.concurrency}};
  j["ablations"] = ablation_names(cfg.ablations);
  j["class_drop"] = cfg.class_drop ? nlohmann::json(*cfg.class_drop) : nlohmann::json(nullptr);
  j["metric"] = to_string(cfg.metric);
  j["std"] = to_string(cfg.std_kind);
  j["prompt_dump"] = opt_path(cfg.prompt_dump);
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  reject_unknown(j,
                 {"name", "k", "seeds", "seed", "dataset", "retrieval", "prompt", "tokenizer",
                  "embeddings", "backend", "ablations", "class_drop", "metric", "std", "prompt_dump"},
                 "experiment config");
  try {
    cfg.name = j.value("name", cfg.name);
    cfg.k = j.value("k", cfg.k);
    if (j.contains("seeds")) {
      cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } else if (j.contains("seed")) {
      cfg.seeds = {j["seed"].get<std::uint64_t>()};
    }
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      reject_unknown(d,
                     {"train", "test", "split_file", "format", "fields", "heldout",
                      "single_label_filter", "eval_limit"},
                     "dataset");
      cfg.dataset.train = d.value("train", "");
      cfg.dataset.test = read_opt_path(d, "test");
      cfg.dataset.split_file = read_opt_path(d, "split_file");
      if (d.contains("format") && !d["format"].is_null()) {
        cfg.dataset.format = parse_dataset_format(d["format"].get<std::string>());
      }
      if (d.contains("fields")) {
        const auto& f = d["fields"];
        reject_unknown(f, {"text", "label", "labels", "id"}, "dataset.fields");
        cfg.dataset.fields.text = f.value("text", cfg.dataset.fields.text);
        cfg.dataset.fields.label = f.value("label", cfg.dataset.fields.label);
        cfg.dataset.fields.labels = f.value("labels", cfg.dataset.fields.labels);
        cfg.dataset.fields.id = f.value("id", cfg.dataset.fields.id);
      }
      cfg.dataset.heldout = d.value("heldout", false);
      cfg.dataset.single_label_filter = d.value("single_label_filter", false);
      if (d.contains("eval_limit") && !d["eval_limit"].is_null()) {
        cfg.dataset.eval_limit = d["eval_limit"].get<std::size_t>();
      }
    }
    if (j.contains("retrieval")) cfg.retrieval = retrieval_config_from_json(j["retrieval"]);
    if (j.contains("prompt")) cfg.prompt = prompt_spec_from_json(j["prompt"]);
    if (j.contains("tokenizer") && !j["tokenizer"].is_null()) {
      cfg.tokenizer = endpoint_from_json(j["tokenizer"]);
    }
    if (j.contains("embeddings")) {
      const auto& e = j["embeddings"];
      reject_unknown(e, {"source", "pool", "eval", "dim", "seed", "endpoint", "batch_size"},
                     "embeddings");
      if (e.contains("source")) cfg.embeddings.source = parse_embedding_source(e["source"].get<std::string>());
      cfg.embeddings.pool = read_opt_path(e, "pool");
      cfg.embeddings.eval = read_opt_path(e, "eval");
      cfg.embeddings.dim = e.value("dim", cfg.embeddings.dim);
      cfg.embeddings.mock_seed = e.value("seed", cfg.embeddings.mock_seed);
      if (e.contains("endpoint")) cfg.embeddings.endpoint = endpoint_from_json(e["endpoint"]);
      cfg.embeddings.batch_size = e.value("batch_size", cfg.embeddings.batch_size);
    }
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      reject_unknown(b,
                     {"kind", "fixture", "endpoint", "chat", "max_new_tokens", "temperature", "stop",
                      "concurrency"},
                     "backend");
      if (b.contains("kind")) cfg.backend.kind = parse_backend(b["kind"].get<std::string>());
      cfg.backend.fixture = read_opt_path(b, "fixture");
      if (b.contains("endpoint")) cfg.backend.endpoint = endpoint_from_json(b["endpoint"]);
      cfg.backend.chat = b.value("chat", false);
      cfg.backend.max_new_tokens = b.value("max_new_tokens", cfg.backend.max_new_tokens);
      cfg.backend.temperature = b.value("temperature", cfg.backend.temperature);
      cfg.backend.stop = b.value("stop", cfg.backend.stop);
      cfg.backend.concurrency = b.value("concurrency", cfg.backend.concurrency);
    }
    if (j.contains("ablations")) {
      for (const auto& a : j["ablations"]) cfg.ablations.insert(parse_ablation(a.get<std::string>()));
    }
    if (j.contains("class_drop") && !j["class_drop"].is_null()) {
      cfg.class_drop = j["class_drop"].get<std::string>();
    }
    if (j.contains("metric")) cfg.metric = parse_metric(j["metric"].get<std::string>());
    if (j.contains("std")) cfg.std_kind = parse_std_kind(j["std"].get<std::string>());
    cfg.prompt_dump = read_opt_path(j, "prompt_dump");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  cfg.sync_budget();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = experiment_config_from_json(j);
  cfg.base_dir = path.parent_path();
  return cfg;
}

std::string fingerprint(const ExperimentConfig& cfg) {
  return sha256_hex(to_json(cfg).dump());
}

// -------------------------------------------------------------- pipeline

namespace {

struct Slot {
  bool done = false;
  Record record;
  std::string dump_line;
  std::optional<std::string> abort;
  bool resample_flagged = false;
  bool shuffle_single = false;
  std::size_t shuffle_unchanged = 0;
};

}  // namespace

PipelineOutput run_pipeline(const PipelineInputs& in, const PipelineSettings& st) {
  if (!in.pool || !in.eval || !in.backend) {
    throw std::invalid_argument("run_pipeline: pool, eval and backend are required");
  }
  const bool embedding_strategy = st.retrieval.strategy != Strategy::bm25;
  if (embedding_strategy && (!in.pool_vectors || !in.eval_vectors)) {
    throw std::invalid_argument("run_pipeline: embedding strategies need pool and eval vectors");
  }
  const bool saturating = st.retrieval.saturate();
  if (saturating && !in.counter) throw std::invalid_argument("run_pipeline: saturation needs a token counter");
  if (st.concurrency < 1) throw std::invalid_argument("run_pipeline: concurrency must be >= 1");

  const Retriever retriever(*in.pool, in.pool_vectors, st.retrieval, st.seed);
  const bool obfuscate = st.ablations.count(Ablation::obfuscate) > 0;
  const bool resample = st.ablations.count(Ablation::resample) > 0;
  const bool shuffle = st.ablations.count(Ablation::shuffle) > 0;
  std::optional<ObfuscationMap> obf;
  if (obfuscate) obf = ObfuscationMap::create(in.pool->labels(), derive_seed(st.seed, "obfuscate"));
  const LabelMapper mapper(obf ? obf->names() : in.pool->labels(), in.embedder,
                           obf ? nullptr : in.label_vectors);

  const auto& examples = in.eval->examples();
  std::vector<Slot> slots(examples.size());
  std::atomic<bool> stop{false};

  auto process = [&](std::size_t i) {
    if (stop.load()) return;
    const Example& q = examples[i];
    Slot& slot = slots[i];
    Record& rec = slot.record;
    rec.id = q.id;
    rec.gold = q.label;
    try {
      try {
        const Query query{q.id, q.text, embedding_strategy ? &in.eval_vectors->at(q.id) : nullptr};
        std::vector<Demonstration> candidates = retriever.retrieve(query);
        if (resample) {
          auto r = resample_by_class(candidates, *in.pool, derive_seed(st.seed, "resample", q.id),
                                     [&](const Example& ex) { return retriever.score(query, ex); });
          candidates = std::move(r.demos);
          slot.resample_flagged = !r.flagged.empty();
        }
        const std::uint64_t shuffle_seed = derive_seed(st.seed, "shuffle", q.id);
        const std::uint64_t order_seed = derive_seed(st.seed, "order", q.id);
        auto finalize = [&](const std::vector<Demonstration>& admitted) {
          std::vector<Demonstration> shown = admitted;
          if (shuffle) shown = shuffle_labels(shown, shuffle_seed).demos;
          shown = order(std::move(shown), st.prompt.ordering, order_seed);
          if (obf) shown = apply_obfuscation(std::move(shown), *obf);
          return shown;
        };
        std::vector<Demonstration> admitted;
        if (saturating) {
          admitted = saturate(
              candidates, st.prompt.budget, *in.counter,
              [&](const auto& a) { return render(finalize(a), q.text, st.prompt.layout); }, q.id);
        } else {
          admitted.assign(candidates.begin(),
                          candidates.begin() + static_cast<std::ptrdiff_t>(
                                                   std::min(candidates.size(), *st.retrieval.m)));
        }
        if (shuffle) {
          auto sr = shuffle_labels(admitted, shuffle_seed);
          slot.shuffle_single = sr.single_demo_warning;
          slot.shuffle_unchanged = sr.unchanged;
        }
        const std::vector<Demonstration> shown = finalize(admitted);
        CompletionRequest request{render(shown, q.text, st.prompt.layout), st.max_new_tokens,
                                  st.temperature, st.stop};
        for (const auto& d : shown) rec.demo_ids.push_back(d.example.id);
        if (st.dump_prompts) slot.dump_line = prompt_dump_record(q.id, request.prompt, shown).dump();
        rec.raw = in.backend->complete(request, PromptContext{q.id, &shown});
        MappedLabel mapped = mapper.map(rec.raw);
        rec.mapped = obf ? obf->inverse(mapped.label) : mapped.label;
        rec.via = mapped.via;
      } catch (const HttpError& e) {
        rec.error = e.what();
      } catch (const BudgetError& e) {
        rec.error = e.what();
      } catch (const GenerationError& e) {
        rec.error = e.what();
      }
      slot.done = true;
    } catch (const std::exception& e) {
      slot.abort = "example '" + q.id + "': " + e.what();
      stop.store(true);
    }
  };
  parallel_for(examples.size(), st.concurrency, process);

  PipelineOutput out;
  std::size_t flagged = 0, single = 0, unchanged = 0;
  for (auto& slot : slots) {
    if (slot.abort && !out.aborted) out.aborted = slot.abort;
    if (!slot.done) continue;
    out.records.push_back(std::move(slot.record));
    if (st.dump_prompts && !slot.dump_line.empty()) out.prompt_dump.push_back(std::move(slot.dump_line));
    flagged += slot.resample_flagged;
    single += slot.shuffle_single;
    unchanged += slot.shuffle_unchanged;
  }
  if (resample) out.notes["resample_flagged_examples"] = flagged;
  if (shuffle) {
    out.notes["shuffle_single_demo_examples"] = single;
    out.notes["shuffle_unchanged_positions"] = unchanged;
  }
  return out;
}

std::set<std::string> scoring_labels(const Dataset& pool, const Dataset& eval) {
  std::set<std::string> labels = pool.labels();
  labels.insert(eval.labels().begin(), eval.labels().end());
  return labels;
}

std::vector<Record> knn1_records(const Dataset& pool, const EmbeddingIndex& pool_vectors,
                                 const Dataset& eval, const EmbeddingIndex& eval_vectors) {
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& ex : pool.examples()) ids.push_back(ex.id);
  const EmbeddingIndex index = pool_vectors.subset(ids);
  std::vector<Record> records;
  records.reserve(eval.size());
  for (const auto& q : eval.examples()) {
    const auto nn = nearest(index, eval_vectors.at(q.id), 1);
    const Example& hit = *pool.find(nn.front().id);
    Record r;
    r.id = q.id;
    r.gold = q.label;
    r.raw = hit.label;
    r.mapped = hit.label;
    r.via = MappedVia::exact;
    r.demo_ids = {hit.id};
    records.push_back(std::move(r));
  }
  return records;
}

BaselineResult knn1_baseline(const Dataset& pool, const EmbeddingIndex& pool_vectors,
                             const Dataset& eval, const EmbeddingIndex& eval_vectors) {
  BaselineResult out;
  out.records = knn1_records(pool, pool_vectors, eval, eval_vectors);
  out.metrics = compute_metrics(out.records, scoring_labels(pool, eval));
  return out;
}

// ------------------------------------------------------------ experiment

namespace {

Dataset load_source(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  const auto resolved = cfg.resolve(path);
  const DatasetFormat format = cfg.dataset.format.value_or(format_from_path(resolved));
  if (!cfg.dataset.single_label_filter) return load_dataset(resolved, format, cfg.dataset.fields);
  auto result = filter_single_label(load_records(resolved, format, cfg.dataset.fields),
                                    resolved.stem().string());
  spdlog::info("{}: kept {} of {} single-label records ({:.1f}%)", resolved.string(), result.kept,
               result.total, 100.0 * result.retention);
  if (result.empty_warning) spdlog::warn("{}: no single-label records", resolved.string());
  result.dataset.require_classes(2);
  return std::move(result.dataset);
}

Dataset take_first(const Dataset& ds, std::size_t n) {
  if (ds.size() <= n) return ds;
  return Dataset(ds.name(), std::vector<Example>(ds.examples().begin(),
                                                 ds.examples().begin() + static_cast<std::ptrdiff_t>(n)));
}

std::filesystem::path dump_path_for(const std::filesystem::path& base, std::uint64_t seed,
                                    std::size_t n_seeds) {
  if (n_seeds <= 1) return base;
  auto p = base;
  p.replace_filename(base.stem().string() + ".seed" + std::to_string(seed) + base.extension().string());
  return p;
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg, std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  cfg_.sync_budget();
  cfg_.validate();
  if (!transport_) transport_ = make_default_transport();

  train_ = load_source(cfg_, cfg_.dataset.train);
  if (cfg_.dataset.test) test_ = load_source(cfg_, *cfg_.dataset.test);
  if (cfg_.dataset.split_file) split_file_ = read_split_file(cfg_.resolve(*cfg_.dataset.split_file));

  switch (cfg_.embeddings.source) {
    case EmbeddingSource::file:
      pool_file_ = load_embeddings(cfg_.resolve(*cfg_.embeddings.pool));
      if (cfg_.embeddings.eval) eval_file_ = load_embeddings(cfg_.resolve(*cfg_.embeddings.eval));
      if (!cfg_.embeddings.endpoint.url.empty()) {
        embedder_ = std::make_shared<HttpEmbedder>(transport_, cfg_.embeddings.endpoint);
      }
      break;
    case EmbeddingSource::mock:
      embedder_ = std::make_shared<MockEmbedder>(cfg_.embeddings.dim, cfg_.embeddings.mock_seed);
      break;
    case EmbeddingSource::http:
      embedder_ = std::make_shared<HttpEmbedder>(transport_, cfg_.embeddings.endpoint);
      break;
  }

  switch (cfg_.backend.kind) {
    case BackendKind::oracle_mock:
      backend_ = std::make_shared<OracleMockBackend>();
      break;
    case BackendKind::scripted_mock:
      backend_ = std::make_shared<ScriptedMockBackend>(
          ScriptedMockBackend::from_file(cfg_.resolve(*cfg_.backend.fixture)));
      break;
    case BackendKind::http:
      backend_ = std::make_shared<HttpCompletionBackend>(transport_, cfg_.backend.endpoint, cfg_.backend.chat);
      break;
  }

  if (cfg_.prompt.estimator == EstimatorKind::external) {
    counter_ = std::make_shared<ExternalTokenCounter>(transport_, *cfg_.tokenizer);
  } else {
    counter_ = std::make_shared<HeuristicTokenCounter>(cfg_.prompt.estimator);
  }
}

SeedSplit Experiment::split_for(std::uint64_t seed) const {
  SeedSplit out;
  Split& s = out.split;
  if (split_file_) {
    s = apply_split_file(*split_file_, train_, test_ ? &*test_ : nullptr);
  } else {
    s = sample_kshot(train_, cfg_.k, seed, cfg_.dataset.heldout);
    if (!cfg_.dataset.heldout) s.eval = *test_;
  }
  if (cfg_.class_drop) {
    if (!s.pool.has_label(*cfg_.class_drop)) {
      throw ConfigError("class_drop: label '" + *cfg_.class_drop + "' is not in the pool");
    }
    s.pool = drop_class(s.pool, *cfg_.class_drop);
    std::erase_if(s.shortfall, [&](const Shortfall& sf) { return sf.label == *cfg_.class_drop; });
  }
  if (cfg_.dataset.eval_limit) s.eval = take_first(s.eval, *cfg_.dataset.eval_limit);
  s.pool.require_classes(2);
  if (s.eval.empty()) throw DataError("the evaluation set is empty");
  out.labels = scoring_labels(s.pool, s.eval);
  return out;
}

const EmbeddingIndex& Experiment::vectors_for(const Dataset& ds, bool eval_side) {
  if (cfg_.embeddings.source == EmbeddingSource::file) {
    const EmbeddingIndex& index = eval_side && eval_file_ ? *eval_file_ : *pool_file_;
    // at() names the first id without a vector.
    for (const auto& ex : ds.examples()) index.at(ex.id);
    return index;
  }
  // Eval examples from a separate test file live in their own id space.
  EmbeddingIndex& cache = eval_side && test_ ? eval_cache_ : pool_cache_;
  std::vector<TextItem> missing;
  for (const auto& ex : ds.examples()) {
    if (!cache.contains(ex.id)) missing.push_back({ex.id, ex.text});
  }
  if (missing.empty()) return cache;
  spdlog::info("embedding {} texts", missing.size());
  EmbeddingIndex fresh = cfg_.embeddings.source == EmbeddingSource::http
                             ? fetch_embeddings(*transport_, cfg_.embeddings.endpoint, missing,
                                                cfg_.embeddings.batch_size)
                             : embed_all(*embedder_, missing);
  for (const auto& [id, vec] : fresh.entries()) cache.add(id, vec);
  return cache;
}

RunReport Experiment::report_shell(const SeedSplit& s, std::uint64_t seed, std::string strategy) const {
  RunReport r;
  r.fingerprint = fingerprint(cfg_);
  r.name = cfg_.name;
  r.dataset = train_.name();
  r.k = split_file_ ? split_file_->k : cfg_.k;
  r.seed = seed;
  r.strategy = std::move(strategy);
  r.ablations = ablation_names(cfg_.ablations);
  r.pool_size = s.split.pool.size();
  r.shortfall = s.split.shortfall;
  r.labels = s.labels;
  return r;
}

RunReport Experiment::run(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const SeedSplit s = split_for(seed);
  for (const auto& sf : s.split.shortfall) {
    spdlog::warn("class '{}' has only {} examples (k = {})", sf.label, sf.available, cfg_.k);
  }
  RunReport report = report_shell(s, seed, std::string(to_string(cfg_.retrieval.strategy)));

  PipelineInputs in;
  in.pool = &s.split.pool;
  in.eval = &s.split.eval;
  if (cfg_.retrieval.strategy != Strategy::bm25) {
    in.pool_vectors = &vectors_for(s.split.pool, false);
    in.eval_vectors = &vectors_for(s.split.eval, true);
  }
  if (pool_file_) in.label_vectors = &*pool_file_;
  in.embedder = embedder_;
  in.backend = backend_;
  in.counter = counter_;

  PipelineSettings st;
  st.retrieval = cfg_.retrieval;
  st.prompt = cfg_.prompt;
  st.ablations = cfg_.ablations;
  st.seed = seed;
  st.max_new_tokens = cfg_.backend.max_new_tokens;
  st.temperature = cfg_.backend.temperature;
  st.stop = cfg_.backend.stop;
  st.concurrency = cfg_.backend.concurrency;
  st.dump_prompts = cfg_.prompt_dump.has_value();

  spdlog::info("{} seed {}: {} eval examples, pool of {}", cfg_.name, seed, s.split.eval.size(),
               s.split.pool.size());
  PipelineOutput out = run_pipeline(in, st);
  report.records = std::move(out.records);
  report.notes = std::move(out.notes);
  if (out.aborted) {
    report.complete = false;
    report.error = *out.aborted;
    spdlog::error("{} seed {} aborted: {}", cfg_.name, seed, *out.aborted);
  }
  if (!report.records.empty()) report.metrics = compute_metrics(report.records, report.labels);
  if (cfg_.prompt_dump) {
    std::string lines;
    for (const auto& l : out.prompt_dump) lines += l + "\n";
    io::write_file(dump_path_for(cfg_.resolve(*cfg_.prompt_dump), seed, cfg_.seeds.size()), lines);
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (report.metrics.failure_count > 0) {
    spdlog::warn("{} seed {}: {} examples failed", cfg_.name, seed, report.metrics.failure_count);
  }
  switch (cfg_.metric) {
    case MetricChoice::accuracy:
      spdlog::info("{} seed {}: accuracy {:.4f}", cfg_.name, seed, report.metrics.accuracy);
      break;
    case MetricChoice::macro_f1:
      spdlog::info("{} seed {}: macro-F1 {:.4f}", cfg_.name, seed, report.metrics.macro_f1);
      break;
    case MetricChoice::both:
      spdlog::info("{} seed {}: accuracy {:.4f}, macro-F1 {:.4f}", cfg_.name, seed,
                   report.metrics.accuracy, report.metrics.macro_f1);
      break;
  }
  return report;
}

std::vector<RunReport> Experiment::run_all() {
  std::vector<RunReport> reports;
  for (auto seed : cfg_.seeds) reports.push_back(run(seed));
  return reports;
}

RunReport Experiment::baseline(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const SeedSplit s = split_for(seed);
  RunReport report = report_shell(s, seed, "knn1");
  report.ablations.clear();
  const EmbeddingIndex& pool_vectors = vectors_for(s.split.pool, false);
  const EmbeddingIndex& eval_vectors = vectors_for(s.split.eval, true);
  report.records = knn1_records(s.split.pool, pool_vectors, s.split.eval, eval_vectors);
  report.metrics = compute_metrics(report.records, report.labels);
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  spdlog::info("knn1 seed {}: accuracy {:.4f}, macro-F1 {:.4f}", seed, report.metrics.accuracy,
               report.metrics.macro_f1);
  return report;
}

std::vector<ExperimentConfig> ablation_variants(const ExperimentConfig& cfg) {
  std::vector<ExperimentConfig> out;
  ExperimentConfig none = cfg;
  none.ablations.clear();
  none.name = cfg.name + "-none";
  out.push_back(std::move(none));
  for (auto a : {Ablation::obfuscate, Ablation::resample, Ablation::shuffle}) {
    ExperimentConfig v = cfg;
    v.ablations = {a};
    v.name = cfg.name + "-" + std::string(to_string(a));
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<RunReport> run_ablation_sweep(const ExperimentConfig& cfg,
                                          std::shared_ptr<HttpTransport> transport) {
  std::vector<RunReport> reports;
  for (auto& variant : ablation_variants(cfg)) {
    if (variant.prompt_dump) {
      auto p = *variant.prompt_dump;
      p.replace_filename(p.stem().string() + "." + variant.name + p.extension().string());
      variant.prompt_dump = p;
    }
    Experiment e(std::move(variant), transport);
    for (auto& r : e.run_all()) reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace ricl
