#include "ricl/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>

#include "ricl/corpus.hpp"
#include "ricl/embed_io.hpp"
#include "ricl/embedder.hpp"
#include "ricl/error.hpp"
#include "ricl/experiment.hpp"
#include "ricl/io.hpp"
#include "ricl/report.hpp"
#include "ricl/text.hpp"

namespace ricl {

namespace {

namespace fs = std::filesystem;

void init_logging(bool quiet) {
  static const bool once = [] {
    spdlog::set_default_logger(spdlog::stderr_color_mt("ricl"));
    spdlog::set_pattern("[%l] %v");
    return true;
  }();
  (void)once;
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
}

struct SourceFlags {
  std::string dataset;
  std::string format;
  bool single_label_filter = false;
  std::string text_field = "text";
  std::string label_field = "label";
  std::string id_field = "id";

  FieldNames fields() const {
    FieldNames f;
    f.text = text_field;
    f.label = label_field;
    f.id = id_field;
    return f;
  }
  DatasetFormat resolved_format() const {
    return format.empty() ? format_from_path(dataset) : parse_dataset_format(format);
  }
};

void add_source_flags(CLI::App* sub, SourceFlags& f) {
  sub->add_option("--dataset", f.dataset, "Dataset file (JSONL or CSV)")->required();
  sub->add_option("--format", f.format, "jsonl or csv (default: by extension)");
  sub->add_flag("--single-label-filter", f.single_label_filter, "Keep only single-label records");
  sub->add_option("--text-field", f.text_field, "Text field name");
  sub->add_option("--label-field", f.label_field, "Label field name");
  sub->add_option("--id-field", f.id_field, "Id field name");
}

Dataset load_source(const SourceFlags& f) {
  const auto format = f.resolved_format();
  if (!f.single_label_filter) return load_dataset(f.dataset, format, f.fields());
  auto result = filter_single_label(load_records(f.dataset, format, f.fields()), fs::path(f.dataset).stem().string());
  spdlog::info("kept {} of {} records ({:.1f}%)", result.kept, result.total, 100.0 * result.retention);
  if (result.empty_warning) spdlog::warn("no single-label records");
  return std::move(result.dataset);
}

struct RunFlags {
  std::string config;
  std::string name;
  std::string dataset;
  std::string test;
  std::string split_file;
  bool heldout = false;
  std::optional<std::size_t> k;
  std::vector<std::uint64_t> seeds;
  std::string strategy;
  std::optional<std::size_t> m;
  bool saturate = false;
  std::optional<std::size_t> max_tokens;
  std::optional<std::size_t> per_class;
  std::optional<std::size_t> clusters;
  std::optional<double> dedup_threshold;
  std::optional<std::size_t> class_cap;
  std::string ordering;
  std::string template_file;
  std::string backend;
  std::string fixture;
  std::string endpoint;
  std::string model;
  std::string auth_env;
  std::string embeddings;
  std::string eval_embeddings;
  std::string embed_endpoint;
  std::string embed_model;
  std::vector<std::string> ablations;
  std::string drop_class;
  std::optional<std::size_t> concurrency;
  std::optional<std::size_t> eval_limit;
  std::string prompt_dump;
  std::string out;
};

void add_run_flags(CLI::App* sub, RunFlags& f, bool prompt_flags) {
  sub->add_option("--config", f.config, "Experiment config JSON");
  sub->add_option("--name", f.name, "Run name (report file prefix)");
  sub->add_option("--dataset", f.dataset, "Training dataset (pool source)");
  sub->add_option("--test", f.test, "Evaluation dataset");
  sub->add_option("--split-file", f.split_file, "Explicit pool/eval id lists");
  sub->add_flag("--heldout", f.heldout, "Evaluate on the unsampled remainder of --dataset");
  sub->add_option("--k", f.k, "Examples per class in the pool");
  sub->add_option("--seed", f.seeds, "Seed (repeatable)");
  sub->add_option("--embeddings", f.embeddings, "Pool embedding file, or 'mock'");
  sub->add_option("--eval-embeddings", f.eval_embeddings, "Eval embedding file (default: --embeddings)");
  sub->add_option("--embed-endpoint", f.embed_endpoint, "Embeddings endpoint URL");
  sub->add_option("--embed-model", f.embed_model, "Embeddings model name");
  sub->add_option("--auth-env", f.auth_env, "Environment variable holding the auth header value");
  sub->add_option("--drop-class", f.drop_class, "Remove a class from the pool");
  sub->add_option("--eval-limit", f.eval_limit, "Evaluate only the first n examples");
  sub->add_option("--out", f.out, "Output directory")->required();
  if (!prompt_flags) return;
  sub->add_option("--strategy", f.strategy, "nearest, bm25, balanced, clustered, dedup, class_capped");
  auto* m = sub->add_option("--m", f.m, "Demonstrations per prompt");
  auto* sat = sub->add_flag("--saturate", f.saturate, "Fill the prompt up to --max-tokens");
  m->excludes(sat);
  sub->add_option("--max-tokens", f.max_tokens, "Context budget for --saturate");
  sub->add_option("--per-class", f.per_class, "balanced/clustered: picks per group");
  sub->add_option("--clusters", f.clusters, "clustered: number of clusters");
  sub->add_option("--dedup-threshold", f.dedup_threshold, "dedup: cosine threshold");
  sub->add_option("--class-cap", f.class_cap, "class_capped: distinct classes");
  sub->add_option("--ordering", f.ordering, "ltm, mtl or random");
  sub->add_option("--template-file", f.template_file, "Prompt template JSON");
  sub->add_option("--backend", f.backend, "http, oracle or scripted");
  sub->add_option("--fixture", f.fixture, "scripted backend answers (JSON object)");
  sub->add_option("--endpoint", f.endpoint, "Completions endpoint URL");
  sub->add_option("--model", f.model, "Completions model name");
  sub->add_option("--concurrency", f.concurrency, "In-flight completions");
  sub->add_option("--ablation", f.ablations, "obfuscate, resample or shuffle (repeatable)");
  sub->add_option("--prompt-dump", f.prompt_dump, "Write rendered prompts as JSONL");
}

ExperimentConfig build_config(const RunFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_experiment_config(f.config);
  // Flag paths are relative to the working directory, not the config file.
  auto path = [&](const std::string& p) -> fs::path {
    return cfg.base_dir.empty() ? fs::path(p) : fs::absolute(p);
  };
  if (!f.name.empty()) cfg.name = f.name;
  if (!f.dataset.empty()) cfg.dataset.train = path(f.dataset);
  if (!f.test.empty()) {
    cfg.dataset.test = path(f.test);
    cfg.dataset.heldout = false;
  }
  if (!f.split_file.empty()) cfg.dataset.split_file = path(f.split_file);
  if (f.heldout) {
    cfg.dataset.heldout = true;
    cfg.dataset.test.reset();
  }
  if (f.eval_limit) cfg.dataset.eval_limit = *f.eval_limit;
  if (f.k) cfg.k = *f.k;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.strategy.empty()) cfg.retrieval.strategy = parse_strategy(f.strategy);
  if (f.m) cfg.retrieval.m = *f.m;
  if (f.saturate) cfg.retrieval.m.reset();
  if (f.max_tokens) cfg.prompt.budget.max_tokens = *f.max_tokens;
  if (f.per_class) cfg.retrieval.per_class = *f.per_class;
  if (f.clusters) cfg.retrieval.clusters = *f.clusters;
  if (f.dedup_threshold) cfg.retrieval.dedup_threshold = *f.dedup_threshold;
  if (f.class_cap) cfg.retrieval.class_cap = *f.class_cap;
  if (!f.ordering.empty()) cfg.prompt.ordering = parse_ordering(f.ordering);
  if (!f.template_file.empty()) {
    try {
      cfg.prompt.layout = prompt_template_from_json(nlohmann::json::parse(io::read_file(f.template_file)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(f.template_file + ": " + e.what());
    }
  }
  if (!f.backend.empty()) cfg.backend.kind = parse_backend(f.backend);
  if (!f.fixture.empty()) cfg.backend.fixture = path(f.fixture);
  if (!f.endpoint.empty()) cfg.backend.endpoint.url = f.endpoint;
  if (!f.model.empty()) cfg.backend.endpoint.model = f.model;
  if (!f.auth_env.empty()) {
    cfg.backend.endpoint.auth_env = f.auth_env;
    cfg.embeddings.endpoint.auth_env = f.auth_env;
  }
  if (f.concurrency) cfg.backend.concurrency = *f.concurrency;
  if (f.embeddings == "mock") {
    cfg.embeddings.source = EmbeddingSource::mock;
  } else if (!f.embeddings.empty()) {
    cfg.embeddings.source = EmbeddingSource::file;
    cfg.embeddings.pool = path(f.embeddings);
  }
  if (!f.eval_embeddings.empty()) cfg.embeddings.eval = path(f.eval_embeddings);
  if (!f.embed_endpoint.empty()) {
    cfg.embeddings.endpoint.url = f.embed_endpoint;
    if (f.embeddings.empty()) cfg.embeddings.source = EmbeddingSource::http;
  }
  if (!f.embed_model.empty()) cfg.embeddings.endpoint.model = f.embed_model;
  if (!f.ablations.empty()) {
    cfg.ablations.clear();
    for (const auto& a : f.ablations) cfg.ablations.insert(parse_ablation(a));
  }
  if (!f.drop_class.empty()) cfg.class_drop = f.drop_class;
  if (!f.prompt_dump.empty()) cfg.prompt_dump = path(f.prompt_dump);
  cfg.sync_budget();
  cfg.validate();
  return cfg;
}

/// Writes one JSON per report plus summary.csv; returns the exit code.
int write_reports(const fs::path& out, const std::vector<RunReport>& reports) {
  int code = 0;
  for (const auto& r : reports) {
    const fs::path file = out / (r.name + ".seed" + std::to_string(r.seed) + ".json");
    write_report(file, r);
    spdlog::info("wrote {}", file.string());
    if (!r.complete || r.metrics.failure_count > 0) code = 1;
  }
  io::write_file(out / "summary.csv", summary_csv(reports));
  return code;
}

std::vector<fs::path> expand_report_paths(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".json") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  return files;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::shared_ptr<HttpTransport> transport) {
  CLI::App app{"Retrieval-augmented in-context classification runner", "ricl"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors on stderr");

  SourceFlags ingest_src;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Validate and normalize a dataset");
  add_source_flags(ingest, ingest_src);
  ingest->add_option("--out", ingest_out, "Write the normalized dataset as JSONL");

  SourceFlags split_src;
  std::size_t split_k = 0;
  std::uint64_t split_seed = 0;
  bool split_heldout = false;
  std::string split_out;
  auto* split = app.add_subcommand("split", "Sample a K-shot pool and write a split file");
  add_source_flags(split, split_src);
  split->add_option("--k", split_k, "Examples per class")->required();
  split->add_option("--seed", split_seed, "Sampling seed")->required();
  split->add_flag("--heldout", split_heldout, "Record the remainder as the eval ids");
  split->add_option("--out", split_out, "Split file to write")->required();

  std::vector<std::string> embed_datasets;
  std::string embed_format, embed_in, embed_endpoint, embed_model, embed_auth, embed_out;
  std::size_t embed_dim = 0, embed_batch = 512;
  std::uint64_t embed_seed = 0;
  bool embed_labels = false;
  auto* embed = app.add_subcommand("embed", "Fetch, mock or convert embedding files");
  embed->add_option("--dataset", embed_datasets, "Dataset whose texts to embed (repeatable)");
  embed->add_option("--format", embed_format, "jsonl or csv (default: by extension)");
  embed->add_option("--embeddings", embed_in, "Existing embedding file to convert");
  embed->add_option("--endpoint", embed_endpoint, "Embeddings endpoint URL");
  embed->add_option("--model", embed_model, "Embeddings model name");
  embed->add_option("--auth-env", embed_auth, "Environment variable holding the auth header value");
  embed->add_option("--mock-dim", embed_dim, "Use the local mock embedder with this dimension");
  embed->add_option("--mock-seed", embed_seed, "Mock embedder seed");
  embed->add_option("--batch-size", embed_batch, "Texts per request");
  embed->add_flag("--with-labels", embed_labels, "Also embed class names as label::<name>");
  embed->add_option("--out", embed_out, "Output file (.jsonl for JSON lines, else binary)")->required();

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run an experiment for each seed");
  add_run_flags(run, run_flags, true);

  RunFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "Run the none/obfuscate/resample/shuffle sweep");
  add_run_flags(ablate, ablate_flags, true);

  RunFlags baseline_flags;
  auto* baseline = app.add_subcommand("baseline", "1-nearest-neighbour baseline");
  add_run_flags(baseline, baseline_flags, false);

  std::vector<std::string> report_inputs;
  std::string report_format = "csv", report_std = "population", report_out;
  bool report_check = false;
  auto* report = app.add_subcommand("report", "Summarize run reports");
  report->add_option("inputs", report_inputs, "Report files or directories")->required();
  report->add_option("--format", report_format, "csv or md")->check(CLI::IsMember({"csv", "md"}));
  report->add_option("--std", report_std, "population or sample")->check(CLI::IsMember({"population", "sample"}));
  report->add_flag("--check", report_check, "Fail when stored metrics differ from the records");
  report->add_option("--out", report_out, "Write here instead of stdout");

  std::vector<std::string> argv_store{"ricl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? 0 : 2;
  }
  init_logging(quiet);

  try {
    if (*ingest) {
      Dataset ds = load_source(ingest_src);
      ds.require_classes(2);
      spdlog::info("{}: {} examples, {} classes", ds.name(), ds.size(), ds.num_classes());
      if (!ingest_out.empty()) write_dataset_jsonl(ingest_out, ds);
      return 0;
    }
    if (*split) {
      Dataset ds = load_source(split_src);
      ds.require_classes(2);
      Split s = sample_kshot(ds, split_k, split_seed, split_heldout);
      for (const auto& sf : s.shortfall) {
        spdlog::warn("class '{}' has only {} examples", sf.label, sf.available);
      }
      write_split_file(split_out, split_file_of(s));
      spdlog::info("pool {} examples over {} classes, eval {}", s.pool.size(), s.pool.num_classes(),
                   s.eval.size());
      return 0;
    }
    if (*embed) {
      const int sources = !embed_in.empty() + !embed_endpoint.empty() + (embed_dim > 0);
      if (sources != 1) throw ConfigError("embed needs exactly one of --embeddings, --endpoint, --mock-dim");
      EmbeddingIndex index;
      if (!embed_in.empty()) {
        if (!embed_datasets.empty()) throw ConfigError("--dataset does not apply when converting");
        index = load_embeddings(embed_in);
      } else {
        std::vector<TextItem> items;
        std::set<std::string> labels;
        for (const auto& path : embed_datasets) {
          auto format = embed_format.empty() ? format_from_path(path) : parse_dataset_format(embed_format);
          Dataset ds = load_dataset(path, format);
          for (const auto& ex : ds.examples()) items.push_back({ex.id, ex.text});
          labels.insert(ds.labels().begin(), ds.labels().end());
        }
        if (embed_labels) {
          for (const auto& l : labels) items.push_back({label_key(l), text::label_as_text(l)});
        }
        if (items.empty()) throw ConfigError("nothing to embed: give --dataset");
        if (embed_dim > 0) {
          MockEmbedder mock(embed_dim, embed_seed);
          index = embed_all(mock, items);
          index.set_source_tag(mock.tag());
        } else {
          EndpointConfig cfg;
          cfg.url = embed_endpoint;
          cfg.model = embed_model;
          cfg.auth_env = embed_auth;
          auto t = transport ? transport : make_default_transport();
          index = fetch_embeddings(*t, cfg, items, embed_batch);
        }
      }
      write_embeddings(embed_out, index);
      spdlog::info("wrote {} vectors of dim {} to {}", index.size(), index.dim(), embed_out);
      return 0;
    }
    if (*run) {
      ExperimentConfig cfg = build_config(run_flags);
      Experiment e(cfg, transport);
      return write_reports(run_flags.out, e.run_all());
    }
    if (*ablate) {
      ExperimentConfig cfg = build_config(ablate_flags);
      auto reports = run_ablation_sweep(cfg, transport);
      const int code = write_reports(ablate_flags.out, reports);
      std::cerr << summary_markdown(reports, cfg.std_kind);
      return code;
    }
    if (*baseline) {
      ExperimentConfig cfg = build_config(baseline_flags);
      cfg.name += "-knn1";
      Experiment e(cfg, transport);
      std::vector<RunReport> reports;
      for (auto seed : cfg.seeds) reports.push_back(e.baseline(seed));
      return write_reports(baseline_flags.out, reports);
    }
    if (*report) {
      std::vector<RunReport> reports;
      int code = 0;
      for (const auto& path : expand_report_paths(report_inputs)) {
        reports.push_back(read_report(path));
        if (report_check && !reports.back().records.empty() &&
            !(recompute_metrics(reports.back()) == reports.back().metrics)) {
          spdlog::error("{}: stored metrics differ from the records", path.string());
          code = 1;
        }
      }
      const StdKind kind = parse_std_kind(report_std);
      const std::string text = report_format == "md" ? summary_markdown(reports, kind) : summary_csv(reports);
      if (report_out.empty()) {
        std::cout << text;
      } else {
        io::write_file(report_out, text);
      }
      return code;
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}

}  // namespace ricl
