#include <doctest.h>

#include <algorithm>
#include <atomic>

#include "ricl/error.hpp"
#include "ricl/experiment.hpp"
#include "support.hpp"

using namespace ricl;

namespace {

ExperimentConfig toy_config(const testing::TempDir& dir, std::size_t classes = 3, std::size_t per_class = 12) {
  testing::write_synthetic(dir / "train.jsonl", classes, per_class, 5);
  ExperimentConfig cfg;
  cfg.name = "toy";
  cfg.dataset.train = dir / "train.jsonl";
  cfg.dataset.heldout = true;
  cfg.k = 4;
  cfg.retrieval.m = 6;
  cfg.embeddings.dim = 16;
  cfg.backend.concurrency = 3;
  cfg.sync_budget();
  return cfg;
}

class FailingBackend : public CompletionBackend {
 public:
  explicit FailingBackend(std::string bad) : bad_(std::move(bad)) {}
  std::string complete(const CompletionRequest&, const PromptContext& ctx) override {
    if (ctx.query_id == bad_) throw std::logic_error("backend exploded");
    return ctx.demos->front().example.label;
  }

 private:
  std::string bad_;
};

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config JSON round trip and fingerprint") {
  testing::TempDir dir;
  ExperimentConfig cfg = toy_config(dir);
  cfg.ablations = {Ablation::shuffle, Ablation::obfuscate};
  cfg.class_drop = "class_2";
  cfg.seeds = {1, 2, 3};
  auto back = experiment_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(fingerprint(back) == fingerprint(cfg));
  CHECK(fingerprint(cfg).size() == 64);
  ExperimentConfig other = cfg;
  other.k = 5;
  CHECK(fingerprint(other) != fingerprint(cfg));
  CHECK(ablation_names(cfg.ablations) == std::vector<std::string>{"obfuscate", "shuffle"});
}

TEST_CASE("config rejects unknown keys and inconsistent settings") {
  CHECK_THROWS_AS(experiment_config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json({{"dataset", {{"trian", "x"}}}}), ConfigError);
  ExperimentConfig cfg;
  cfg.dataset.train = "x.jsonl";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // no eval source
  cfg.dataset.heldout = true;
  cfg.sync_budget();
  CHECK_NOTHROW(cfg.validate());
  cfg.dataset.test = "y.jsonl";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.dataset.test.reset();
  cfg.backend.kind = BackendKind::scripted_mock;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.backend.kind = BackendKind::oracle_mock;
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("knn1 on a four-point pool matches brute force") {
  Dataset pool("p", {{"a", "t", "x"}, {"b", "t", "x"}, {"c", "t", "y"}, {"d", "t", "y"}});
  EmbeddingIndex pv;
  pv.add("a", EmbeddingVector({1, 0}));
  pv.add("b", EmbeddingVector({0.9, 0.1}));
  pv.add("c", EmbeddingVector({0, 1}));
  pv.add("d", EmbeddingVector({-1, 0.2}));
  Dataset eval("e", {{"q1", "t", "x"}, {"q2", "t", "y"}, {"q3", "t", "x"}});
  EmbeddingIndex ev;
  ev.add("q1", EmbeddingVector({0.95, 0.05}));
  ev.add("q2", EmbeddingVector({-0.9, 0.3}));
  ev.add("q3", EmbeddingVector({0.1, 1}));
  auto res = knn1_baseline(pool, pv, eval, ev);
  REQUIRE(res.records.size() == 3);
  for (const auto& r : res.records) {
    // brute force over the four points
    std::string best;
    double best_sim = -2;
    for (const auto& [id, v] : pv.entries()) {
      double s = testing::naive_cosine(testing::to_vec(v), testing::to_vec(ev.at(r.id)));
      if (s > best_sim) best_sim = s, best = id;
    }
    CHECK(r.demo_ids == std::vector<std::string>{best});
    CHECK(*r.mapped == pool.find(best)->label);
  }
  CHECK(res.metrics.accuracy == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("knn1 is perfect when eval texts duplicate pool texts") {
  Dataset pool("p", {{"a", "book a flight", "x"}, {"b", "check balance", "y"}, {"c", "lost card", "z"}});
  Dataset eval("e", {{"q1", "lost card", "z"}, {"q2", "book a flight", "x"}});
  EmbeddingIndex pv, ev;
  for (const auto& e : pool.examples()) pv.add(e.id, mock_embed(e.text, 32, 1));
  for (const auto& e : eval.examples()) ev.add(e.id, mock_embed(e.text, 32, 1));
  CHECK(knn1_baseline(pool, pv, eval, ev).metrics.accuracy == 1.0);
}

TEST_CASE("runs are deterministic and m = 1 equals the knn1 baseline") {
  testing::TempDir dir;
  ExperimentConfig cfg = toy_config(dir);
  Experiment a(cfg), b(cfg);
  CHECK(serialize_report(a.run(1)) == serialize_report(b.run(1)));

  cfg.retrieval.m = 1;
  cfg.sync_budget();
  Experiment one(cfg);
  auto run = one.run(2);
  auto base = one.baseline(2);
  REQUIRE(run.records.size() == base.records.size());
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    CHECK(run.records[i].mapped == base.records[i].mapped);
    CHECK(run.records[i].demo_ids == base.records[i].demo_ids);
  }
  CHECK(run.metrics.accuracy == base.metrics.accuracy);
  CHECK(base.strategy == "knn1");
}

TEST_CASE("eval limit, class drop and split") {
  testing::TempDir dir;
  ExperimentConfig cfg = toy_config(dir, 4, 10);
  cfg.dataset.eval_limit = 5;
  cfg.class_drop = "class_3";
  Experiment e(cfg);
  auto s = e.split_for(1);
  CHECK(s.split.eval.size() == 5);
  CHECK_FALSE(s.split.pool.has_label("class_3"));
  CHECK(s.split.pool.size() == 12);
  auto r = e.run(1);
  CHECK(r.records.size() == 5);
  CHECK(r.complete);
}

TEST_CASE("an unexpected failure aborts with a partial record list") {
  Dataset pool("p", {{"a", "t a", "x"}, {"b", "t b", "y"}});
  Dataset eval("e", {{"q0", "q zero", "x"}, {"q1", "q one", "y"}, {"q2", "q two", "x"}});
  EmbeddingIndex pv, ev;
  for (const auto& e : pool.examples()) pv.add(e.id, mock_embed(e.text, 8, 0));
  for (const auto& e : eval.examples()) ev.add(e.id, mock_embed(e.text, 8, 0));
  PipelineInputs in;
  in.pool = &pool;
  in.eval = &eval;
  in.pool_vectors = &pv;
  in.eval_vectors = &ev;
  in.backend = std::make_shared<FailingBackend>("q1");
  PipelineSettings st;
  st.retrieval.m = 2;
  st.prompt.budget.m = 2;
  st.concurrency = 1;
  auto out = run_pipeline(in, st);
  REQUIRE(out.aborted);
  CHECK(out.aborted->find("q1") != std::string::npos);
  CHECK(out.aborted->find("backend exploded") != std::string::npos);
  CHECK(out.records.size() < 3);
  for (const auto& r : out.records) CHECK(r.id != "q1");
}

TEST_CASE("generation failures are recorded per example") {
  Dataset pool("p", {{"a", "t a", "x"}, {"b", "t b", "y"}});
  Dataset eval("e", {{"q0", "q zero", "x"}, {"q1", "q one", "y"}});
  EmbeddingIndex pv, ev;
  for (const auto& e : pool.examples()) pv.add(e.id, mock_embed(e.text, 8, 0));
  for (const auto& e : eval.examples()) ev.add(e.id, mock_embed(e.text, 8, 0));
  PipelineInputs in;
  in.pool = &pool;
  in.eval = &eval;
  in.pool_vectors = &pv;
  in.eval_vectors = &ev;
  in.backend = std::make_shared<ScriptedMockBackend>(std::map<std::string, std::string>{{"q0", "x"}, {"q1", "  "}});
  PipelineSettings st;
  st.retrieval.m = 2;
  st.prompt.budget.m = 2;
  auto out = run_pipeline(in, st);
  CHECK_FALSE(out.aborted);
  REQUIRE(out.records.size() == 2);
  CHECK(out.records[0].mapped == "x");
  CHECK(out.records[1].failed());
  CHECK(out.records[1].error.has_value());
}

TEST_CASE("ablation variants") {
  testing::TempDir dir;
  ExperimentConfig cfg = toy_config(dir);
  cfg.seeds = {1, 2, 3};
  auto vs = ablation_variants(cfg);
  REQUIRE(vs.size() == 4);
  CHECK(vs[0].ablations.empty());
  CHECK(vs[3].ablations == std::set<Ablation>{Ablation::shuffle});
  auto reports = run_ablation_sweep(cfg);
  CHECK(reports.size() == 12);
  for (const auto& r : reports) CHECK(r.complete);
}

}  // TEST_SUITE
