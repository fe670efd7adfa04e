#include <doctest.h>

#include <algorithm>

#include "ricl/error.hpp"
#include "ricl/infer.hpp"
#include "ricl/text.hpp"
#include "support.hpp"

using namespace ricl;

namespace {

Demonstration demo(std::string id, std::string label, double sim) {
  return {{std::move(id), "t", std::move(label)}, sim};
}

// Counts calls so tests can see whether the fallback path ran.
class CountingEmbedder : public TextEmbedder {
 public:
  EmbeddingVector embed(std::string_view text) override {
    ++calls;
    return mock_embed(text, 16, 2);
  }
  std::string tag() const override { return "count"; }
  int calls = 0;
};

}  // namespace

TEST_SUITE("infer") {

TEST_CASE("oracle answers with the most similar shown demo") {
  OracleMockBackend oracle;
  std::vector<Demonstration> shown{demo("0", "greet", 0.2), demo("1", "bye", 0.9)};
  CHECK(oracle.complete({"p"}, {"q", &shown}) == "bye");
  std::vector<Demonstration> tied{demo("5", "b", 0.5), demo("3", "a", 0.5)};
  CHECK(oracle.complete({"p"}, {"q", &tied}) == "a");
  std::vector<Demonstration> none;
  CHECK_THROWS(oracle.complete({"p"}, {"q", &none}));
}

TEST_CASE("scripted backend looks answers up by id") {
  ScriptedMockBackend s(std::map<std::string, std::string>{{"q1", "greet"}});
  CHECK(s.complete({"p"}, {"q1", nullptr}) == "greet");
  CHECK_THROWS_AS(s.complete({"p"}, {"zz", nullptr}), ConfigError);
  testing::TempDir dir;
  testing::write_text(dir / "f.json", R"({"a": "x", "b": "y"})");
  auto f = ScriptedMockBackend::from_file(dir / "f.json");
  CHECK(f.complete({"p"}, {"b", nullptr}) == "y");
}

TEST_CASE("extract_prediction") {
  CHECK(extract_prediction("\n\n greet\nlabel: x", {"\n"}) == " greet");
  CHECK(extract_prediction("greet###more", {"###"}) == "greet");
  CHECK(extract_prediction("a STOP b\nc", {"\n", "STOP"}) == "a ");
  CHECK(extract_prediction("   \n\t\n", {"\n"}).find_first_not_of(" \t") == std::string::npos);
}

TEST_CASE("exact matching ignores case, padding and underscores") {
  std::set<std::string> labels{"transfer_money", "check_balance"};
  auto embedder = std::make_shared<CountingEmbedder>();
  LabelMapper m(labels, embedder);
  CHECK(m.map("Transfer Money ") == MappedLabel{"transfer_money", MappedVia::exact});
  CHECK(m.map("CHECK_BALANCE") == MappedLabel{"check_balance", MappedVia::exact});
  CHECK(embedder->calls == 0);
  CHECK_THROWS_AS(m.map(""), GenerationError);
  CHECK_THROWS_AS(m.map("  \n"), GenerationError);
  LabelMapper no_embedder(labels, nullptr);
  CHECK_THROWS_AS(no_embedder.map("wire funds"), GenerationError);
}

TEST_CASE("nearest-label fallback matches brute force") {
  std::set<std::string> labels{"card_lost", "balance", "transfer_money", "refund"};
  auto embedder = std::make_shared<CountingEmbedder>();
  LabelMapper m(labels, embedder);
  testing::Gen g(71);
  for (int i = 0; i < 200; ++i) {
    const std::string raw = g.sentence(1, 4);
    if (labels.count(raw)) continue;
    auto q = testing::to_vec(mock_embed(text::trim(raw), 16, 2));
    std::string best;
    long double best_sim = -2;
    for (const auto& l : labels) {
      auto s = testing::naive_cosine(testing::to_vec(mock_embed(text::label_as_text(l), 16, 2)), q);
      if (s > best_sim) {
        best_sim = s;
        best = l;
      }
    }
    auto got = m.map(raw);
    CHECK(got.via == MappedVia::nearest_label);
    CHECK(got.label == best);
  }
}

TEST_CASE("label vectors from a file take precedence") {
  EmbeddingIndex vecs;
  vecs.add(label_key("a"), EmbeddingVector({1, 0}));
  vecs.add(label_key("b"), EmbeddingVector({0, 1}));
  struct Fixed : TextEmbedder {
    EmbeddingVector embed(std::string_view) override { return EmbeddingVector({0.1, 1}); }
    std::string tag() const override { return "fixed"; }
  };
  auto got = map_output("something", {"a", "b"}, std::make_shared<Fixed>(), &vecs);
  CHECK(got == MappedLabel{"b", MappedVia::nearest_label});
}

TEST_CASE("property: mapping is total over the label set") {
  testing::Gen g(72);
  auto embedder = std::make_shared<MockEmbedder>(8, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::set<std::string> labels;
    const std::size_t n = g.size(1, 10);
    while (labels.size() < n) labels.insert(g.word());
    LabelMapper m(labels, embedder);
    for (int i = 0; i < 20; ++i) {
      auto got = m.map(g.sentence(1, 5));
      CHECK(labels.count(got.label) == 1);
    }
    for (const auto& l : labels) CHECK(m.map(l).via == MappedVia::exact);
  }
}

TEST_CASE("mismatch rate") {
  CHECK(mismatch_rate({}) == 0.0);
  CHECK(mismatch_rate({MappedVia::exact, MappedVia::exact}) == 0.0);
  CHECK(mismatch_rate({MappedVia::exact, MappedVia::nearest_label}) == 0.5);
}

TEST_CASE("backend names") {
  CHECK(parse_backend("oracle") == BackendKind::oracle_mock);
  CHECK(parse_backend("scripted_mock") == BackendKind::scripted_mock);
  CHECK_THROWS_AS(parse_backend("gpt"), ConfigError);
  CompletionRequest r;
  r.max_new_tokens = 0;
  CHECK_THROWS(r.validate());
}

}  // TEST_SUITE
