#include "ricl/infer.hpp"

#include <algorithm>
#include <stdexcept>

#include "ricl/error.hpp"
#include "ricl/io.hpp"
#include "ricl/text.hpp"

namespace ricl {

void CompletionRequest::validate() const {
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
}

std::string_view to_string(BackendKind k) noexcept {
  switch (k) {
    case BackendKind::http: return "http";
    case BackendKind::oracle_mock: return "oracle";
    case BackendKind::scripted_mock: return "scripted";
  }
  return "?";
}

BackendKind parse_backend(std::string_view name) {
  if (name == "http") return BackendKind::http;
  if (name == "oracle" || name == "oracle_mock") return BackendKind::oracle_mock;
  if (name == "scripted" || name == "scripted_mock") return BackendKind::scripted_mock;
  throw ConfigError("unknown backend '" + std::string(name) + "'");
}

std::string OracleMockBackend::complete(const CompletionRequest&, const PromptContext& context) {
  if (context.demos == nullptr || context.demos->empty()) {
    throw GenerationError("oracle backend: prompt for '" + context.query_id + "' has no demonstrations");
  }
  const Demonstration* best = &context.demos->front();
  for (const auto& d : *context.demos) {
    if (d.similarity > best->similarity ||
        (d.similarity == best->similarity && d.example.id < best->example.id)) {
      best = &d;
    }
  }
  return best->example.label;
}

ScriptedMockBackend ScriptedMockBackend::from_file(const std::filesystem::path& path) {
  try {
    auto j = nlohmann::json::parse(io::read_file(path));
    return ScriptedMockBackend(j.get<std::map<std::string, std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": scripted fixture must map ids to strings (" + e.what() + ")");
  }
}

std::string ScriptedMockBackend::complete(const CompletionRequest&, const PromptContext& context) {
  auto it = answers_.find(context.query_id);
  if (it == answers_.end()) {
    throw ConfigError("scripted fixture has no answer for '" + context.query_id + "'");
  }
  return it->second;
}

std::string HttpCompletionBackend::complete(const CompletionRequest& request, const PromptContext&) {
  request.validate();
  nlohmann::json body{{"model", cfg_.model},
                      {"max_tokens", request.max_new_tokens},
                      {"temperature", request.temperature},
                      {"stop", request.stop}};
  if (chat_) {
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
  } else {
    body["prompt"] = request.prompt;
  }
  nlohmann::json reply = post_json(*transport_, cfg_, body);
  std::string generated;
  try {
    const auto& choice = reply.at("choices").at(0);
    generated = chat_ ? choice.at("message").at("content").get<std::string>()
                      : choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw HttpError(cfg_.url + ": unexpected completion response (" + e.what() + ")", 200, false);
  }
  return extract_prediction(generated, request.stop);
}

std::string extract_prediction(std::string_view generated, const std::vector<std::string>& stop) {
  std::size_t pos = 0;
  std::string_view line;
  while (pos <= generated.size()) {
    std::size_t end = generated.find('\n', pos);
    if (end == std::string_view::npos) end = generated.size();
    line = generated.substr(pos, end - pos);
    pos = end + 1;
    if (!text::trim(line).empty()) break;
    line = {};
  }
  std::size_t cut = line.size();
  for (const auto& s : stop) {
    if (s.empty()) continue;
    cut = std::min(cut, line.find(s));
  }
  std::string out(line.substr(0, cut));
  if (!out.empty() && out.back() == '\r') out.pop_back();
  return out;
}

std::string_view to_string(MappedVia v) noexcept {
  return v == MappedVia::exact ? "exact" : "nearest_label";
}

LabelMapper::LabelMapper(std::set<std::string> labels, std::shared_ptr<TextEmbedder> embedder,
                         const EmbeddingIndex* label_vectors)
    : labels_(std::move(labels)), embedder_(std::move(embedder)), file_vectors_(label_vectors) {
  if (labels_.empty()) throw std::invalid_argument("LabelMapper: empty label set");
  // std::set iterates ascending, so the first label per key is the smallest.
  for (const auto& label : labels_) by_key_.emplace(text::match_key(label), label);
}

void LabelMapper::ensure_label_vectors() const {
  std::call_once(vectors_once_, [this] {
    for (const auto& label : labels_) {
      const EmbeddingVector* v = file_vectors_ ? file_vectors_->find(label_key(label)) : nullptr;
      label_vectors_.emplace_back(label, v ? *v : embedder_->embed(text::label_as_text(label)));
    }
  });
}

MappedLabel LabelMapper::map(std::string_view raw) const {
  const std::string trimmed = text::trim(raw);
  if (trimmed.empty()) throw GenerationError("empty generation");
  if (auto it = by_key_.find(text::match_key(trimmed)); it != by_key_.end()) {
    return {it->second, MappedVia::exact};
  }
  if (!embedder_) {
    throw GenerationError("generation '" + trimmed + "' matches no label and no embedder is configured");
  }
  ensure_label_vectors();
  const EmbeddingVector query = embedder_->embed(trimmed);
  const std::string* best = nullptr;
  double best_sim = -2.0;
  for (const auto& [label, vec] : label_vectors_) {
    const double sim = cosine(query, vec);
    if (sim > best_sim) {  // strict: earlier (smaller) label keeps ties
      best_sim = sim;
      best = &label;
    }
  }
  return {*best, MappedVia::nearest_label};
}

MappedLabel map_output(std::string_view raw, const std::set<std::string>& labels,
                       std::shared_ptr<TextEmbedder> embedder, const EmbeddingIndex* label_vectors) {
  return LabelMapper(labels, std::move(embedder), label_vectors).map(raw);
}

double mismatch_rate(const std::vector<MappedVia>& vias) {
  if (vias.empty()) return 0.0;
  const auto mapped = std::count(vias.begin(), vias.end(), MappedVia::nearest_label);
  return static_cast<double>(mapped) / static_cast<double>(vias.size());
}

}  // namespace ricl
