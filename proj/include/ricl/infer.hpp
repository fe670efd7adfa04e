#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ricl/embedder.hpp"
#include "ricl/http.hpp"
#include "ricl/retrieve.hpp"

namespace ricl {

/// Greedy decoding by default: temperature 0, 16 new tokens, stop at the
/// first newline.
struct CompletionRequest {
  std::string prompt;
  std::size_t max_new_tokens = 16;
  double temperature = 0.0;
  std::vector<std::string> stop{"\n"};

  void validate() const;
};

/// What a backend may know about a prompt beyond its text. Only the mock
/// backends read it.
struct PromptContext {
  std::string query_id;
  const std::vector<Demonstration>* demos = nullptr;  // as shown in the prompt
};

enum class BackendKind { http, oracle_mock, scripted_mock };

std::string_view to_string(BackendKind k) noexcept;
/// Accepts "http", "oracle", "oracle_mock", "scripted", "scripted_mock".
BackendKind parse_backend(std::string_view name);

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  /// Raw generation for the prompt. Must be safe to call concurrently.
  virtual std::string complete(const CompletionRequest& request, const PromptContext& context) = 0;
};

/// Answers with the label of the most similar demonstration in the prompt
/// (ties to the smaller id), read from the context rather than the text.
class OracleMockBackend : public CompletionBackend {
 public:
  std::string complete(const CompletionRequest& request, const PromptContext& context) override;
};

/// Fixture answers keyed by query id.
class ScriptedMockBackend : public CompletionBackend {
 public:
  explicit ScriptedMockBackend(std::map<std::string, std::string> answers)
      : answers_(std::move(answers)) {}
  /// Reads a JSON object mapping query id to answer.
  static ScriptedMockBackend from_file(const std::filesystem::path& path);

  /// Throws ConfigError when the fixture has no answer for the query.
  std::string complete(const CompletionRequest& request, const PromptContext& context) override;

 private:
  std::map<std::string, std::string> answers_;
};

/// Completions endpoint client.
///
/// Sends `{"model", "prompt", "max_tokens", "temperature", "stop"}` and
/// reads `choices[0].text`. With `chat` set the prompt travels as a single
/// user message and the reply is read from `choices[0].message.content`.
/// Retries follow the endpoint's policy; exhausting them throws HttpError.
class HttpCompletionBackend : public CompletionBackend {
 public:
  HttpCompletionBackend(std::shared_ptr<HttpTransport> transport, EndpointConfig cfg, bool chat = false)
      : transport_(std::move(transport)), cfg_(std::move(cfg)), chat_(chat) {}

  std::string complete(const CompletionRequest& request, const PromptContext& context) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
  EndpointConfig cfg_;
  bool chat_;
};

/// First non-blank line of a generation, cut at the earliest stop sequence.
std::string extract_prediction(std::string_view generated, const std::vector<std::string>& stop);

enum class MappedVia { exact, nearest_label };

std::string_view to_string(MappedVia v) noexcept;

struct MappedLabel {
  std::string label;
  MappedVia via = MappedVia::exact;

  bool operator==(const MappedLabel&) const = default;
};

/// Restricts free-form generations to the closed label set.
///
/// A generation whose match key (case-folded, trimmed, underscores read as
/// spaces) equals a label's key maps to that label. Otherwise the class
/// whose name embedding is closest by cosine wins, ties to the smaller
/// label. Class-name vectors come from `label_vectors` entries keyed
/// `label::<name>` when present, else from the embedder (underscores
/// replaced by spaces).
class LabelMapper {
 public:
  LabelMapper(std::set<std::string> labels, std::shared_ptr<TextEmbedder> embedder,
              const EmbeddingIndex* label_vectors = nullptr);

  /// Throws GenerationError on an empty generation, or when no exact match
  /// exists and no embedder is configured.
  MappedLabel map(std::string_view raw) const;

  const std::set<std::string>& labels() const noexcept { return labels_; }

 private:
  void ensure_label_vectors() const;

  std::set<std::string> labels_;
  std::map<std::string, std::string> by_key_;
  std::shared_ptr<TextEmbedder> embedder_;
  const EmbeddingIndex* file_vectors_;
  mutable std::once_flag vectors_once_;
  mutable std::vector<std::pair<std::string, EmbeddingVector>> label_vectors_;
};

/// Free-function form of LabelMapper::map.
MappedLabel map_output(std::string_view raw, const std::set<std::string>& labels,
                       std::shared_ptr<TextEmbedder> embedder,
                       const EmbeddingIndex* label_vectors = nullptr);

/// Fraction of mapped predictions that needed the nearest-label fallback;
/// 0 when there are none.
double mismatch_rate(const std::vector<MappedVia>& vias);

}  // namespace ricl
