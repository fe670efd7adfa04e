#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ricl/embed.hpp"
#include "ricl/http.hpp"

namespace ricl {

/// A text to embed, keyed by the id it will carry in the index.
struct TextItem {
  std::string id;
  std::string text;
};

/// Extracts embedding arrays from a response. Accepts a bare array of
/// arrays, `{"embeddings": [...]}`, or the `{"data": [{"embedding": [...],
/// "index": i}]}` shape (reordered by `index`).
std::vector<std::vector<double>> parse_embedding_response(const nlohmann::json& response,
                                                          std::size_t expected);

/// Embeds `items` through an embeddings endpoint. Requests carry
/// `{"input": [texts], "model": name}` in batches of `batch_size`, up to
/// `cfg.concurrency` in flight; the index is assembled in input order.
EmbeddingIndex fetch_embeddings(HttpTransport& transport, const EndpointConfig& cfg,
                                std::span<const TextItem> items, std::size_t batch_size = 512);

/// Online text -> vector source used where texts are not known ahead of
/// time (generated outputs, class names under obfuscation).
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::string tag() const = 0;
};

class MockEmbedder : public TextEmbedder {
 public:
  MockEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  EmbeddingVector embed(std::string_view text) override { return mock_embed(text, dim_, seed_); }
  std::string tag() const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Single-text requests against an embeddings endpoint, memoized.
class HttpEmbedder : public TextEmbedder {
 public:
  HttpEmbedder(std::shared_ptr<HttpTransport> transport, EndpointConfig cfg)
      : transport_(std::move(transport)), cfg_(std::move(cfg)) {}
  EmbeddingVector embed(std::string_view text) override;
  std::string tag() const override { return "http:" + cfg_.model; }

 private:
  std::shared_ptr<HttpTransport> transport_;
  EndpointConfig cfg_;
  std::mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
};

/// Embeds every item with `embedder` into a new index.
EmbeddingIndex embed_all(TextEmbedder& embedder, std::span<const TextItem> items);

}  // namespace ricl
