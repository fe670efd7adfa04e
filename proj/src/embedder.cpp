#include "ricl/embedder.hpp"

#include <algorithm>

#include "ricl/error.hpp"

namespace ricl {

std::vector<std::vector<double>> parse_embedding_response(const nlohmann::json& response,
                                                          std::size_t expected) {
  std::vector<std::vector<double>> out;
  try {
    if (response.is_array()) {
      out = response.get<std::vector<std::vector<double>>>();
    } else if (response.contains("embeddings")) {
      out = response.at("embeddings").get<std::vector<std::vector<double>>>();
    } else if (response.contains("data")) {
      const auto& data = response.at("data");
      out.resize(data.size());
      std::vector<char> filled(data.size(), 0);
      for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t slot = data[i].value("index", i);
        if (slot >= data.size() || filled[slot]) throw DataError("bad or repeated embedding index");
        out[slot] = data[i].at("embedding").get<std::vector<double>>();
        filled[slot] = 1;
      }
    } else {
      throw DataError("unrecognized embeddings response shape");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed embeddings response: ") + e.what());
  }
  if (out.size() != expected) {
    throw DataError("embeddings response has " + std::to_string(out.size()) + " vectors, expected " +
                    std::to_string(expected));
  }
  return out;
}

EmbeddingIndex fetch_embeddings(HttpTransport& transport, const EndpointConfig& cfg,
                                std::span<const TextItem> items, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("fetch_embeddings: batch size must be >= 1");
  const std::size_t batches = (items.size() + batch_size - 1) / batch_size;
  std::vector<std::vector<std::vector<double>>> results(batches);
  parallel_for(batches, cfg.concurrency, [&](std::size_t b) {
    const std::size_t begin = b * batch_size;
    const std::size_t end = std::min(items.size(), begin + batch_size);
    nlohmann::json input = nlohmann::json::array();
    for (std::size_t i = begin; i < end; ++i) input.push_back(items[i].text);
    nlohmann::json body{{"input", std::move(input)}, {"model", cfg.model}};
    results[b] = parse_embedding_response(post_json(transport, cfg, body), end - begin);
  });
  EmbeddingIndex index("http:" + cfg.model);
  std::size_t i = 0;
  for (auto& batch : results) {
    for (auto& values : batch) {
      try {
        index.add(items[i].id, EmbeddingVector(std::move(values)));
      } catch (const std::invalid_argument& e) {
        throw DataError("embedding for '" + items[i].id + "': " + e.what());
      }
      ++i;
    }
  }
  return index;
}

std::string MockEmbedder::tag() const {
  return "mock:dim=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_);
}

EmbeddingVector HttpEmbedder::embed(std::string_view text) {
  std::string key(text);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  nlohmann::json body{{"input", nlohmann::json::array({key})}, {"model", cfg_.model}};
  auto vectors = parse_embedding_response(post_json(*transport_, cfg_, body), 1);
  EmbeddingVector v(std::move(vectors.front()));
  std::lock_guard lock(mutex_);
  cache_.emplace(std::move(key), v);
  return v;
}

EmbeddingIndex embed_all(TextEmbedder& embedder, std::span<const TextItem> items) {
  EmbeddingIndex index(embedder.tag());
  for (const auto& item : items) index.add(item.id, embedder.embed(item.text));
  return index;
}

}  // namespace ricl
