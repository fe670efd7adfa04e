#include "ricl/retrieve.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "ricl/error.hpp"
#include "ricl/rng.hpp"
#include "ricl/text.hpp"

namespace ricl {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::nearest: return "nearest";
    case Strategy::bm25: return "bm25";
    case Strategy::balanced: return "balanced";
    case Strategy::clustered: return "clustered";
    case Strategy::dedup: return "dedup";
    case Strategy::class_capped: return "class_capped";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::nearest, Strategy::bm25, Strategy::balanced, Strategy::clustered,
                     Strategy::dedup, Strategy::class_capped}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown retrieval strategy '" + std::string(name) + "'");
}

void RetrievalConfig::validate() const {
  const std::string name(to_string(strategy));
  // Each strategy parameter is required by its strategies and rejected elsewhere.
  auto check = [&](bool wanted, bool present, const char* param) {
    if (wanted && !present) throw ConfigError("strategy " + name + " requires '" + param + "'");
    if (!wanted && present) throw ConfigError("strategy " + name + " does not take '" + param + "'");
  };
  auto forbid = [&](bool present, const char* param) { check(false, present, param); };
  const bool grouped = strategy == Strategy::balanced || strategy == Strategy::clustered;
  check(grouped, per_class.has_value(), "per_class");
  check(strategy == Strategy::clustered, clusters.has_value(), "clusters");
  check(strategy == Strategy::dedup, dedup_threshold.has_value(), "dedup_threshold");
  check(strategy == Strategy::class_capped, class_cap.has_value(), "class_cap");
  if (strategy != Strategy::bm25) {
    forbid(bm25_k1.has_value(), "bm25_k1");
    forbid(bm25_b.has_value(), "bm25_b");
  }
  if (m && *m == 0) throw ConfigError("m must be at least 1");
  if (per_class && *per_class == 0) throw ConfigError("per_class must be at least 1");
  if (clusters && *clusters == 0) throw ConfigError("clusters must be at least 1");
  if (class_cap && *class_cap == 0) throw ConfigError("class_cap must be at least 1");
  if (dedup_threshold && !(*dedup_threshold > 0.0 && *dedup_threshold <= 1.0)) {
    throw ConfigError("dedup_threshold must be in (0, 1]");
  }
  if (bm25_k1 && *bm25_k1 < 0.0) throw ConfigError("bm25_k1 must be >= 0");
  if (bm25_b && !(*bm25_b >= 0.0 && *bm25_b <= 1.0)) throw ConfigError("bm25_b must be in [0, 1]");
  if (kmeans_max_iter == 0) throw ConfigError("kmeans_max_iter must be at least 1");
}

nlohmann::json to_json(const RetrievalConfig& cfg) {
  nlohmann::json j;
  j["strategy"] = to_string(cfg.strategy);
  if (cfg.m) {
    j["m"] = *cfg.m;
  } else {
    j["m"] = "saturate";
  }
  if (cfg.per_class) j["per_class"] = *cfg.per_class;
  if (cfg.clusters) j["clusters"] = *cfg.clusters;
  if (cfg.dedup_threshold) j["dedup_threshold"] = *cfg.dedup_threshold;
  if (cfg.class_cap) j["class_cap"] = *cfg.class_cap;
  if (cfg.bm25_k1) j["bm25_k1"] = *cfg.bm25_k1;
  if (cfg.bm25_b) j["bm25_b"] = *cfg.bm25_b;
  if (cfg.strategy == Strategy::clustered) j["kmeans_max_iter"] = cfg.kmeans_max_iter;
  return j;
}

RetrievalConfig retrieval_config_from_json(const nlohmann::json& j) {
  RetrievalConfig cfg;
  try {
    if (j.contains("strategy")) cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("m")) {
      const auto& m = j.at("m");
      if (m.is_string()) {
        if (m.get<std::string>() != "saturate") throw ConfigError("m must be a count or \"saturate\"");
        cfg.m.reset();
      } else {
        cfg.m = m.get<std::size_t>();
      }
    }
    if (j.contains("per_class")) cfg.per_class = j.at("per_class").get<std::size_t>();
    if (j.contains("clusters")) cfg.clusters = j.at("clusters").get<std::size_t>();
    if (j.contains("dedup_threshold")) cfg.dedup_threshold = j.at("dedup_threshold").get<double>();
    if (j.contains("class_cap")) cfg.class_cap = j.at("class_cap").get<std::size_t>();
    if (j.contains("bm25_k1")) cfg.bm25_k1 = j.at("bm25_k1").get<double>();
    if (j.contains("bm25_b")) cfg.bm25_b = j.at("bm25_b").get<double>();
    cfg.kmeans_max_iter = j.value("kmeans_max_iter", cfg.kmeans_max_iter);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("retrieval config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<Demonstration> dedup_filter(const std::vector<Demonstration>& ranked, double tau,
                                        const EmbeddingIndex& index,
                                        std::optional<std::size_t> limit) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("dedup_filter: tau must be in (0, 1]");
  std::vector<Demonstration> kept;
  std::vector<const EmbeddingVector*> kept_vectors;
  for (const auto& d : ranked) {
    if (limit && kept.size() >= *limit) break;
    const EmbeddingVector& v = index.at(d.example.id);
    bool duplicate = false;
    for (const auto* other : kept_vectors) {
      if (cosine(v, *other) >= tau) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      kept.push_back(d);
      kept_vectors.push_back(&v);
    }
  }
  return kept;
}

std::vector<Demonstration> class_capped_filter(const std::vector<Demonstration>& ranked,
                                               std::size_t cap, std::optional<std::size_t> limit) {
  if (cap == 0) throw std::invalid_argument("class_capped_filter: cap must be at least 1");
  std::set<std::string> admitted;
  std::vector<Demonstration> out;
  for (const auto& d : ranked) {
    if (limit && out.size() >= *limit) break;
    if (!admitted.count(d.example.label)) {
      if (admitted.size() >= cap) continue;
      admitted.insert(d.example.label);
    }
    out.push_back(d);
  }
  return out;
}

std::vector<Demonstration> grouped_select(const std::vector<Demonstration>& ranked,
                                          const std::function<std::size_t(const Example&)>& group_of,
                                          std::size_t per_group, std::optional<std::size_t> limit) {
  if (per_group == 0) throw std::invalid_argument("grouped_select: per_group must be at least 1");
  // Group order = order of each group's first (best-ranked) member.
  std::vector<std::size_t> group_order;
  std::unordered_map<std::size_t, std::vector<const Demonstration*>> members;
  for (const auto& d : ranked) {
    const std::size_t g = group_of(d.example);
    auto& list = members[g];
    if (list.empty()) group_order.push_back(g);
    if (list.size() < per_group) list.push_back(&d);
  }
  std::vector<Demonstration> out;
  for (std::size_t g : group_order) {
    for (const auto* d : members[g]) {
      if (limit && out.size() >= *limit) return out;
      out.push_back(*d);
    }
  }
  return out;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<std::size_t> kmeans(const std::vector<const EmbeddingVector*>& points, std::size_t k,
                                std::size_t max_iter, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be at least 1");
  const std::size_t n = points.size();
  if (n == 0) return {};
  k = std::min(k, n);
  const std::size_t dim = points.front()->dim();

  std::vector<std::vector<double>> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = points[i]->values();
    const double norm = points[i]->norm();
    if (!(norm > 0.0)) throw std::invalid_argument("kmeans: zero vector");
    data[i].resize(dim);
    for (std::size_t d = 0; d < dim; ++d) data[i][d] = v[d] / norm;
  }

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<std::vector<double>> centroids;
  centroids.push_back(data[rng.below(n)]);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(data[i], centroids.back()));
      total += closest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.unit() * total;
      double cumulative = 0.0;
      std::size_t last_positive = 0;
      bool found = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (closest[i] <= 0.0) continue;
        last_positive = i;
        cumulative += closest[i];
        if (target < cumulative) {
          pick = i;
          found = true;
          break;
        }
      }
      if (!found) pick = last_positive;
    } else {
      // Every point coincides with a centroid: remaining clusters duplicate.
      pick = rng.below(n);
    }
    centroids.push_back(data[pick]);
  }

  std::vector<std::size_t> assign(n, k);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(data[i], centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(data[i], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += data[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
  }
  return assign;
}

ResampleResult resample_by_class(const std::vector<Demonstration>& demos, const Dataset& pool,
                                 std::uint64_t seed,
                                 const std::function<double(const Example&)>& rescore) {
  auto by_label = pool.indices_by_label();
  std::map<std::string, std::vector<std::size_t>> slots;  // label -> positions in demos
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const std::string& label = demos[i].example.label;
    if (!pool.has_label(label)) {
      throw std::invalid_argument("resample_by_class: label '" + label + "' not in pool");
    }
    slots[label].push_back(i);
  }
  ResampleResult result;
  result.demos = demos;
  Rng rng(seed);
  for (const auto& [label, positions] : slots) {
    std::vector<std::size_t> members = by_label.at(label);
    const std::size_t need = positions.size();
    if (members.size() <= need) result.flagged.push_back(label);
    for (std::size_t i = 0; i < need; ++i) {
      std::size_t chosen;
      if (i < members.size()) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(members.size() - i));
        std::swap(members[i], members[j]);
        chosen = members[i];
      } else {
        chosen = members[rng.below(members.size())];
      }
      const Example& ex = pool.examples()[chosen];
      result.demos[positions[i]] = Demonstration{ex, rescore(ex)};
    }
  }
  return result;
}

Retriever::Retriever(Dataset pool, const EmbeddingIndex* pool_vectors, RetrievalConfig cfg,
                     std::uint64_t seed)
    : pool_(std::move(pool)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (pool_.empty()) throw std::invalid_argument("Retriever: empty pool");
  if (cfg_.strategy == Strategy::bm25) {
    bm25_ = Bm25Stats::build(pool_, cfg_.bm25_k1.value_or(1.5), cfg_.bm25_b.value_or(0.75));
  } else {
    if (pool_vectors == nullptr) {
      throw std::invalid_argument("Retriever: strategy " + std::string(to_string(cfg_.strategy)) +
                                  " needs pool embeddings");
    }
    std::vector<std::string> ids;
    ids.reserve(pool_.size());
    for (const auto& ex : pool_.examples()) ids.push_back(ex.id);
    index_ = pool_vectors->subset(ids);
  }
  if (cfg_.strategy == Strategy::clustered) {
    std::vector<const EmbeddingVector*> points;
    for (const auto& [id, vec] : index_.entries()) points.push_back(&vec);
    cluster_of_ = kmeans(points, *cfg_.clusters, cfg_.kmeans_max_iter, derive_seed(seed, "kmeans"));
  }
}

std::vector<Demonstration> Retriever::to_demos(const std::vector<Neighbor>& ranked) const {
  std::vector<Demonstration> out;
  out.reserve(ranked.size());
  for (const auto& n : ranked) out.push_back({*pool_.find(n.id), n.similarity});
  return out;
}

std::vector<Demonstration> Retriever::ranked_by_embedding(const Query& query, std::size_t m) const {
  if (query.vector == nullptr) {
    throw std::invalid_argument("query '" + query.id + "' has no embedding");
  }
  return to_demos(nearest(index_, *query.vector, m));
}

std::vector<Demonstration> Retriever::retrieve(const Query& query) const {
  const std::size_t all = pool_.size();
  const std::optional<std::size_t> limit = cfg_.m;
  switch (cfg_.strategy) {
    case Strategy::nearest:
      return ranked_by_embedding(query, limit.value_or(all));
    case Strategy::bm25:
      return to_demos(bm25_rank(*bm25_, query.text, limit.value_or(all)));
    case Strategy::dedup:
      return dedup_filter(ranked_by_embedding(query, all), *cfg_.dedup_threshold, index_, limit);
    case Strategy::class_capped:
      return class_capped_filter(ranked_by_embedding(query, all), *cfg_.class_cap, limit);
    case Strategy::balanced: {
      std::map<std::string, std::size_t> class_id;
      for (const auto& label : pool_.labels()) class_id.emplace(label, class_id.size());
      return grouped_select(
          ranked_by_embedding(query, all),
          [&](const Example& ex) { return class_id.at(ex.label); }, *cfg_.per_class, limit);
    }
    case Strategy::clustered: {
      std::unordered_map<std::string, std::size_t> cluster;
      for (std::size_t i = 0; i < pool_.size(); ++i) cluster.emplace(pool_.examples()[i].id, cluster_of_[i]);
      return grouped_select(
          ranked_by_embedding(query, all),
          [&](const Example& ex) { return cluster.at(ex.id); }, *cfg_.per_class, limit);
    }
  }
  throw ConfigError("unknown retrieval strategy");
}

double Retriever::score(const Query& query, const Example& example) const {
  if (cfg_.strategy == Strategy::bm25) {
    return bm25_score(text::bm25_tokens(query.text), example.id, *bm25_);
  }
  if (query.vector == nullptr) throw std::invalid_argument("query '" + query.id + "' has no embedding");
  return cosine(*query.vector, index_.at(example.id));
}

}  // namespace ricl
