#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ricl/bm25.hpp"
#include "ricl/corpus.hpp"
#include "ricl/embed.hpp"

namespace ricl {

/// A pool example chosen for a prompt together with its score against the
/// query (cosine, or BM25 score under the bm25 strategy).
struct Demonstration {
  Example example;
  double similarity = 0.0;

  bool operator==(const Demonstration&) const = default;
};

enum class Strategy { nearest, bm25, balanced, clustered, dedup, class_capped };

std::string_view to_string(Strategy s) noexcept;
/// Throws ConfigError on an unknown name.
Strategy parse_strategy(std::string_view name);

struct RetrievalConfig {
  Strategy strategy = Strategy::nearest;
  /// Number of demonstrations; nullopt means "saturate the prompt".
  std::optional<std::size_t> m = 20;
  std::optional<std::size_t> per_class;       // balanced, clustered
  std::optional<std::size_t> clusters;        // clustered
  std::optional<double> dedup_threshold;      // dedup, in (0, 1]
  std::optional<std::size_t> class_cap;       // class_capped
  std::optional<double> bm25_k1;              // bm25, default 1.5
  std::optional<double> bm25_b;               // bm25, default 0.75
  std::size_t kmeans_max_iter = 50;

  bool saturate() const noexcept { return !m.has_value(); }
  /// Throws ConfigError when a parameter is missing for the strategy, is
  /// given to a strategy that does not take it, or is out of range.
  void validate() const;
};

nlohmann::json to_json(const RetrievalConfig& cfg);
RetrievalConfig retrieval_config_from_json(const nlohmann::json& j);

/// Text of the query plus its embedding (required by every strategy except
/// bm25).
struct Query {
  std::string id;
  std::string text;
  const EmbeddingVector* vector = nullptr;
};

// Building blocks. Each takes candidates ranked most-similar first and
// returns a subsequence (or regrouping) of them; `limit` of nullopt means
// no cap.

/// Greedy scan in rank order; a candidate is dropped when its cosine to
/// any kept candidate is >= tau.
std::vector<Demonstration> dedup_filter(const std::vector<Demonstration>& ranked, double tau,
                                        const EmbeddingIndex& index,
                                        std::optional<std::size_t> limit = std::nullopt);

/// Walks the ranking and stops admitting new classes once `cap` distinct
/// classes are present, still filling from admitted classes.
std::vector<Demonstration> class_capped_filter(const std::vector<Demonstration>& ranked,
                                               std::size_t cap,
                                               std::optional<std::size_t> limit = std::nullopt);

/// Groups are ordered by their best-ranked member; up to `per_group`
/// members of each group are emitted in rank order, group after group.
std::vector<Demonstration> grouped_select(const std::vector<Demonstration>& ranked,
                                          const std::function<std::size_t(const Example&)>& group_of,
                                          std::size_t per_group,
                                          std::optional<std::size_t> limit = std::nullopt);

/// Lloyd's k-means over unit-normalized points with k-means++ seeding.
/// Returns the cluster of each point. k is clamped to the point count.
std::vector<std::size_t> kmeans(const std::vector<const EmbeddingVector*>& points, std::size_t k,
                                std::size_t max_iter, std::uint64_t seed);

struct ResampleResult {
  std::vector<Demonstration> demos;
  /// Classes whose pool members could not yield a different draw (class
  /// size <= demos needed); draws beyond the class size reuse examples.
  std::vector<std::string> flagged;
};

/// Replaces each demonstration, in place, with a uniformly drawn pool
/// example of the same class, without replacement within the output.
/// Similarities are recomputed with `rescore`.
ResampleResult resample_by_class(const std::vector<Demonstration>& demos, const Dataset& pool,
                                 std::uint64_t seed,
                                 const std::function<double(const Example&)>& rescore);

/// Selects candidate demonstrations for queries under one configuration.
///
/// The pool, its vectors (restricted to pool ids) and any per-pool state
/// (BM25 statistics, k-means clusters) are fixed at construction; calls to
/// retrieve() are const and safe to run concurrently. Results come back in
/// admission order: most similar first for nearest and bm25, grouped order
/// for balanced and clustered.
class Retriever {
 public:
  /// `pool_vectors` must cover every pool id for embedding strategies and
  /// may be null for bm25. `seed` drives k-means initialisation.
  Retriever(Dataset pool, const EmbeddingIndex* pool_vectors, RetrievalConfig cfg,
            std::uint64_t seed = 0);

  std::vector<Demonstration> retrieve(const Query& query) const;

  /// Score of one pool example against the query under this strategy.
  double score(const Query& query, const Example& example) const;

  const Dataset& pool() const noexcept { return pool_; }
  const RetrievalConfig& config() const noexcept { return cfg_; }
  const EmbeddingIndex& pool_index() const noexcept { return index_; }
  /// Cluster id per pool example (clustered strategy only).
  const std::vector<std::size_t>& clusters() const noexcept { return cluster_of_; }

 private:
  std::vector<Demonstration> ranked_by_embedding(const Query& query, std::size_t m) const;
  std::vector<Demonstration> to_demos(const std::vector<Neighbor>& ranked) const;

  Dataset pool_;
  RetrievalConfig cfg_;
  EmbeddingIndex index_;
  std::optional<Bm25Stats> bm25_;
  std::vector<std::size_t> cluster_of_;
};

}  // namespace ricl
