#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ricl/corpus.hpp"
#include "ricl/embed.hpp"

namespace ricl {

/// Okapi BM25 collection statistics over a retrieval pool.
///
/// Documents are tokenized with text::bm25_tokens (lowercase, split on
/// non-alphanumerics).
struct Bm25Stats {
  std::unordered_map<std::string, std::size_t> doc_freq;
  std::unordered_map<std::string, std::size_t> doc_len;
  std::unordered_map<std::string, std::unordered_map<std::string, std::size_t>> term_freq;
  double avg_len = 0.0;
  std::size_t n_docs = 0;
  double k1 = 1.5;
  double b = 0.75;

  static Bm25Stats build(const Dataset& pool, double k1 = 1.5, double b = 0.75);

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(const std::string& term) const;
};

/// Sum over query terms (with repetition) of
/// idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl)).
/// Terms absent from the pool contribute 0.
double bm25_score(const std::vector<std::string>& query_terms, const std::string& doc_id,
                  const Bm25Stats& stats);

/// Every pool document scored against `query_text`, ranked by score
/// descending then id ascending, truncated to m.
std::vector<Neighbor> bm25_rank(const Bm25Stats& stats, const std::string& query_text,
                                std::size_t m);

}  // namespace ricl
