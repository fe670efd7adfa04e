#include "ricl/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ricl/text.hpp"

namespace ricl {

Bm25Stats Bm25Stats::build(const Dataset& pool, double k1, double b) {
  if (k1 < 0.0) throw std::invalid_argument("bm25: k1 must be >= 0");
  if (b < 0.0 || b > 1.0) throw std::invalid_argument("bm25: b must be in [0, 1]");
  Bm25Stats stats;
  stats.k1 = k1;
  stats.b = b;
  std::size_t total = 0;
  for (const auto& ex : pool.examples()) {
    auto tokens = text::bm25_tokens(ex.text);
    auto& tf = stats.term_freq[ex.id];
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, count] : tf) ++stats.doc_freq[term];
    stats.doc_len[ex.id] = tokens.size();
    total += tokens.size();
  }
  stats.n_docs = pool.size();
  stats.avg_len = stats.n_docs == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(stats.n_docs);
  return stats;
}

double Bm25Stats::idf(const std::string& term) const {
  auto it = doc_freq.find(term);
  const double df = it == doc_freq.end() ? 0.0 : static_cast<double>(it->second);
  const double n = static_cast<double>(n_docs);
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double bm25_score(const std::vector<std::string>& query_terms, const std::string& doc_id,
                  const Bm25Stats& stats) {
  auto doc_it = stats.term_freq.find(doc_id);
  if (doc_it == stats.term_freq.end()) {
    throw std::invalid_argument("bm25_score: unknown document '" + doc_id + "'");
  }
  const auto& tf_map = doc_it->second;
  const double dl = static_cast<double>(stats.doc_len.at(doc_id));
  // avg_len is 0 only when every document is empty, where tf is 0 anyway.
  const double len_ratio = stats.avg_len > 0.0 ? dl / stats.avg_len : 0.0;
  const double norm = stats.k1 * (1.0 - stats.b + stats.b * len_ratio);
  double score = 0.0;
  for (const auto& term : query_terms) {
    auto tf_it = tf_map.find(term);
    if (tf_it == tf_map.end()) continue;
    const double tf = static_cast<double>(tf_it->second);
    score += stats.idf(term) * tf * (stats.k1 + 1.0) / (tf + norm);
  }
  return score;
}

std::vector<Neighbor> bm25_rank(const Bm25Stats& stats, const std::string& query_text,
                                std::size_t m) {
  if (m == 0) throw std::invalid_argument("bm25_rank: m must be at least 1");
  const auto terms = text::bm25_tokens(query_text);
  std::vector<Neighbor> all;
  all.reserve(stats.n_docs);
  for (const auto& [id, tf] : stats.term_freq) all.push_back({id, bm25_score(terms, id, stats)});
  const std::size_t take = std::min(m, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    ranks_before);
  all.resize(take);
  return all;
}

}  // namespace ricl
