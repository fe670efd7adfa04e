#include "ricl/embed.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ricl/error.hpp"
#include "ricl/rng.hpp"
#include "ricl/text.hpp"

namespace ricl {

namespace {

double squared_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("embedding vector must have dim >= 1");
  for (double x : values_) {
    if (!std::isfinite(x)) throw std::invalid_argument("embedding vector has a NaN/Inf component");
  }
  normalized_ = std::abs(norm() - 1.0) <= 1e-6;
}

EmbeddingVector EmbeddingVector::unit(std::vector<double> values) {
  double n = std::sqrt(squared_norm(values));
  if (!(n > 0.0)) throw std::invalid_argument("cannot normalize a zero vector");
  for (double& x : values) x /= n;
  return EmbeddingVector(std::move(values));
}

double EmbeddingVector::norm() const noexcept { return std::sqrt(squared_norm(values_)); }

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()) + ")");
  }
  auto av = a.values();
  auto bv = b.values();
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na += av[i] * av[i];
    nb += bv[i] * bv[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

void EmbeddingIndex::add(std::string id, EmbeddingVector vector) {
  if (entries_.empty()) {
    dim_ = vector.dim();
  } else if (vector.dim() != dim_) {
    throw DataError("embedding '" + id + "' has dim " + std::to_string(vector.dim()) +
                    ", index dim is " + std::to_string(dim_));
  }
  if (by_id_.count(id)) throw DataError("duplicate embedding id '" + id + "'");
  by_id_.emplace(id, entries_.size());
  entries_.emplace_back(std::move(id), std::move(vector));
}

bool EmbeddingIndex::contains(std::string_view id) const { return find(id) != nullptr; }

const EmbeddingVector* EmbeddingIndex::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &entries_[it->second].second;
}

const EmbeddingVector& EmbeddingIndex::at(std::string_view id) const {
  const EmbeddingVector* v = find(id);
  if (v == nullptr) {
    throw DataError("no embedding for id '" + std::string(id) + "'" +
                    (source_tag_.empty() ? "" : " in " + source_tag_));
  }
  return *v;
}

EmbeddingIndex EmbeddingIndex::subset(std::span<const std::string> ids) const {
  EmbeddingIndex out(source_tag_);
  for (const auto& id : ids) out.add(id, at(id));
  return out;
}

std::vector<Neighbor> nearest(const EmbeddingIndex& index, const EmbeddingVector& query,
                              std::size_t m) {
  if (m == 0) throw std::invalid_argument("nearest: m must be at least 1");
  if (index.empty()) throw std::invalid_argument("nearest: index is empty");
  if (query.dim() != index.dim()) {
    throw std::invalid_argument("nearest: query dim " + std::to_string(query.dim()) +
                                " != index dim " + std::to_string(index.dim()));
  }
  std::vector<Neighbor> all;
  all.reserve(index.size());
  for (const auto& [id, vec] : index.entries()) all.push_back({id, cosine(query, vec)});
  const std::size_t take = std::min(m, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    ranks_before);
  all.resize(take);
  return all;
}

namespace {

// Component in [-1, 1) for a feature hash.
double hashed_component(std::uint64_t feature, std::uint64_t seed, std::size_t i) {
  std::uint64_t h = mix64(feature ^ mix64(seed + 0x632be59bd9b4e019ULL * (i + 1)));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

EmbeddingVector mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("mock_embed: dim must be at least 2");
  std::vector<double> v(dim, 0.0);
  for (const auto& token : text::bm25_tokens(text)) {
    const std::uint64_t f = fnv1a64(token);
    for (std::size_t i = 0; i < dim; ++i) v[i] += hashed_component(f, seed, i);
  }
  const std::uint64_t whole = mix64(fnv1a64(text) ^ 0x5851f42d4c957f2dULL);
  for (std::size_t i = 0; i < dim; ++i) v[i] += 0.5 * hashed_component(whole, seed, i);
  return EmbeddingVector::unit(std::move(v));
}

std::string label_key(std::string_view label) { return "label::" + std::string(label); }

}  // namespace ricl
