#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ricl {

/// Dense text embedding. Components are finite 64-bit reals; vectors read
/// from disk hold exactly the stored 32-bit values.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws std::invalid_argument on an empty or non-finite vector.
  explicit EmbeddingVector(std::vector<double> values);

  /// Scales `values` to unit L2 norm. Throws on a zero vector.
  static EmbeddingVector unit(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double norm() const noexcept;
  /// True when |norm - 1| <= 1e-6.
  bool is_normalized() const noexcept { return normalized_; }

  bool operator==(const EmbeddingVector& other) const { return values_ == other.values_; }

 private:
  std::vector<double> values_;
  bool normalized_ = false;
};

/// a.b / (|a| |b|) clamped to [-1, 1]. Throws std::invalid_argument on a
/// dimension mismatch or an all-zero operand.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct Neighbor {
  std::string id;
  double similarity = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Ordering used for every ranked result: similarity descending, then id
/// ascending.
bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept;

/// Id -> vector map sharing one dimension. Entries keep insertion order so
/// a loaded file is written back byte for byte.
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(std::string source_tag = {}) : source_tag_(std::move(source_tag)) {}

  /// Throws DataError on a duplicate id or a dimension mismatch.
  void add(std::string id, EmbeddingVector vector);

  bool contains(std::string_view id) const;
  const EmbeddingVector* find(std::string_view id) const;
  /// Throws DataError naming the id when absent.
  const EmbeddingVector& at(std::string_view id) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& source_tag() const noexcept { return source_tag_; }
  void set_source_tag(std::string tag) { source_tag_ = std::move(tag); }

  const std::vector<std::pair<std::string, EmbeddingVector>>& entries() const noexcept {
    return entries_;
  }

  /// Index restricted to `ids`, in that order. Throws DataError naming the
  /// first missing id.
  EmbeddingIndex subset(std::span<const std::string> ids) const;

 private:
  std::string source_tag_;
  std::size_t dim_ = 0;
  std::vector<std::pair<std::string, EmbeddingVector>> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Exact top-min(m, |index|) by cosine, ties broken by ascending id.
std::vector<Neighbor> nearest(const EmbeddingIndex& index, const EmbeddingVector& query,
                              std::size_t m);

/// Deterministic stand-in for a sentence encoder.
///
/// Each lowercase alphanumeric token contributes a pseudo-random direction
/// derived from (token, seed, component), and the whole byte string adds a
/// smaller direction of its own, so texts sharing words are close while
/// distinct texts never coincide. The sum is unit-normalized. All hashing
/// is fixed-width 64-bit, independent of platform and call order.
EmbeddingVector mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

/// Key under which a class name's vector is stored in embedding files.
std::string label_key(std::string_view label);

}  // namespace ricl
