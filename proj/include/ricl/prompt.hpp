#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ricl/http.hpp"
#include "ricl/retrieve.hpp"

namespace ricl {

/// Prompt text layout. `{text}` and `{label}` are the only slots; slot
/// markers inside substituted values are never expanded.
struct PromptTemplate {
  std::string demo_pattern = "sentence: {text}\nlabel: {label}";
  std::string query_pattern = "sentence: {text}\nlabel:";
  std::string separator = "\n\n";
  std::optional<std::string> preamble;

  /// demo_pattern holds each slot exactly once; query_pattern holds
  /// {text} exactly once. Throws ConfigError otherwise.
  void validate() const;
};

enum class Ordering { ltm, mtl, random };
enum class BudgetMode { fixed, saturate };
enum class EstimatorKind { chars_div4, whitespace_x1_3, external };

std::string_view to_string(Ordering o) noexcept;
std::string_view to_string(BudgetMode m) noexcept;
std::string_view to_string(EstimatorKind e) noexcept;
Ordering parse_ordering(std::string_view name);
BudgetMode parse_budget_mode(std::string_view name);
EstimatorKind parse_estimator(std::string_view name);

struct Budget {
  BudgetMode mode = BudgetMode::fixed;
  std::size_t m = 20;                        // fixed mode
  std::size_t max_tokens = 2048;             // saturate mode
  std::size_t reserved_output_tokens = 32;   // saturate mode

  void validate() const;
};

struct PromptSpec {
  PromptTemplate layout;
  Ordering ordering = Ordering::ltm;
  Budget budget;
  EstimatorKind estimator = EstimatorKind::chars_div4;

  void validate() const;
};

nlohmann::json to_json(const PromptTemplate& t);
PromptTemplate prompt_template_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PromptSpec& spec);
PromptSpec prompt_spec_from_json(const nlohmann::json& j);

/// Display order. ltm: similarity ascending, so the most similar
/// demonstration sits next to the query. mtl: similarity descending.
/// random: seeded shuffle of the id-sorted list. Ties go to ascending id.
std::vector<Demonstration> order(std::vector<Demonstration> demos, Ordering ordering,
                                 std::uint64_t seed = 0);

/// chars_div4: ceil(UTF-8 bytes / 4). whitespace_x1_3: ceil(1.3 * words).
/// The external estimator needs a TokenCounter; asking for it here throws.
std::size_t estimate_tokens(std::string_view text, EstimatorKind kind);

class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  virtual std::size_t count(std::string_view text) = 0;
};

class HeuristicTokenCounter : public TokenCounter {
 public:
  explicit HeuristicTokenCounter(EstimatorKind kind);
  std::size_t count(std::string_view text) override { return estimate_tokens(text, kind_); }

 private:
  EstimatorKind kind_;
};

/// Exact counts from a tokenize endpoint. The request carries `model`,
/// `prompt` and `content` (covering the common server conventions); the
/// reply must hold `count` or a `tokens` array. Failures propagate.
class ExternalTokenCounter : public TokenCounter {
 public:
  ExternalTokenCounter(std::shared_ptr<HttpTransport> transport, EndpointConfig cfg)
      : transport_(std::move(transport)), cfg_(std::move(cfg)) {}
  std::size_t count(std::string_view text) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
  EndpointConfig cfg_;
};

/// Instantiates the template: preamble, demonstrations and query joined by
/// the separator.
std::string render(const std::vector<Demonstration>& ordered, std::string_view query_text,
                   const PromptTemplate& layout);

/// Builds the final prompt for an admitted set (applying any ablation
/// transforms and display ordering).
using PromptFinalizer = std::function<std::string(const std::vector<Demonstration>& admitted)>;

/// Greedy saturation: admits candidates in the given rank order while
/// tokens(finalize(admitted)) + reserved_output_tokens <= max_tokens, and
/// stops at the first candidate that does not fit. Throws BudgetError
/// carrying `query_id` when nothing fits.
std::vector<Demonstration> saturate(const std::vector<Demonstration>& ranked, const Budget& budget,
                                    TokenCounter& counter, const PromptFinalizer& finalize,
                                    std::string_view query_id);

/// Saturation with the plain order-then-render finalizer.
std::vector<Demonstration> saturate(const std::vector<Demonstration>& ranked, const PromptSpec& spec,
                                    std::string_view query_text, std::string_view query_id,
                                    TokenCounter& counter, std::uint64_t order_seed = 0);

/// Bijection from class names to "Class 1".."Class N".
///
/// Labels are taken in sorted order and assigned a seeded permutation of
/// the numbers 1..N, so the map depends only on the label set and seed.
class ObfuscationMap {
 public:
  static ObfuscationMap create(const std::set<std::string>& labels, std::uint64_t seed);

  /// Throws Error when the label is not in the map.
  const std::string& forward(std::string_view label) const;
  /// Throws Error when the name is not in the map.
  const std::string& inverse(std::string_view name) const;

  const std::map<std::string, std::string>& mapping() const noexcept { return forward_; }
  std::set<std::string> names() const;
  std::size_t size() const noexcept { return forward_.size(); }

 private:
  std::map<std::string, std::string> forward_;
  std::map<std::string, std::string> inverse_;
};

std::vector<Demonstration> apply_obfuscation(std::vector<Demonstration> demos,
                                             const ObfuscationMap& map);

struct ShuffleResult {
  std::vector<Demonstration> demos;
  bool single_demo_warning = false;
  /// Positions whose label survived the shuffle.
  std::size_t unchanged = 0;
};

/// Permutes the labels across the demonstrations, inputs untouched.
///
/// Up to 64 seeded Fisher-Yates draws are tried; the first draw leaving no
/// position with its original label wins, otherwise the draw with the
/// fewest such positions (earliest on ties).
ShuffleResult shuffle_labels(const std::vector<Demonstration>& demos, std::uint64_t seed);

/// One line of the prompt dump sidecar.
nlohmann::ordered_json prompt_dump_record(std::string_view id, std::string_view prompt,
                                          const std::vector<Demonstration>& demos);

}  // namespace ricl
