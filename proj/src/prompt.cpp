#include "ricl/prompt.hpp"

#include <array>
#include <algorithm>
#include <numeric>

#include "ricl/error.hpp"
#include "ricl/rng.hpp"
#include "ricl/text.hpp"

namespace ricl {

namespace {

constexpr std::string_view kTextSlot = "{text}";
constexpr std::string_view kLabelSlot = "{label}";

std::size_t occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

// Single left-to-right pass so substituted values are never rescanned.
void expand(std::string& out, std::string_view pattern, std::string_view text,
            std::optional<std::string_view> label) {
  std::size_t pos = 0;
  while (pos < pattern.size()) {
    std::size_t t = pattern.find(kTextSlot, pos);
    std::size_t l = label ? pattern.find(kLabelSlot, pos) : std::string_view::npos;
    std::size_t next = std::min(t, l);
    if (next == std::string_view::npos) {
      out.append(pattern.substr(pos));
      return;
    }
    out.append(pattern.substr(pos, next - pos));
    if (next == t) {
      out.append(text);
      pos = next + kTextSlot.size();
    } else {
      out.append(*label);
      pos = next + kLabelSlot.size();
    }
  }
}

template <typename E, std::size_t N>
E parse_enum(std::string_view name, const std::array<E, N>& values, const char* what) {
  for (E v : values) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

}  // namespace

void PromptTemplate::validate() const {
  if (occurrences(demo_pattern, kTextSlot) != 1 || occurrences(demo_pattern, kLabelSlot) != 1) {
    throw ConfigError("demo_pattern must contain {text} and {label} exactly once");
  }
  if (occurrences(query_pattern, kTextSlot) != 1) {
    throw ConfigError("query_pattern must contain {text} exactly once");
  }
}

std::string_view to_string(Ordering o) noexcept {
  switch (o) {
    case Ordering::ltm: return "ltm";
    case Ordering::mtl: return "mtl";
    case Ordering::random: return "random";
  }
  return "?";
}

std::string_view to_string(BudgetMode m) noexcept {
  return m == BudgetMode::fixed ? "fixed" : "saturate";
}

std::string_view to_string(EstimatorKind e) noexcept {
  switch (e) {
    case EstimatorKind::chars_div4: return "chars_div4";
    case EstimatorKind::whitespace_x1_3: return "whitespace_x1_3";
    case EstimatorKind::external: return "external";
  }
  return "?";
}

Ordering parse_ordering(std::string_view name) {
  return parse_enum(name, std::array{Ordering::ltm, Ordering::mtl, Ordering::random}, "ordering");
}

BudgetMode parse_budget_mode(std::string_view name) {
  return parse_enum(name, std::array{BudgetMode::fixed, BudgetMode::saturate}, "budget mode");
}

EstimatorKind parse_estimator(std::string_view name) {
  return parse_enum(name,
                    std::array{EstimatorKind::chars_div4, EstimatorKind::whitespace_x1_3,
                               EstimatorKind::external},
                    "token estimator");
}

void Budget::validate() const {
  if (mode == BudgetMode::fixed && m == 0) throw ConfigError("fixed budget needs m >= 1");
  if (reserved_output_tokens < 1) throw ConfigError("reserved_output_tokens must be >= 1");
  if (mode == BudgetMode::saturate && max_tokens <= reserved_output_tokens) {
    throw ConfigError("max_tokens must exceed reserved_output_tokens");
  }
}

void PromptSpec::validate() const {
  layout.validate();
  budget.validate();
}

nlohmann::json to_json(const PromptTemplate& t) {
  nlohmann::json j{{"demo_pattern", t.demo_pattern},
                   {"query_pattern", t.query_pattern},
                   {"separator", t.separator}};
  if (t.preamble) j["preamble"] = *t.preamble;
  return j;
}

PromptTemplate prompt_template_from_json(const nlohmann::json& j) {
  PromptTemplate t;
  try {
    t.demo_pattern = j.value("demo_pattern", t.demo_pattern);
    t.query_pattern = j.value("query_pattern", t.query_pattern);
    t.separator = j.value("separator", t.separator);
    if (j.contains("preamble") && !j["preamble"].is_null()) t.preamble = j["preamble"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("prompt template: ") + e.what());
  }
  t.validate();
  return t;
}

nlohmann::json to_json(const PromptSpec& spec) {
  return {{"template", to_json(spec.layout)},
          {"ordering", to_string(spec.ordering)},
          {"budget",
           {{"mode", to_string(spec.budget.mode)},
            {"m", spec.budget.m},
            {"max_tokens", spec.budget.max_tokens},
            {"reserved_output_tokens", spec.budget.reserved_output_tokens}}},
          {"estimator", to_string(spec.estimator)}};
}

PromptSpec prompt_spec_from_json(const nlohmann::json& j) {
  PromptSpec spec;
  try {
    if (j.contains("template")) spec.layout = prompt_template_from_json(j["template"]);
    if (j.contains("ordering")) spec.ordering = parse_ordering(j["ordering"].get<std::string>());
    if (j.contains("estimator")) spec.estimator = parse_estimator(j["estimator"].get<std::string>());
    if (j.contains("budget")) {
      const auto& b = j["budget"];
      if (b.contains("mode")) spec.budget.mode = parse_budget_mode(b["mode"].get<std::string>());
      spec.budget.m = b.value("m", spec.budget.m);
      spec.budget.max_tokens = b.value("max_tokens", spec.budget.max_tokens);
      spec.budget.reserved_output_tokens =
          b.value("reserved_output_tokens", spec.budget.reserved_output_tokens);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("prompt spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::vector<Demonstration> order(std::vector<Demonstration> demos, Ordering ordering,
                                 std::uint64_t seed) {
  auto by_id = [](const Demonstration& a, const Demonstration& b) {
    return a.example.id < b.example.id;
  };
  switch (ordering) {
    case Ordering::ltm:
      std::stable_sort(demos.begin(), demos.end(), [&](const auto& a, const auto& b) {
        if (a.similarity != b.similarity) return a.similarity < b.similarity;
        return by_id(a, b);
      });
      break;
    case Ordering::mtl:
      std::stable_sort(demos.begin(), demos.end(), [&](const auto& a, const auto& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return by_id(a, b);
      });
      break;
    case Ordering::random: {
      std::stable_sort(demos.begin(), demos.end(), by_id);
      Rng rng(seed);
      rng.shuffle(demos);
      break;
    }
  }
  return demos;
}

std::size_t estimate_tokens(std::string_view text, EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::chars_div4:
      return (text.size() + 3) / 4;
    case EstimatorKind::whitespace_x1_3:
      // Integer form of ceil(1.3 * n); avoids 1.3 * 10 = 13.000000000000002.
      return (text::whitespace_token_count(text) * 13 + 9) / 10;
    case EstimatorKind::external:
      break;
  }
  throw std::invalid_argument("the external estimator needs a tokenize endpoint");
}

HeuristicTokenCounter::HeuristicTokenCounter(EstimatorKind kind) : kind_(kind) {
  if (kind == EstimatorKind::external) {
    throw std::invalid_argument("HeuristicTokenCounter: external is not a heuristic");
  }
}

std::size_t ExternalTokenCounter::count(std::string_view text) {
  nlohmann::json body{{"model", cfg_.model}, {"prompt", text}, {"content", text}};
  nlohmann::json reply = post_json(*transport_, cfg_, body);
  if (reply.contains("count") && reply["count"].is_number_integer()) {
    return reply["count"].get<std::size_t>();
  }
  if (reply.contains("tokens") && reply["tokens"].is_array()) return reply["tokens"].size();
  throw DataError("tokenize response lacks 'count' or 'tokens'");
}

std::string render(const std::vector<Demonstration>& ordered, std::string_view query_text,
                   const PromptTemplate& layout) {
  std::string out;
  if (layout.preamble) {
    out += *layout.preamble;
    out += layout.separator;
  }
  for (const auto& d : ordered) {
    expand(out, layout.demo_pattern, d.example.text, std::string_view(d.example.label));
    out += layout.separator;
  }
  expand(out, layout.query_pattern, query_text, std::nullopt);
  return out;
}

std::vector<Demonstration> saturate(const std::vector<Demonstration>& ranked, const Budget& budget,
                                    TokenCounter& counter, const PromptFinalizer& finalize,
                                    std::string_view query_id) {
  if (budget.mode != BudgetMode::saturate) {
    throw std::invalid_argument("saturate called with a fixed budget");
  }
  budget.validate();
  std::vector<Demonstration> admitted;
  for (const auto& candidate : ranked) {
    admitted.push_back(candidate);
    if (counter.count(finalize(admitted)) + budget.reserved_output_tokens > budget.max_tokens) {
      admitted.pop_back();
      break;
    }
  }
  if (admitted.empty()) {
    throw BudgetError("no demonstration fits the " + std::to_string(budget.max_tokens) +
                          "-token budget for query '" + std::string(query_id) + "'",
                      std::string(query_id));
  }
  return admitted;
}

std::vector<Demonstration> saturate(const std::vector<Demonstration>& ranked, const PromptSpec& spec,
                                    std::string_view query_text, std::string_view query_id,
                                    TokenCounter& counter, std::uint64_t order_seed) {
  return saturate(
      ranked, spec.budget, counter,
      [&](const std::vector<Demonstration>& admitted) {
        return render(order(admitted, spec.ordering, order_seed), query_text, spec.layout);
      },
      query_id);
}

ObfuscationMap ObfuscationMap::create(const std::set<std::string>& labels, std::uint64_t seed) {
  std::vector<std::size_t> numbers(labels.size());
  std::iota(numbers.begin(), numbers.end(), std::size_t{1});
  Rng rng(seed);
  rng.shuffle(numbers);
  ObfuscationMap map;
  std::size_t i = 0;
  for (const auto& label : labels) {
    std::string name = "Class " + std::to_string(numbers[i++]);
    map.forward_.emplace(label, name);
    map.inverse_.emplace(std::move(name), label);
  }
  return map;
}

const std::string& ObfuscationMap::forward(std::string_view label) const {
  auto it = forward_.find(std::string(label));
  if (it == forward_.end()) throw Error("label '" + std::string(label) + "' missing from obfuscation map");
  return it->second;
}

const std::string& ObfuscationMap::inverse(std::string_view name) const {
  auto it = inverse_.find(std::string(name));
  if (it == inverse_.end()) throw Error("'" + std::string(name) + "' is not an obfuscated class name");
  return it->second;
}

std::set<std::string> ObfuscationMap::names() const {
  std::set<std::string> out;
  for (const auto& [name, label] : inverse_) out.insert(name);
  return out;
}

std::vector<Demonstration> apply_obfuscation(std::vector<Demonstration> demos,
                                             const ObfuscationMap& map) {
  for (auto& d : demos) d.example.label = map.forward(d.example.label);
  return demos;
}

ShuffleResult shuffle_labels(const std::vector<Demonstration>& demos, std::uint64_t seed) {
  ShuffleResult result;
  result.demos = demos;
  if (demos.size() < 2) {
    result.single_demo_warning = true;
    result.unchanged = demos.size();
    return result;
  }
  std::vector<std::string> original;
  original.reserve(demos.size());
  for (const auto& d : demos) original.push_back(d.example.label);

  constexpr int kAttempts = 64;
  Rng rng(seed);
  std::vector<std::string> best;
  std::size_t best_unchanged = demos.size() + 1;
  for (int attempt = 0; attempt < kAttempts && best_unchanged > 0; ++attempt) {
    std::vector<std::string> candidate = original;
    rng.shuffle(candidate);
    std::size_t unchanged = 0;
    for (std::size_t i = 0; i < candidate.size(); ++i) unchanged += candidate[i] == original[i];
    if (unchanged < best_unchanged) {
      best_unchanged = unchanged;
      best = std::move(candidate);
    }
  }
  for (std::size_t i = 0; i < best.size(); ++i) result.demos[i].example.label = best[i];
  result.unchanged = best_unchanged;
  return result;
}

nlohmann::ordered_json prompt_dump_record(std::string_view id, std::string_view prompt,
                                          const std::vector<Demonstration>& demos) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["prompt"] = prompt;
  auto& ids = j["demo_ids"] = nlohmann::ordered_json::array();
  for (const auto& d : demos) ids.push_back(d.example.id);
  return j;
}

}  // namespace ricl
