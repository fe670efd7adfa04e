#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ricl::text {

/// Strips ASCII and Unicode whitespace from both ends.
std::string trim(std::string_view s);

bool is_valid_utf8(std::string_view s) noexcept;

/// Canonical label form: NFC normalization followed by trim. Case is kept.
std::string normalize_label(std::string_view s);

/// Loose key used when matching generated text against class names:
/// NFC, full case folding, underscores read as spaces, runs of whitespace
/// collapsed, trimmed.
std::string match_key(std::string_view s);

/// BM25 tokenizer: lowercase, split on every non-alphanumeric code point.
std::vector<std::string> bm25_tokens(std::string_view s);

/// Whitespace-delimited token count (used by the token estimators).
std::size_t whitespace_token_count(std::string_view s) noexcept;

/// Underscores replaced by spaces; the form used when embedding class names.
std::string label_as_text(std::string_view label);

}  // namespace ricl::text
