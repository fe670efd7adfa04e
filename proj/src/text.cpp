#include "ricl/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <stdexcept>

namespace ricl::text {

namespace {

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  return *n;
}

std::string to_utf8(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

icu::UnicodeString nfc_unicode(std::string_view s) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = nfc().normalize(u, status);
  if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");
  return out;
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

}  // namespace

std::string trim(std::string_view s) {
  // Decode code points from each end; whitespace may be multi-byte.
  int32_t begin = 0;
  const int32_t len = static_cast<int32_t>(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  while (begin < len) {
    int32_t i = begin;
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    if (c < 0 || !is_space(c)) break;
    begin = i;
  }
  int32_t end = len;
  while (end > begin) {
    int32_t i = end;
    UChar32 c;
    U8_PREV(bytes, 0, i, c);
    if (c < 0 || !is_space(c)) break;
    end = i;
  }
  return std::string(s.substr(static_cast<std::size_t>(begin),
                              static_cast<std::size_t>(end - begin)));
}

bool is_valid_utf8(std::string_view s) noexcept {
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const int32_t len = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < len) {
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    if (c < 0) return false;
  }
  return true;
}

std::string normalize_label(std::string_view s) {
  return trim(to_utf8(nfc_unicode(s)));
}

std::string match_key(std::string_view s) {
  icu::UnicodeString u = nfc_unicode(s);
  u.foldCase();
  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < u.length();) {
    UChar32 c = u.char32At(i);
    i += U16_LENGTH(c);
    if (c == '_' || is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.isEmpty()) out.append(static_cast<UChar>(' '));
    pending_space = false;
    out.append(c);
  }
  return to_utf8(out);
}

std::vector<std::string> bm25_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString current;
  auto flush = [&] {
    if (!current.isEmpty()) {
      tokens.push_back(to_utf8(current));
      current.remove();
    }
  };
  for (int32_t i = 0; i < u.length();) {
    UChar32 c = u.char32At(i);
    i += U16_LENGTH(c);
    if (u_isalnum(c)) {
      current.append(u_tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::size_t whitespace_token_count(std::string_view s) noexcept {
  std::size_t count = 0;
  bool in_token = false;
  for (unsigned char c : s) {
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::string label_as_text(std::string_view label) {
  std::string out(label);
  for (char& c : out) {
    if (c == '_') c = ' ';
  }
  return out;
}

}  // namespace ricl::text
