#pragma once

// UTF-8 helpers. Unicode properties come from ICU so the vocabulary filter
// and case folding behave the same for English and Italian text.

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace dlx::text {

// Decodes to code points; nullopt on malformed UTF-8.
inline std::optional<std::u32string> decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto len = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  while (i < len) {
    UChar32 c;
    U8_NEXT(p, i, len, c);
    if (c < 0) return std::nullopt;
    out.push_back(static_cast<char32_t>(c));
  }
  return out;
}

inline std::string encode_utf8(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t c : cps) {
    std::uint8_t buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    UBool err = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), err);
    if (!err) out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
  }
  return out;
}

// Simple per-code-point lowercase. Malformed input is returned unchanged.
inline std::string to_lower(std::string_view s) {
  auto cps = decode_utf8(s);
  if (!cps) return std::string(s);
  for (auto& c : *cps) c = static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
  return encode_utf8(*cps);
}

inline std::u32string to_lower_codepoints(std::string_view s) {
  auto cps = decode_utf8(s);
  if (!cps) {
    // Fall back to bytes so distance computations stay defined.
    return std::u32string(s.begin(), s.end());
  }
  for (auto& c : *cps) c = static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
  return *cps;
}

// Accepts a vocabulary token: non-empty, valid UTF-8, and no code point in
// the Unicode number (N*), punctuation (P*), uppercase (Lu) or titlecase (Lt)
// categories.
inline bool is_lexical_token(std::string_view token) {
  if (token.empty()) return false;
  auto cps = decode_utf8(token);
  if (!cps) return false;
  for (char32_t c : *cps) {
    switch (u_charType(static_cast<UChar32>(c))) {
      case U_DECIMAL_DIGIT_NUMBER:
      case U_LETTER_NUMBER:
      case U_OTHER_NUMBER:
      case U_CONNECTOR_PUNCTUATION:
      case U_DASH_PUNCTUATION:
      case U_START_PUNCTUATION:
      case U_END_PUNCTUATION:
      case U_INITIAL_PUNCTUATION:
      case U_FINAL_PUNCTUATION:
      case U_OTHER_PUNCTUATION:
      case U_UPPERCASE_LETTER:
      case U_TITLECASE_LETTER:
        return false;
      default:
        break;
    }
    if (u_isUWhiteSpace(static_cast<UChar32>(c))) return false;
  }
  return true;
}

struct Token {
  std::string_view text;
  std::size_t start = 0;  // byte offset
  std::size_t end = 0;
};

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::vector<Token> split_whitespace(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_ascii_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_ascii_space(line[j])) ++j;
    if (j > i) out.push_back({line.substr(i, j - i), i, j});
    i = j;
  }
  return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_ascii_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ascii_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

// Shortest representation that round-trips; stable across runs.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, ptr);
}

}  // namespace dlx::text
