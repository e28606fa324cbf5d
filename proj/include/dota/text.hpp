#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dota/unicode_tables.hpp"

namespace dota {

namespace utf8 {

inline constexpr char32_t kReplacement = 0xFFFD;

/// Decodes UTF-8; malformed sequences decode to U+FFFD one byte at a time.
inline std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      out.push_back(c);
      ++i;
      continue;
    }
    if ((c >> 5) == 0x6) n = 1, cp = c & 0x1F;
    else if ((c >> 4) == 0xE) n = 2, cp = c & 0x0F;
    else if ((c >> 3) == 0x1E) n = 3, cp = c & 0x07;
    bool ok = n > 0 && i + n < s.size();
    for (std::size_t k = 1; ok && k <= n; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      ok = (cc >> 6) == 0x2;
      cp = (cp << 6) | (cc & 0x3F);
    }
    ok = ok && !((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000)) &&
         cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    if (ok) {
      out.push_back(cp);
      i += n + 1;
    } else {
      out.push_back(kReplacement);
      ++i;
    }
  }
  return out;
}

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append(out, cp);
  return out;
}

}  // namespace utf8

namespace unicode {

template <std::size_t N>
bool in_ranges(const CodepointRange (&table)[N], char32_t cp) {
  const auto* it = std::upper_bound(std::begin(table), std::end(table), cp,
                                    [](char32_t v, const CodepointRange& r) { return v < r.lo; });
  return it != std::begin(table) && cp <= std::prev(it)->hi;
}

/// Unicode P* categories plus the ASCII symbols $ % & + = @ #.
inline bool is_punctuation(char32_t cp) { return in_ranges(kPunctuation, cp); }
inline bool is_digit(char32_t cp) { return in_ranges(kDecimalDigit, cp); }
inline bool is_space(char32_t cp) { return in_ranges(kWhitespace, cp); }

inline char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  const auto* it = std::lower_bound(std::begin(kToLower), std::end(kToLower), cp,
                                    [](const CaseMapping& m, char32_t v) { return m.from < v; });
  return (it != std::end(kToLower) && it->from == cp) ? it->to : cp;
}

}  // namespace unicode

/// Transcript normalization applied before tokenization and scoring.
///
/// Lowercases, replaces punctuation and every whitespace character
/// (including '\n') with a space, separates adjacent digits with one space,
/// collapses whitespace runs and trims. The function is idempotent.
inline std::string normalize(std::string_view raw) {
  const std::u32string in = utf8::decode(raw);
  std::u32string mapped;
  mapped.reserve(in.size() * 2);
  for (char32_t cp : in) {
    cp = unicode::to_lower(cp);
    if (unicode::is_punctuation(cp) || unicode::is_space(cp)) cp = U' ';
    if (!mapped.empty() && unicode::is_digit(cp) && unicode::is_digit(mapped.back())) mapped.push_back(U' ');
    mapped.push_back(cp);
  }
  std::u32string out;
  out.reserve(mapped.size());
  for (char32_t cp : mapped) {
    if (cp == U' ' && (out.empty() || out.back() == U' ')) continue;
    out.push_back(cp);
  }
  if (!out.empty() && out.back() == U' ') out.pop_back();
  return utf8::encode(out);
}

/// Splits on ASCII spaces, dropping empty fields.
inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t j = std::min(s.find(' ', i), s.size());
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace dota
