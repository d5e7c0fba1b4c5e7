#pragma once
// Text normalization used by keyword matching and event sets.

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace versavid::text {

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

inline std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\n\r\f\v");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\n\r\f\v");
  return std::string(s.substr(first, last - first + 1));
}

/// Lowercase, trim, collapse inner whitespace, strip trailing punctuation.
inline std::string normalize_event(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) ||
                          out.back() == ' ')) {
    out.pop_back();
  }
  return out;
}

/// Lowercased alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// " w1 w2 ... wn " form, so that a phrase match at word boundaries is a plain
/// substring search for " phrase ".
inline std::string boundary_form(std::string_view s) {
  std::string out = " ";
  for (const auto& w : words(s)) {
    out += w;
    out += ' ';
  }
  return out;
}

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  // Advance by one word so overlapping phrase hits (e.g. "then then") are all seen.
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

/// Token-level F1 with multiset overlap.
inline double token_f1(std::string_view a, std::string_view b) {
  const auto ta = words(a);
  const auto tb = words(b);
  if (ta.empty() || tb.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : ta) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : tb) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / static_cast<double>(tb.size());
  const double r = static_cast<double>(common) / static_cast<double>(ta.size());
  return 2.0 * p * r / (p + r);
}

}  // namespace versavid::text
