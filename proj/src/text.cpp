#include "prodchoice/text.hpp"

#include <algorithm>
#include <cctype>

namespace prodchoice::text {

namespace {
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
}  // namespace

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string normalize_ws(std::string_view s) { return join(split_ws(s)); }

bool is_punctuation_only(std::string_view token) {
  return std::none_of(token.begin(), token.end(),
                      [](unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; });
}

std::string word_core(std::string_view token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (b < e && punct(token[b])) ++b;
  while (e > b && punct(token[e - 1])) --e;
  return to_lower(token.substr(b, e - b));
}

bool strip_prefix_loose(std::string_view s, std::string_view prefix, std::string& rest) {
  const auto words = split_ws(s);
  const auto pwords = split_ws(prefix);
  if (pwords.empty() || words.size() < pwords.size()) return false;
  for (std::size_t i = 0; i < pwords.size(); ++i) {
    if (to_lower(words[i]) != to_lower(pwords[i])) return false;
  }
  rest = join(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(pwords.size()),
                                       words.end()));
  return true;
}

}  // namespace prodchoice::text
