#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prodchoice::text {

std::vector<std::string> split_ws(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep = " ");
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Collapses every whitespace run to one space and trims both ends.
std::string normalize_ws(std::string_view s);

/// True if the token has no alphanumeric character ("." "--" "?!").
bool is_punctuation_only(std::string_view token);

/// Strips leading/trailing punctuation and lowercases ("Um," -> "um").
std::string word_core(std::string_view token);

/// Case- and whitespace-insensitive prefix test. On success `rest` receives
/// the remainder of `s` after the prefix, trimmed.
bool strip_prefix_loose(std::string_view s, std::string_view prefix, std::string& rest);

}  // namespace prodchoice::text
