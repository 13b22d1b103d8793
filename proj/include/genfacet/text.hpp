#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace genfacet {

/// Lowercase, split on non-alphanumeric bytes, drop empties.
std::vector<std::string> tokenize(std::string_view text);

/// Joins with single spaces.
std::string join(const std::vector<std::string>& parts, std::string_view sep = " ");

/// Strips leading/trailing ASCII whitespace.
std::string trim(std::string_view s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& data);

}  // namespace genfacet
