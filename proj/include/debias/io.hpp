#pragma once

#include <filesystem>
#include <string>

namespace debias {

// Shortest decimal rendering that parses back to the same double ("%.17g"
// fallback); never uses more than 17 significant digits.
std::string format_double(double value);

// Writes content to path atomically: temp file in the same directory, then
// rename. Raises IoError on failure.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

} // namespace debias
