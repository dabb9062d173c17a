#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace setcomp {

std::string_view trim(std::string_view s);

/// Splits on every occurrence of delim. Never returns an empty vector.
std::vector<std::string_view> split(std::string_view s, std::string_view delim);

/// Binary output stream; creates missing parent directories. Throws IoError
/// "cannot write <what>: <path>".
std::ofstream open_output(const std::filesystem::path& path, std::string_view what);

}  // namespace setcomp
