#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ricl::io {

/// Whole file as bytes. Throws DataError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes bytes, creating parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ricl::io
