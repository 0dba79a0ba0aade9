#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace laca {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Reads a whole file; throws DataError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe
/// a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace laca
