#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dslr {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
std::string sha256_file(const std::filesystem::path& path);

/// Writes atomically-enough for our purposes: truncate + write + check.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dslr
