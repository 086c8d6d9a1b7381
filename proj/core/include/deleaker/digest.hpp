#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace deleaker {

// SHA-256 as lowercase hex.
std::string sha256_hex(std::string_view data);

// Digest of a file's contents. Throws if the file cannot be read.
std::string sha256_file_hex(const std::string& path);

} // namespace deleaker
