#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace autodiag {

// FNV-1a 64-bit. Cheap stable hash for config cache keys and filenames.
uint64_t fnv1a64(std::string_view data);

// FNV-1a as 16 hex digits.
std::string fnv1a64_hex(std::string_view data);

// SHA-256 digest as 64 hex digits. Used for content-addressed model blobs.
std::string sha256_hex(std::string_view data);

// SHA-256 of a file's contents. Throws IoError if unreadable.
std::string sha256_file_hex(const std::string& path);

}  // namespace autodiag
