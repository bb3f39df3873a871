#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mics {

// Hex MD5 of raw bytes (file-level image dedup, cache keys).
std::string md5_hex(std::string_view bytes);
std::string md5_hex(const std::vector<unsigned char>& bytes);

// MD5 of a file's contents; throws std::runtime_error when unreadable.
std::string md5_file(const std::string& path);

}  // namespace mics
