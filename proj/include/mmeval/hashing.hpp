#pragma once

#include <span>
#include <string>
#include <string_view>

namespace mmeval {

// Lowercase hex SHA-256 (64 characters).
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace mmeval
