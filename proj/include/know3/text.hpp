#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace know3 {

// ASCII case folding. Bytes >= 0x80 pass through untouched so UTF-8
// sequences survive intact.
std::string fold_case(std::string_view s);

std::string_view trim(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);

// Letters, digits and any non-ASCII byte count as word characters.
bool is_word_char(unsigned char c);

// Collapses runs of whitespace into a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace know3
