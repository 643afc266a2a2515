#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace pixeldoc {

// Decodes the codepoint starting at i and advances i past it. Invalid
// sequences decode to U+FFFD; i advances past the longest valid prefix of
// the bad sequence (at least one byte).
char32_t utf8_next(std::string_view s, std::size_t& i);

// Whole-string decode with U+FFFD replacement.
std::u32string utf8_decode(std::string_view s);

void utf8_append(std::string& out, char32_t cp);

}  // namespace pixeldoc
