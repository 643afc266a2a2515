#pragma once

#include <cstdint>

namespace pixeldoc {

// Fixed 8x8 bitmap glyphs for printable ASCII 0x20..0x7E, one byte per row,
// most significant bit = leftmost pixel.
inline constexpr int kFontFirstChar = 0x20;
inline constexpr int kFontGlyphCount = 95;

extern const std::uint8_t kFontAtlas[kFontGlyphCount][8];

inline bool font_has_glyph(char32_t cp) {
    return cp >= 0x20 && cp <= 0x7E;
}

}  // namespace pixeldoc
