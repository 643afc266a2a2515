#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pixeldoc/common.hpp"
#include "pixeldoc/image.hpp"
#include "pixeldoc/tables.hpp"

namespace pixeldoc {

// Base glyph cell is 8x8; a style's font_scale multiplies it.
inline constexpr int kGlyphCell = 8;

// Solid fill used to blank out phrase rectangles. Chosen distinct from every
// preset's text and background colors.
inline constexpr Rgb kMaskGray{128, 128, 128};

// Largest width/height a rendered document may have: a 4096-patch budget of
// 14 px patches covers at most 4096 * 14 px along one axis.
inline constexpr int kMaxRenderSide = 14 * 4096;

enum class SeparatorRule { none, horizontal_only, all };

struct StylePreset {
    std::string id;
    int font_scale = 1;  // >= 1
    Rgb text_color;
    Rgb background_color;
    Rgb border_color;
    int border_thickness = 0;  // px
    int cell_padding = 0;      // px inside each table cell
    SeparatorRule separator_rule = SeparatorRule::none;
};

// The five built-in render styles.
const std::array<StylePreset, 5>& style_presets();

// Lookup by id; throws a data error for unknown ids.
const StylePreset& style_preset(std::string_view id);

// Seeded choice of one preset with the font scale re-drawn from {1,2,3}.
StylePreset random_render_style(std::uint64_t seed);

// Tight pixel box of one word: [x, x+w) x [y, y+h).
struct WordBox {
    std::string text;
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

// Half-open range [begin, end) of word indices.
struct WordSpan {
    int begin = 0;
    int end = 0;
};

struct RenderedDocument {
    PixelImage image;
    std::vector<WordBox> words;  // reading order: left-to-right, top-to-bottom
    std::string full_text;       // words joined by spaces, '\n' at line breaks
    StylePreset style;
    std::uint64_t seed = 0;
};

// Monospace-renders text with greedy word wrap at max_width. Words longer
// than a full line are hard-broken; each piece becomes its own word.
RenderedDocument render_text_document(const std::string& text, const StylePreset& style,
                                      int max_width, std::uint64_t seed = 0);

// Grid layout: per-column inner width = widest cell text + 2*cell_padding,
// borders and separators per style, caption (when present) above the grid.
RenderedDocument render_table_image(const TableSpec& table, const StylePreset& style,
                                    std::uint64_t seed = 0);

// Stacks a question strip (rendered in `style`) on top of the document.
// Original word boxes shift down by the banner height; the question becomes
// the leading line of full_text.
RenderedDocument overlay_question_banner(const RenderedDocument& doc, const std::string& question,
                                         const StylePreset& style);

// Fills the boxes of the words covered by `spans` with mask_color and leaves
// every other pixel untouched. Spans must be disjoint and in range.
PixelImage apply_mask_rectangles(const RenderedDocument& doc, const std::vector<WordSpan>& spans,
                                 Rgb mask_color = kMaskGray);

// Byte range [begin, end) of each word's text inside doc.full_text, in word
// order. Well-defined because words contain no whitespace and full_text
// separates them with whitespace only.
std::vector<std::pair<std::size_t, std::size_t>> word_byte_ranges(const RenderedDocument& doc);

}  // namespace pixeldoc
