#include "pixeldoc/raster.hpp"

#include <algorithm>
#include <cstdio>

#include "font8x8.hpp"
#include "pixeldoc/rng.hpp"
#include "pixeldoc/utf8.hpp"

namespace pixeldoc {

namespace {

void validate_style(const StylePreset& style) {
    if (style.font_scale < 1) throw_data("invalid style: font_scale must be >= 1");
    if (style.border_thickness < 0) throw_data("invalid style: negative border_thickness");
    if (style.cell_padding < 0) throw_data("invalid style: negative cell_padding");
    if (style.text_color == style.background_color)
        throw_data("invalid style: text color equals background color");
}

std::string codepoint_label(char32_t cp) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
    return buf;
}

// Rejects anything outside the atlas. Newlines pass only where the caller
// treats them as line breaks.
void check_glyphs(std::string_view text, bool allow_newline) {
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = utf8_next(text, i);
        if (cp == U'\n' && allow_newline) continue;
        if (!font_has_glyph(cp))
            throw_data("unsupported glyph " + codepoint_label(cp));
    }
}

void draw_glyph(PixelImage& img, int x, int y, char ch, int scale, Rgb color) {
    const std::uint8_t* rows = kFontAtlas[ch - kFontFirstChar];
    for (int gy = 0; gy < 8; ++gy) {
        std::uint8_t bits = rows[gy];
        if (!bits) continue;
        for (int gx = 0; gx < 8; ++gx) {
            if (bits & (0x80u >> gx)) {
                img.fill_rect(x + gx * scale, y + gy * scale, scale, scale, color);
            }
        }
    }
}

// Draws a single-line run starting at pixel (x, y), one glyph cell per
// character (spaces advance without ink), and appends a WordBox for every
// maximal run of non-space characters.
void draw_line_run(PixelImage& img, int x, int y, std::string_view text, const StylePreset& style,
                   std::vector<WordBox>& words) {
    const int cell = kGlyphCell * style.font_scale;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == ' ') {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < text.size() && text[i] != ' ') ++i;
        std::string word(text.substr(start, i - start));
        int wx = x + static_cast<int>(start) * cell;
        for (std::size_t k = 0; k < word.size(); ++k) {
            draw_glyph(img, wx + static_cast<int>(k) * cell, y, word[k], style.font_scale,
                       style.text_color);
        }
        const int width_px = static_cast<int>(word.size()) * cell;
        words.push_back({std::move(word), wx, y, width_px, cell});
    }
}

// Greedy wrap into lines of whole words; overlong words are hard-broken into
// full-line pieces. Returns one word list per output line (possibly empty
// for blank lines).
std::vector<std::vector<std::string>> wrap_words(const std::string& text, int cells_per_line) {
    std::vector<std::vector<std::string>> lines;
    std::vector<std::string> cur;
    int cur_cells = 0;
    auto flush = [&] {
        lines.push_back(std::move(cur));
        cur.clear();
        cur_cells = 0;
    };

    std::size_t i = 0;
    while (i <= text.size()) {
        if (i == text.size() || text[i] == '\n') {
            flush();
            ++i;
            continue;
        }
        if (text[i] == ' ') {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < text.size() && text[i] != ' ' && text[i] != '\n') ++i;
        std::string word = text.substr(start, i - start);
        while (static_cast<int>(word.size()) > cells_per_line) {
            if (cur_cells > 0) flush();
            cur.push_back(word.substr(0, static_cast<std::size_t>(cells_per_line)));
            word.erase(0, static_cast<std::size_t>(cells_per_line));
            flush();
        }
        if (word.empty()) continue;
        int needed = (cur_cells > 0 ? 1 : 0) + static_cast<int>(word.size());
        if (cur_cells > 0 && cur_cells + needed > cells_per_line) flush();
        cur_cells += (cur_cells > 0 ? 1 : 0) + static_cast<int>(word.size());
        cur.push_back(std::move(word));
    }
    return lines;
}

}  // namespace

const std::array<StylePreset, 5>& style_presets() {
    static const std::array<StylePreset, 5> kPresets = {{
        {"plain", 1, {0, 0, 0}, {255, 255, 255}, {96, 96, 96}, 0, 2, SeparatorRule::none},
        {"grid", 1, {16, 24, 96}, {235, 240, 255}, {16, 24, 96}, 1, 2, SeparatorRule::all},
        {"banded", 2, {0, 0, 0}, {224, 224, 224}, {64, 64, 64}, 1, 3, SeparatorRule::horizontal_only},
        {"dark", 1, {240, 240, 240}, {24, 24, 32}, {200, 200, 200}, 2, 4, SeparatorRule::all},
        {"wide", 3, {0, 80, 0}, {255, 250, 230}, {0, 80, 0}, 2, 5, SeparatorRule::horizontal_only},
    }};
    return kPresets;
}

const StylePreset& style_preset(std::string_view id) {
    for (const auto& p : style_presets())
        if (p.id == id) return p;
    throw_data("unknown style preset '" + std::string(id) + "'");
}

StylePreset random_render_style(std::uint64_t seed) {
    Rng rng(seed);
    StylePreset style = style_presets()[rng.index(style_presets().size())];
    style.font_scale = 1 + static_cast<int>(rng.bounded(3));
    return style;
}

RenderedDocument render_text_document(const std::string& text, const StylePreset& style,
                                      int max_width, std::uint64_t seed) {
    validate_style(style);
    if (text.empty()) throw_data("cannot render empty text");
    const int cell = kGlyphCell * style.font_scale;
    if (max_width < cell)
        throw_data("render width " + std::to_string(max_width) +
                   " is narrower than one glyph cell (" + std::to_string(cell) + " px)");
    check_glyphs(text, /*allow_newline=*/true);

    const int cells_per_line = max_width / cell;
    auto lines = wrap_words(text, cells_per_line);

    RenderedDocument doc;
    doc.style = style;
    doc.seed = seed;
    doc.image = PixelImage(max_width, static_cast<int>(lines.size()) * cell,
                           style.background_color);

    std::string full_text;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (li > 0) full_text.push_back('\n');
        int x_cell = 0;
        for (std::size_t wi = 0; wi < lines[li].size(); ++wi) {
            const std::string& word = lines[li][wi];
            if (wi > 0) full_text.push_back(' ');
            full_text += word;
            int wx = x_cell * cell;
            int wy = static_cast<int>(li) * cell;
            for (std::size_t k = 0; k < word.size(); ++k)
                draw_glyph(doc.image, wx + static_cast<int>(k) * cell, wy, word[k],
                           style.font_scale, style.text_color);
            doc.words.push_back({word, wx, wy, static_cast<int>(word.size()) * cell, cell});
            x_cell += static_cast<int>(word.size()) + 1;
        }
    }
    doc.full_text = std::move(full_text);
    return doc;
}

RenderedDocument render_table_image(const TableSpec& table, const StylePreset& style,
                                    std::uint64_t seed) {
    validate_style(style);
    table.validate();
    if (table.caption) check_glyphs(*table.caption, /*allow_newline=*/false);
    for (const auto& name : table.header) check_glyphs(name, false);
    for (const auto& row : table.rows)
        for (const auto& cell_text : row) check_glyphs(cell_text, false);

    const int scale = style.font_scale;
    const int cell = kGlyphCell * scale;
    const int pad = style.cell_padding;
    const int b = style.border_thickness;
    const int sep_v = style.separator_rule == SeparatorRule::all ? b : 0;
    const int sep_h = style.separator_rule != SeparatorRule::none ? b : 0;
    const int n_cols = table.n_cols();
    const int n_grid_rows = table.n_rows() + 1;  // header + data rows

    // Column inner widths from the widest text in each column (header
    // included); rows are one text line tall.
    std::vector<int> col_w(static_cast<std::size_t>(n_cols), 0);
    auto consider = [&](int c, const std::string& s) {
        col_w[static_cast<std::size_t>(c)] =
            std::max(col_w[static_cast<std::size_t>(c)], static_cast<int>(s.size()) * cell);
    };
    for (int c = 0; c < n_cols; ++c) consider(c, table.header[static_cast<std::size_t>(c)]);
    for (const auto& row : table.rows)
        for (int c = 0; c < n_cols; ++c) consider(c, row[static_cast<std::size_t>(c)]);
    for (auto& w : col_w) w += 2 * pad;

    const int row_h = cell + 2 * pad;
    long long grid_w = 2LL * b + (n_cols - 1LL) * sep_v;
    for (int w : col_w) grid_w += w;
    long long grid_h = 2LL * b + static_cast<long long>(n_grid_rows) * row_h +
                       (n_grid_rows - 1LL) * sep_h;

    long long caption_w = 0;
    int caption_h = 0;
    if (table.caption) {
        caption_w = static_cast<long long>(table.caption->size()) * cell;
        caption_h = cell + pad;  // caption line plus a gap above the grid
    }

    long long img_w = std::max(grid_w, caption_w);
    long long img_h = caption_h + grid_h;
    if (img_w > kMaxRenderSide || img_h > kMaxRenderSide)
        throw_data("table overflow: render would be " + std::to_string(img_w) + "x" +
                   std::to_string(img_h) + " px, past the " + std::to_string(kMaxRenderSide) +
                   " px patch-budget ceiling");

    RenderedDocument doc;
    doc.style = style;
    doc.seed = seed;
    doc.image = PixelImage(static_cast<int>(img_w), static_cast<int>(img_h),
                           style.background_color);

    std::vector<std::string> text_lines;
    if (table.caption) {
        draw_line_run(doc.image, 0, 0, *table.caption, style, doc.words);
        std::string line;
        for (const auto& w : doc.words) {
            if (!line.empty()) line.push_back(' ');
            line += w.text;
        }
        text_lines.push_back(std::move(line));
    }

    const int gy0 = caption_h;
    if (b > 0) {
        const int gw = static_cast<int>(grid_w);
        const int gh = static_cast<int>(grid_h);
        doc.image.fill_rect(0, gy0, gw, b, style.border_color);
        doc.image.fill_rect(0, gy0 + gh - b, gw, b, style.border_color);
        doc.image.fill_rect(0, gy0, b, gh, style.border_color);
        doc.image.fill_rect(gw - b, gy0, b, gh, style.border_color);
    }

    // Left edge of each column's inner region, relative to the grid.
    std::vector<int> col_x(static_cast<std::size_t>(n_cols));
    int x_acc = b;
    for (int c = 0; c < n_cols; ++c) {
        col_x[static_cast<std::size_t>(c)] = x_acc;
        x_acc += col_w[static_cast<std::size_t>(c)] + sep_v;
    }
    if (sep_v > 0)
        for (int c = 1; c < n_cols; ++c)
            doc.image.fill_rect(col_x[static_cast<std::size_t>(c)] - sep_v, gy0, sep_v,
                                static_cast<int>(grid_h), style.border_color);
    if (sep_h > 0)
        for (int r = 1; r < n_grid_rows; ++r)
            doc.image.fill_rect(0, gy0 + b + r * (row_h + sep_h) - sep_h,
                                static_cast<int>(grid_w), sep_h, style.border_color);

    for (int r = 0; r < n_grid_rows; ++r) {
        const auto& cells =
            r == 0 ? table.header : table.rows[static_cast<std::size_t>(r - 1)];
        const int y = gy0 + b + r * (row_h + sep_h) + pad;
        std::string line;
        std::size_t first_word = doc.words.size();
        for (int c = 0; c < n_cols; ++c) {
            draw_line_run(doc.image, col_x[static_cast<std::size_t>(c)] + pad, y,
                          cells[static_cast<std::size_t>(c)], style, doc.words);
        }
        for (std::size_t w = first_word; w < doc.words.size(); ++w) {
            if (!line.empty()) line.push_back(' ');
            line += doc.words[w].text;
        }
        text_lines.push_back(std::move(line));
    }

    std::string full_text;
    for (std::size_t i = 0; i < text_lines.size(); ++i) {
        if (i > 0) full_text.push_back('\n');
        full_text += text_lines[i];
    }
    doc.full_text = std::move(full_text);
    return doc;
}

RenderedDocument overlay_question_banner(const RenderedDocument& doc, const std::string& question,
                                         const StylePreset& style) {
    if (question.empty()) throw_data("cannot overlay an empty question");
    constexpr int kBannerPad = 2;  // px above and below the question strip

    RenderedDocument qdoc = render_text_document(question, style, doc.image.width, doc.seed);
    const int banner_h = qdoc.image.height + 2 * kBannerPad;
    if (static_cast<long long>(banner_h) + doc.image.height > kMaxRenderSide)
        throw_data("banner overflow: stacked height past the patch-budget ceiling");

    RenderedDocument out;
    out.style = doc.style;
    out.seed = doc.seed;
    out.image = PixelImage(doc.image.width, banner_h + doc.image.height,
                           style.background_color);
    for (int y = 0; y < qdoc.image.height; ++y)
        for (int x = 0; x < qdoc.image.width; ++x)
            out.image.at(x, y + kBannerPad) = qdoc.image.at(x, y);
    for (int y = 0; y < doc.image.height; ++y)
        for (int x = 0; x < doc.image.width; ++x)
            out.image.at(x, y + banner_h) = doc.image.at(x, y);

    out.words.reserve(qdoc.words.size() + doc.words.size());
    for (auto& w : qdoc.words) {
        w.y += kBannerPad;
        out.words.push_back(std::move(w));
    }
    for (WordBox w : doc.words) {
        w.y += banner_h;
        out.words.push_back(std::move(w));
    }
    out.full_text = qdoc.full_text + "\n" + doc.full_text;
    return out;
}

PixelImage apply_mask_rectangles(const RenderedDocument& doc, const std::vector<WordSpan>& spans,
                                 Rgb mask_color) {
    const int n = static_cast<int>(doc.words.size());
    for (const auto& s : spans) {
        if (s.begin < 0 || s.end < s.begin || s.end > n)
            throw_data("invalid spans: word range [" + std::to_string(s.begin) + ", " +
                       std::to_string(s.end) + ") out of bounds for " + std::to_string(n) +
                       " words");
    }
    std::vector<WordSpan> sorted = spans;
    std::sort(sorted.begin(), sorted.end(),
              [](const WordSpan& a, const WordSpan& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].begin < sorted[i - 1].end)
            throw_data("invalid spans: overlapping word ranges");
    }

    PixelImage out = doc.image;
    for (const auto& s : sorted)
        for (int w = s.begin; w < s.end; ++w) {
            const WordBox& box = doc.words[static_cast<std::size_t>(w)];
            out.fill_rect(box.x, box.y, box.w, box.h, mask_color);
        }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> word_byte_ranges(const RenderedDocument& doc) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    ranges.reserve(doc.words.size());
    std::size_t pos = 0;
    for (const auto& w : doc.words) {
        while (pos < doc.full_text.size() &&
               (doc.full_text[pos] == ' ' || doc.full_text[pos] == '\n'))
            ++pos;
        if (doc.full_text.compare(pos, w.text.size(), w.text) != 0)
            throw_data("document text does not match its word list");
        ranges.emplace_back(pos, pos + w.text.size());
        pos += w.text.size();
    }
    return ranges;
}

}  // namespace pixeldoc
