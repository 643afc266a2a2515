#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "pixeldoc/image.hpp"
#include "pixeldoc/raster.hpp"
#include "pixeldoc/tables.hpp"

using namespace pixeldoc;

namespace {

int count_color(const PixelImage& img, Rgb c) {
    int n = 0;
    for (const auto& p : img.pixels)
        if (p == c) ++n;
    return n;
}

bool inside(const WordBox& b, int x, int y) {
    return x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
}

TableSpec fruit_price_table() {
    TableSpec t;
    t.header = {"Fruit", "Price"};
    t.rows = {{"Mangoes", "3"}, {"Apples", "2"}};
    return t;
}

}  // namespace

TEST_CASE("a single word renders with an exact cell-aligned box") {
    auto doc = render_text_document("Hi", style_preset("plain"), 64);
    REQUIRE(doc.words.size() == 1);
    CHECK(doc.words[0].text == "Hi");
    CHECK(doc.words[0].x == 0);
    CHECK(doc.words[0].y == 0);
    CHECK(doc.words[0].w == 16);
    CHECK(doc.words[0].h == 8);
    CHECK(doc.full_text == "Hi");
    CHECK(doc.image.width == 64);
    CHECK(doc.image.height == 8);
}

TEST_CASE("narrow width forces a wrap at the exact line height") {
    StylePreset style = style_preset("plain");
    style.font_scale = 2;
    auto doc = render_text_document("a b", style, 20);
    REQUIRE(doc.words.size() == 2);
    CHECK(doc.words[0].text == "a");
    CHECK(doc.words[0].y == 0);
    CHECK(doc.words[1].text == "b");
    CHECK(doc.words[1].y == 16);
    CHECK(doc.words[1].x == 0);
    CHECK(doc.full_text == "a\nb");
    CHECK(doc.image.height == 32);
}

TEST_CASE("rendering is deterministic") {
    auto a = render_text_document("the quick brown fox", style_preset("banded"), 200, 7);
    auto b = render_text_document("the quick brown fox", style_preset("banded"), 200, 7);
    CHECK(encode_ppm(a.image) == encode_ppm(b.image));
    CHECK(a.full_text == b.full_text);
    REQUIRE(a.words.size() == b.words.size());
}

TEST_CASE("glyphs outside the atlas are rejected by codepoint") {
    CHECK_THROWS_WITH_AS(render_text_document("h\xc3\xa9llo", style_preset("plain"), 100),
                         doctest::Contains("unsupported glyph U+00E9"), Error);
    CHECK_THROWS_WITH_AS(render_text_document("a\tb", style_preset("plain"), 100),
                         doctest::Contains("unsupported glyph U+0009"), Error);
    CHECK_THROWS_AS(render_text_document("", style_preset("plain"), 100), Error);
    CHECK_THROWS_AS(render_text_document("hi", style_preset("plain"), 7), Error);
}

TEST_CASE("overlong words hard-break into full-line pieces") {
    // 5 cells per line at scale 1 and width 40.
    auto doc = render_text_document("abcdefghijkl xy", style_preset("plain"), 40);
    REQUIRE(doc.words.size() == 4);
    CHECK(doc.words[0].text == "abcde");
    CHECK(doc.words[1].text == "fghij");
    CHECK(doc.words[2].text == "kl");
    CHECK(doc.words[3].text == "xy");
    CHECK(doc.full_text == "abcde\nfghij\nkl xy");
    // the remainder shares its line with the following word
    CHECK(doc.words[2].y == doc.words[3].y);
}

TEST_CASE("word boxes are disjoint and contain all ink") {
    auto doc = render_text_document("ink boxes hold every glyph pixel tightly", style_preset("banded"), 300, 3);
    for (std::size_t i = 0; i < doc.words.size(); ++i)
        for (std::size_t j = i + 1; j < doc.words.size(); ++j) {
            const auto& a = doc.words[i];
            const auto& b = doc.words[j];
            bool overlap = a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
            CHECK_FALSE(overlap);
        }
    for (int y = 0; y < doc.image.height; ++y)
        for (int x = 0; x < doc.image.width; ++x) {
            if (!(doc.image.at(x, y) == doc.style.text_color)) continue;
            int owners = 0;
            for (const auto& w : doc.words)
                if (inside(w, x, y)) ++owners;
            REQUIRE(owners == 1);
        }
}

TEST_CASE("table word boxes have exact cell extents and own their ink") {
    TableSpec table;
    table.caption = "Prices today";
    table.header = {"Fruit", "Price"};
    table.rows = {{"Mangoes", "3"}, {"Apples", "2"}};
    auto doc = render_table_image(table, style_preset("banded"), 21);
    const int cell = kGlyphCell * doc.style.font_scale;
    REQUIRE(!doc.words.empty());
    for (const auto& w : doc.words) {
        CHECK(w.w == cell * static_cast<int>(w.text.size()));
        CHECK(w.h == cell);
    }
    for (int y = 0; y < doc.image.height; ++y)
        for (int x = 0; x < doc.image.width; ++x) {
            if (!(doc.image.at(x, y) == doc.style.text_color)) continue;
            int owners = 0;
            for (const auto& w : doc.words)
                if (inside(w, x, y)) ++owners;
            REQUIRE(owners == 1);
        }
}

TEST_CASE("full_text walks back onto the word list") {
    auto doc = render_text_document("alpha beta\ngamma delta epsilon", style_preset("plain"), 120);
    auto ranges = word_byte_ranges(doc);
    REQUIRE(ranges.size() == doc.words.size());
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        auto [b, e] = ranges[i];
        CHECK(doc.full_text.substr(b, e - b) == doc.words[i].text);
    }
}

TEST_CASE("table layout matches the documented cell arithmetic") {
    TableSpec t;
    t.header = {"H"};
    t.rows = {{"x"}};
    StylePreset style = style_preset("plain");
    style.font_scale = 1;
    style.cell_padding = 2;
    style.border_thickness = 1;
    style.separator_rule = SeparatorRule::all;
    auto doc = render_table_image(t, style);
    // one column: 8 px glyph + 2*2 padding = 12 inner, plus 1 px border per side
    CHECK(doc.image.width == 14);
    // header + one data row, 12 px each, 1 px top/bottom border + 1 px separator
    CHECK(doc.image.height == 27);
    REQUIRE(doc.words.size() == 2);
    CHECK(doc.words[0].text == "H");
    CHECK(doc.words[1].text == "x");
    CHECK(doc.full_text == "H\nx");
}

TEST_CASE("caption words precede all cell words") {
    TableSpec t = fruit_price_table();
    t.caption = "Prices today";
    auto doc = render_table_image(t, style_preset("grid"));
    REQUIRE(doc.words.size() >= 4);
    CHECK(doc.words[0].text == "Prices");
    CHECK(doc.words[1].text == "today");
    CHECK(doc.words[2].text == "Fruit");
    CHECK(doc.full_text == "Prices today\nFruit Price\nMangoes 3\nApples 2");
}

TEST_CASE("the five presets render distinct pixels but identical text") {
    TableSpec t = fruit_price_table();
    std::set<std::vector<std::uint8_t>> renders;
    std::set<std::string> texts;
    std::set<std::vector<std::string>> word_seqs;
    for (const auto& preset : style_presets()) {
        auto doc = render_table_image(t, preset);
        renders.insert(encode_ppm(doc.image));
        texts.insert(doc.full_text);
        std::vector<std::string> seq;
        for (const auto& w : doc.words) seq.push_back(w.text);
        word_seqs.insert(seq);
    }
    CHECK(renders.size() == 5);
    CHECK(texts.size() == 1);
    CHECK(word_seqs.size() == 1);
}

TEST_CASE("reading order is left-to-right, top-to-bottom") {
    auto doc = render_table_image(fruit_price_table(), style_preset("dark"));
    std::vector<std::string> got;
    for (const auto& w : doc.words) got.push_back(w.text);
    CHECK(got == std::vector<std::string>{"Fruit", "Price", "Mangoes", "3", "Apples", "2"});
    for (std::size_t i = 1; i < doc.words.size(); ++i) {
        const auto& prev = doc.words[i - 1];
        const auto& cur = doc.words[i];
        bool ordered = cur.y > prev.y || (cur.y == prev.y && cur.x > prev.x);
        CHECK(ordered);
    }
}

TEST_CASE("oversized tables overflow instead of rendering") {
    TableSpec t;
    t.header = {"A"};
    t.rows = {{std::string(6000, 'x')}};  // 6000 cells * 24 px at scale 3 > 57344
    CHECK_THROWS_WITH_AS(render_table_image(t, style_preset("wide")),
                         doctest::Contains("table overflow"), Error);
}

TEST_CASE("question banner stacks on top and preserves the document pixels") {
    RenderedDocument doc;
    doc.style = style_preset("plain");
    doc.image = PixelImage(100, 50, {200, 210, 220});
    doc.words.push_back({"x", 4, 6, 8, 8});
    doc.full_text = "x";

    auto out = overlay_question_banner(doc, "why", style_preset("plain"));
    CHECK(out.image.width == 100);
    CHECK(out.image.height == 62);  // 8 px question line + 2*2 padding + 50
    REQUIRE(out.words.size() == 2);
    CHECK(out.words[0].text == "why");
    CHECK(out.words[1].text == "x");
    CHECK(out.words[1].y == 6 + 12);
    CHECK(out.full_text == "why\nx");
    for (int y = 0; y < 50; ++y)
        for (int x = 0; x < 100; ++x) REQUIRE(out.image.at(x, y + 12) == doc.image.at(x, y));

    CHECK_THROWS_AS(overlay_question_banner(doc, "", style_preset("plain")), Error);
}

TEST_CASE("mask rectangles blank exactly the chosen words") {
    auto doc = render_text_document("alpha beta gamma delta", style_preset("plain"), 200, 1);
    REQUIRE(doc.words.size() == 4);

    auto unchanged = apply_mask_rectangles(doc, {});
    CHECK(unchanged == doc.image);

    auto masked = apply_mask_rectangles(doc, {{1, 2}});
    const auto& box = doc.words[1];
    for (int y = 0; y < doc.image.height; ++y)
        for (int x = 0; x < doc.image.width; ++x) {
            if (inside(box, x, y)) {
                REQUIRE(masked.at(x, y) == kMaskGray);
            } else {
                REQUIRE(masked.at(x, y) == doc.image.at(x, y));
            }
        }

    auto two = apply_mask_rectangles(doc, {{0, 1}, {3, 4}});
    CHECK(count_color(two, kMaskGray) ==
          doc.words[0].w * doc.words[0].h + doc.words[3].w * doc.words[3].h);

    CHECK_THROWS_WITH_AS(apply_mask_rectangles(doc, {{0, 2}, {1, 3}}),
                         doctest::Contains("invalid spans"), Error);
    CHECK_THROWS_WITH_AS(apply_mask_rectangles(doc, {{2, 9}}),
                         doctest::Contains("invalid spans"), Error);
}

TEST_CASE("random style choice is a seeded preset with rescaled font") {
    auto a = random_render_style(99);
    auto b = random_render_style(99);
    CHECK(a.id == b.id);
    CHECK(a.font_scale == b.font_scale);
    CHECK(a.font_scale >= 1);
    CHECK(a.font_scale <= 3);
    bool known = false;
    for (const auto& p : style_presets())
        if (p.id == a.id) known = true;
    CHECK(known);

    std::map<std::string, int> id_counts;
    std::map<int, int> scale_counts;
    for (std::uint64_t s = 0; s < 3000; ++s) {
        auto st = random_render_style(s);
        ++id_counts[st.id];
        ++scale_counts[st.font_scale];
    }
    CHECK(id_counts.size() == 5);
    CHECK(scale_counts.size() == 3);
    for (const auto& [id, n] : id_counts) CHECK(n > 400);
    for (const auto& [sc, n] : scale_counts) CHECK(n > 800);
}

TEST_CASE("style presets satisfy their contract") {
    std::set<std::string> ids;
    for (const auto& p : style_presets()) {
        ids.insert(p.id);
        CHECK(p.font_scale >= 1);
        CHECK_FALSE(p.text_color == p.background_color);
        CHECK_FALSE(p.text_color == kMaskGray);
        CHECK_FALSE(p.background_color == kMaskGray);
    }
    CHECK(ids.size() == 5);
    CHECK_THROWS_AS(style_preset("nonexistent"), Error);
}
