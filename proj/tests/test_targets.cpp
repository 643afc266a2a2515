#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "pixeldoc/common.hpp"
#include "pixeldoc/patchify.hpp"
#include "pixeldoc/raster.hpp"
#include "pixeldoc/rng.hpp"
#include "pixeldoc/targets.hpp"
#include "pixeldoc/tokenizer.hpp"

using namespace pixeldoc;

namespace {

RenderedDocument simple_doc(const std::string& text, int max_width = 400) {
    return render_text_document(text, style_preset("plain"), max_width, 7);
}

// A handful of short ASCII words for random document construction.
std::string random_text(Rng& rng, std::size_t n_words) {
    static const std::vector<std::string> pool = {"sun",  "moon", "tide", "rock", "fern",
                                                  "ox",   "lamp", "pier", "vat",  "crow",
                                                  "dusk", "iron", "map",  "bell", "yarn"};
    std::string text;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (!text.empty()) text.push_back(' ');
        text += pool[rng.index(pool.size())];
    }
    return text;
}

}  // namespace

TEST_CASE("patch mask size follows the floor rule") {
    CHECK(sample_patch_mask(256, 0.15, 1).size() == 38);
    CHECK(sample_patch_mask(4096, 0.15, 1).size() == 614);
    CHECK(sample_patch_mask(100, 0.15, 1).size() == 15);
    CHECK(sample_patch_mask(7, 0.15, 1).size() == 1);  // floor(1.05)
}

TEST_CASE("patch mask draws are distinct, sorted, in range, deterministic") {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const auto mask = sample_patch_mask(256, 0.15, seed);
        REQUIRE(mask.size() == 38);
        CHECK(std::is_sorted(mask.begin(), mask.end()));
        CHECK(std::adjacent_find(mask.begin(), mask.end()) == mask.end());
        CHECK(mask.front() >= 0);
        CHECK(mask.back() < 256);
        CHECK(sample_patch_mask(256, 0.15, seed) == mask);
    }
    CHECK(sample_patch_mask(256, 0.15, 1) != sample_patch_mask(256, 0.15, 2));
}

TEST_CASE("patch mask is uniform: every index hit 15% +- 1.5% over 10k seeds") {
    std::vector<int> counts(100, 0);
    for (std::uint64_t seed = 0; seed < 10000; ++seed)
        for (int idx : sample_patch_mask(100, 0.15, seed)) ++counts[idx];
    for (int idx = 0; idx < 100; ++idx) {
        CAPTURE(idx);
        CHECK(counts[idx] >= 1350);
        CHECK(counts[idx] <= 1650);
    }
}

TEST_CASE("patch mask rejects bad arguments by name") {
    CHECK_THROWS_WITH_AS(sample_patch_mask(10, 0.05, 1), doctest::Contains("mask would be empty"),
                         Error);
    CHECK_THROWS_WITH_AS(sample_patch_mask(0, 0.15, 1), doctest::Contains("at least 1"), Error);
    CHECK_THROWS_WITH_AS(sample_patch_mask(256, 0.0, 1), doctest::Contains("inside (0, 1)"),
                         Error);
    CHECK_THROWS_WITH_AS(sample_patch_mask(256, 1.0, 1), doctest::Contains("inside (0, 1)"),
                         Error);
}

TEST_CASE("phrase spans cover exactly the rounded word budget") {
    // one word rounds to zero spans
    CHECK(sample_phrase_spans(simple_doc("solo"), 0.15, 3).empty());

    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n_words = 1 + rng.bounded(40);
        const auto doc = simple_doc(random_text(rng, n_words));
        REQUIRE(doc.words.size() == n_words);
        const auto spans = sample_phrase_spans(doc, 0.15, 1000 + trial);
        const long expected = std::lround(0.15 * static_cast<double>(n_words));

        long covered = 0;
        int prev_end = -1;
        for (const auto& span : spans) {
            CHECK(span.begin >= 0);
            CHECK(span.begin >= prev_end);  // sorted and disjoint
            CHECK(span.end <= static_cast<int>(n_words));
            const int len = span.end - span.begin;
            CHECK(len >= 1);
            CHECK(len <= 3);
            covered += len;
            prev_end = span.end;
        }
        CAPTURE(n_words);
        CHECK(covered == expected);
    }
}

TEST_CASE("phrase spans are deterministic and honor high ratios") {
    Rng text_rng(5);
    const auto doc = simple_doc(random_text(text_rng, 30));
    const auto a = sample_phrase_spans(doc, 0.15, 42);
    const auto b = sample_phrase_spans(doc, 0.15, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].begin == b[i].begin);
        CHECK(a[i].end == b[i].end);
    }

    // 90% of 30 words = 27 covered, still feasible through fragmentation
    const auto dense = sample_phrase_spans(doc, 0.9, 9);
    long covered = 0;
    for (const auto& span : dense) covered += span.end - span.begin;
    CHECK(covered == 27);

    CHECK_THROWS_WITH_AS(sample_phrase_spans(doc, 0.0, 1), doctest::Contains("inside (0, 1)"),
                         Error);
}

TEST_CASE("masked-text example carries MLM roles exactly on masked words") {
    const auto doc = simple_doc("alpha beta gamma delta");
    REQUIRE(doc.full_text == "alpha beta gamma delta");

    const std::vector<WordSpan> spans = {{1, 2}};  // mask "beta"
    const auto ex = build_mdtg_example(doc, spans);
    ex.validate();

    CHECK(ex.task_tag == TaskTag::MDTG);
    CHECK(ex.prefix_tokens == std::vector<TokenId>{tok::kMdtg});
    CHECK(ex.mae_mask.empty());
    CHECK(decode(ex.target_tokens) == "alpha beta gamma delta</s>");
    REQUIRE(ex.roles.size() == ex.target_tokens.size());

    // bytes 6..9 spell "beta"; they and only they score under MLM
    for (std::size_t i = 0; i < ex.roles.size(); ++i) {
        CAPTURE(i);
        if (i >= 6 && i < 10)
            CHECK(ex.roles[i] == LossRole::MLM);
        else
            CHECK(ex.roles[i] == LossRole::OCR);
    }

    // the image is the masked render, not the original
    CHECK(ex.image == apply_mask_rectangles(doc, spans));
    CHECK_FALSE(ex.image == doc.image);
}

TEST_CASE("masked-text example with no spans degenerates to pure OCR") {
    const auto doc = simple_doc("plain words here");
    const auto ex = build_mdtg_example(doc, {});
    CHECK(ex.image == doc.image);
    for (const auto role : ex.roles) CHECK(role == LossRole::OCR);
    CHECK(decode(ex.target_tokens) == doc.full_text + "</s>");
}

TEST_CASE("MLM token multiset equals the masked words across 1000 random docs") {
    Rng rng(404);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n_words = 2 + rng.bounded(20);
        const auto doc = simple_doc(random_text(rng, n_words), 200);
        const auto spans = sample_phrase_spans(doc, 0.25, 50000 + trial);
        const auto ex = build_mdtg_example(doc, spans);
        REQUIRE(ex.roles.size() == ex.target_tokens.size());

        std::multiset<TokenId> mlm_tokens;
        for (std::size_t i = 0; i < ex.roles.size(); ++i)
            if (ex.roles[i] == LossRole::MLM) mlm_tokens.insert(ex.target_tokens[i]);

        std::multiset<TokenId> expected;
        for (const auto& span : spans)
            for (int w = span.begin; w < span.end; ++w)
                for (TokenId id : encode(doc.words[static_cast<std::size_t>(w)].text))
                    expected.insert(id);

        CHECK(mlm_tokens == expected);
        CHECK(ex.roles.back() == LossRole::OCR);  // end token scores under OCR
    }
}

TEST_CASE("box serialization emits corner coordinates as text") {
    RenderedDocument doc;
    doc.image = PixelImage(300, 100);
    doc.words = {{"Price", 120, 40, 50, 16}};
    doc.full_text = "Price";

    const auto to_box = serialize_bbox_example(doc, 0, BboxDirection::text_to_box);
    to_box.validate();
    CHECK(to_box.task_tag == TaskTag::BB);
    CHECK(to_box.prefix_tokens.front() == tok::kBb);
    std::vector<TokenId> prefix_rest(to_box.prefix_tokens.begin() + 1, to_box.prefix_tokens.end());
    CHECK(decode(prefix_rest) == "Price");
    CHECK(decode(to_box.target_tokens) == "120 40 170 56</s>");
    for (const auto role : to_box.roles) CHECK(role == LossRole::BB);

    const auto to_text = serialize_bbox_example(doc, 0, BboxDirection::box_to_text);
    CHECK(to_text.prefix_tokens.front() == tok::kBb);
    std::vector<TokenId> coord_rest(to_text.prefix_tokens.begin() + 1, to_text.prefix_tokens.end());
    CHECK(decode(coord_rest) == "120 40 170 56");
    CHECK(decode(to_text.target_tokens) == "Price</s>");

    // round trip: parsing the serialized target recovers the corners
    CHECK(parse_bbox_prediction(to_box.target_tokens) == BoxCorners{120, 40, 170, 56});

    CHECK_THROWS_WITH_AS(serialize_bbox_example(doc, 1, BboxDirection::text_to_box),
                         doctest::Contains("out of range"), Error);
}

TEST_CASE("box round trip holds for every word of rendered documents") {
    TableSpec table;
    table.caption = "Prices today";
    table.header = {"Fruit", "Price"};
    table.rows = {{"Mangoes", "3"}, {"Apples", "2"}};
    const std::vector<RenderedDocument> docs = {
        simple_doc("the quick brown fox jumps over thirteen lazy dogs", 180),
        render_table_image(table, style_preset("banded"), 21),
    };
    for (const auto& doc : docs) {
        for (std::size_t w = 0; w < doc.words.size(); ++w) {
            const auto ex = serialize_bbox_example(doc, w, BboxDirection::text_to_box);
            const auto parsed = parse_bbox_prediction(ex.target_tokens);
            const auto& box = doc.words[w];
            CHECK(parsed == BoxCorners{box.x, box.y, box.x + box.w, box.y + box.h});
        }
    }
}

TEST_CASE("box parsing accepts only four ordered non-negative integers") {
    CHECK(parse_bbox_prediction(encode("3 4 10 20")) == BoxCorners{3, 4, 10, 20});
    CHECK(parse_bbox_prediction(encode("  3\t4  10 20 ")) == BoxCorners{3, 4, 10, 20});

    auto with_end = encode("3 4 10 20");
    with_end.push_back(tok::kEnd);
    CHECK(parse_bbox_prediction(with_end) == BoxCorners{3, 4, 10, 20});

    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("3 4 2 20")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("3 4 10 4")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("3 4 10")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("3 4 10 20 5")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("3 4 10 x")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("-3 4 10 20")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction(encode("3 4 99999999999 20")),
                         doctest::Contains("unparseable box"), Error);
    CHECK_THROWS_WITH_AS(parse_bbox_prediction({tok::kQa}),
                         doctest::Contains("unparseable box"), Error);
}

TEST_CASE("question-answer example stacks a banner and scores under QA") {
    TableSpec table;
    table.header = {"Fruit", "Price"};
    table.rows = {{"Mangoes", "3"}, {"Apples", "2"}};
    const auto doc = render_table_image(table, style_preset("plain"), 5);

    const std::string question = "How many rows are there in this table?";
    const auto ex = build_rqa_example(doc, question, "2", doc.style);
    ex.validate();

    CHECK(ex.task_tag == TaskTag::RQA);
    CHECK(ex.prefix_tokens.front() == tok::kQa);
    std::vector<TokenId> rest(ex.prefix_tokens.begin() + 1, ex.prefix_tokens.end());
    CHECK(decode(rest) == question);
    CHECK(decode(ex.target_tokens) == "2</s>");
    for (const auto role : ex.roles) CHECK(role == LossRole::QA);
    CHECK(ex.image.height > doc.image.height);
    CHECK(ex.image.width >= doc.image.width);

    // determinism
    const auto again = build_rqa_example(doc, question, "2", doc.style);
    CHECK(again.image == ex.image);

    CHECK_THROWS_WITH_AS(build_rqa_example(doc, "", "2", doc.style),
                         doctest::Contains("question"), Error);
    CHECK_THROWS_WITH_AS(build_rqa_example(doc, question, "", doc.style),
                         doctest::Contains("answer"), Error);
    CHECK_THROWS_WITH_AS(build_rqa_example(doc, "café?", "2", doc.style),
                         doctest::Contains("unsupported glyph"), Error);
}

TEST_CASE("patch-reconstruction example carries a mask and no token targets") {
    const PatchGrid grid{16, 16};
    const PixelImage image(grid.target_width(), grid.target_height());
    const auto ex = build_mae_example(image, grid, 0.15, 99);
    ex.validate();

    CHECK(ex.task_tag == TaskTag::MAE);
    CHECK(ex.prefix_tokens == std::vector<TokenId>{tok::kMae});
    CHECK(ex.target_tokens.empty());
    CHECK(ex.roles.empty());
    REQUIRE(ex.mae_mask.size() == 38);
    CHECK(ex.mae_mask == sample_patch_mask(256, 0.15, 99));

    CHECK_THROWS_WITH_AS(build_mae_example(PixelImage(100, 100), grid, 0.15, 99),
                         doctest::Contains("does not match"), Error);
}

TEST_CASE("example validation enforces the cross-field invariants") {
    TrainingExample ex;
    ex.task_tag = TaskTag::MAE;
    CHECK_THROWS_WITH_AS(ex.validate(), doctest::Contains("no masked patches"), Error);

    ex.mae_mask = {1, 2};
    ex.target_tokens = {tok::kEnd};
    ex.roles = {LossRole::OCR};
    CHECK_THROWS_WITH_AS(ex.validate(), doctest::Contains("must not carry token targets"), Error);

    TrainingExample gen;
    gen.task_tag = TaskTag::RQA;
    gen.target_tokens = {65, tok::kEnd};
    gen.roles = {LossRole::QA};  // wrong length
    CHECK_THROWS_WITH_AS(gen.validate(), doctest::Contains("roles length"), Error);

    gen.roles = {LossRole::QA, LossRole::QA};
    gen.mae_mask = {3};
    CHECK_THROWS_WITH_AS(gen.validate(), doctest::Contains("must not carry a patch mask"), Error);

    gen.mae_mask.clear();
    gen.target_tokens = {65, 66};
    CHECK_THROWS_WITH_AS(gen.validate(), doctest::Contains("end with the end token"), Error);
}

TEST_CASE("role and task names are stable lowercase identifiers") {
    CHECK(loss_role_name(LossRole::OCR) == "ocr");
    CHECK(loss_role_name(LossRole::MLM) == "mlm");
    CHECK(loss_role_name(LossRole::QA) == "qa");
    CHECK(loss_role_name(LossRole::BB) == "bb");
    CHECK(loss_role_name(LossRole::IGNORE) == "ignore");
    CHECK(task_tag_name(TaskTag::MAE) == "mae");
    CHECK(task_tag_name(TaskTag::MDTG) == "mdtg");
    CHECK(task_tag_name(TaskTag::RQA) == "rqa");
    CHECK(task_tag_name(TaskTag::BB) == "bb");
}
