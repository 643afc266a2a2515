#include "pixeldoc/targets.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <numeric>

#include "pixeldoc/common.hpp"
#include "pixeldoc/rng.hpp"

namespace pixeldoc {

std::string loss_role_name(LossRole role) {
    switch (role) {
        case LossRole::OCR: return "ocr";
        case LossRole::MLM: return "mlm";
        case LossRole::QA: return "qa";
        case LossRole::BB: return "bb";
        case LossRole::IGNORE: return "ignore";
    }
    throw_data("unknown loss role");
}

std::string task_tag_name(TaskTag tag) {
    switch (tag) {
        case TaskTag::MAE: return "mae";
        case TaskTag::MDTG: return "mdtg";
        case TaskTag::RQA: return "rqa";
        case TaskTag::BB: return "bb";
    }
    throw_data("unknown task tag");
}

void TrainingExample::validate() const {
    if (roles.size() != target_tokens.size())
        throw_data("roles length must match target length");
    if (task_tag == TaskTag::MAE) {
        if (mae_mask.empty()) throw_data("patch-mask example has no masked patches");
        if (!target_tokens.empty())
            throw_data("patch-mask example must not carry token targets");
    } else {
        if (!mae_mask.empty()) throw_data("generative example must not carry a patch mask");
        if (target_tokens.empty() || target_tokens.back() != tok::kEnd)
            throw_data("generative target must end with the end token");
    }
}

std::vector<int> sample_patch_mask(int n_patches, double ratio, std::uint64_t seed) {
    if (n_patches < 1) throw_data("patch count must be at least 1");
    if (!(ratio > 0.0 && ratio < 1.0)) throw_data("mask ratio must be inside (0, 1)");
    const int k = static_cast<int>(ratio * n_patches);  // floor: both factors non-negative
    if (k == 0) throw_data("mask would be empty");

    // Partial Fisher-Yates: the first k slots become a uniform draw without
    // replacement.
    std::vector<int> pool(n_patches);
    std::iota(pool.begin(), pool.end(), 0);
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
        const std::size_t j = i + rng.index(static_cast<std::size_t>(n_patches - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<WordSpan> sample_phrase_spans(const RenderedDocument& doc, double word_ratio,
                                          std::uint64_t seed) {
    const int n = static_cast<int>(doc.words.size());
    if (n < 1) throw_data("document has no words");
    if (!(word_ratio > 0.0 && word_ratio < 1.0)) throw_data("word ratio must be inside (0, 1)");

    int target = static_cast<int>(std::llround(word_ratio * n));
    target = std::min(target, n);
    std::vector<WordSpan> spans;
    if (target == 0) return spans;

    Rng rng(seed);
    std::vector<char> covered(n, 0);
    int total = 0;
    while (total < target) {
        // uniform choice among the still-free word indices
        const int pick = static_cast<int>(rng.index(static_cast<std::size_t>(n - total)));
        int start = 0;
        for (int i = 0, seen = 0; i < n; ++i) {
            if (!covered[i] && seen++ == pick) {
                start = i;
                break;
            }
        }
        int len = 1 + static_cast<int>(rng.index(3));  // uniform span length 1..3
        len = std::min(len, target - total);
        int end = start;
        while (end < n && end - start < len && !covered[end]) ++end;
        for (int i = start; i < end; ++i) covered[i] = 1;
        spans.push_back({start, end});
        total += end - start;
    }
    std::sort(spans.begin(), spans.end(),
              [](const WordSpan& a, const WordSpan& b) { return a.begin < b.begin; });
    return spans;
}

TrainingExample build_mae_example(const PixelImage& image, const PatchGrid& grid, double ratio,
                                  std::uint64_t seed) {
    grid.validate();
    if (image.width != grid.target_width() || image.height != grid.target_height())
        throw_data("image size does not match the patch grid");
    TrainingExample ex;
    ex.task_tag = TaskTag::MAE;
    ex.image = image;
    ex.prefix_tokens = {tok::kMae};
    ex.mae_mask = sample_patch_mask(grid.n_patches(), ratio, seed);
    return ex;
}

TrainingExample build_mdtg_example(const RenderedDocument& doc,
                                   const std::vector<WordSpan>& spans) {
    TrainingExample ex;
    ex.task_tag = TaskTag::MDTG;
    ex.image = apply_mask_rectangles(doc, spans);  // also validates the spans
    ex.prefix_tokens = {tok::kMdtg};
    ex.target_tokens = encode(doc.full_text);
    ex.roles.assign(ex.target_tokens.size(), LossRole::OCR);

    // Byte tokens map 1:1 onto full_text, so word byte ranges are exactly
    // the token positions of each word.
    const auto ranges = word_byte_ranges(doc);
    for (const WordSpan& span : spans)
        for (int w = span.begin; w < span.end; ++w)
            for (std::size_t b = ranges[w].first; b < ranges[w].second; ++b)
                ex.roles[b] = LossRole::MLM;

    ex.target_tokens.push_back(tok::kEnd);
    ex.roles.push_back(LossRole::OCR);
    return ex;
}

namespace {

std::string box_corner_string(const WordBox& box) {
    return std::to_string(box.x) + " " + std::to_string(box.y) + " " +
           std::to_string(box.x + box.w) + " " + std::to_string(box.y + box.h);
}

void append_encoded(std::vector<TokenId>& out, std::string_view text) {
    for (TokenId id : encode(text)) out.push_back(id);
}

}  // namespace

TrainingExample serialize_bbox_example(const RenderedDocument& doc, std::size_t word_index,
                                       BboxDirection direction) {
    if (word_index >= doc.words.size()) throw_data("word index out of range");
    const WordBox& box = doc.words[word_index];
    const std::string coords = box_corner_string(box);

    TrainingExample ex;
    ex.task_tag = TaskTag::BB;
    ex.image = doc.image;
    ex.prefix_tokens = {tok::kBb};
    if (direction == BboxDirection::text_to_box) {
        append_encoded(ex.prefix_tokens, box.text);
        ex.target_tokens = encode(coords);
    } else {
        append_encoded(ex.prefix_tokens, coords);
        ex.target_tokens = encode(box.text);
    }
    ex.target_tokens.push_back(tok::kEnd);
    ex.roles.assign(ex.target_tokens.size(), LossRole::BB);
    return ex;
}

BoxCorners parse_bbox_prediction(const std::vector<TokenId>& tokens) {
    std::vector<TokenId> ids = tokens;
    if (!ids.empty() && ids.back() == tok::kEnd) ids.pop_back();

    std::string text;
    text.reserve(ids.size());
    for (TokenId id : ids) {
        if (id < 0 || id >= tok::kByteCount) throw_data("unparseable box: non-text token");
        text.push_back(static_cast<char>(id));
    }

    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    std::vector<long long> values;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i == text.size()) break;
        if (values.size() == 4) throw_data("unparseable box: expected exactly four numbers");
        long long value = 0;
        std::size_t digits = 0;
        while (i < text.size() && !is_space(text[i])) {
            const char c = text[i++];
            if (c < '0' || c > '9') throw_data("unparseable box: not a non-negative integer");
            value = value * 10 + (c - '0');
            if (value > INT_MAX) throw_data("unparseable box: number out of range");
            ++digits;
        }
        if (digits == 0) throw_data("unparseable box: not a non-negative integer");
        values.push_back(value);
    }
    if (values.size() != 4) throw_data("unparseable box: expected exactly four numbers");

    BoxCorners box{static_cast<int>(values[0]), static_cast<int>(values[1]),
                   static_cast<int>(values[2]), static_cast<int>(values[3])};
    if (box.x2 <= box.x1 || box.y2 <= box.y1) throw_data("unparseable box: empty extent");
    return box;
}

TrainingExample build_rqa_example(const RenderedDocument& doc, const std::string& question,
                                  const std::string& answer, const StylePreset& banner_style) {
    if (question.empty()) throw_data("question must be non-empty");
    if (answer.empty()) throw_data("answer must be non-empty");

    RenderedDocument banner = overlay_question_banner(doc, question, banner_style);
    TrainingExample ex;
    ex.task_tag = TaskTag::RQA;
    ex.image = std::move(banner.image);
    ex.prefix_tokens = {tok::kQa};
    append_encoded(ex.prefix_tokens, question);
    ex.target_tokens = encode(answer);
    ex.target_tokens.push_back(tok::kEnd);
    ex.roles.assign(ex.target_tokens.size(), LossRole::QA);
    return ex;
}

}  // namespace pixeldoc
