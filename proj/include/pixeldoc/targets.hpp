#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pixeldoc/image.hpp"
#include "pixeldoc/patchify.hpp"
#include "pixeldoc/raster.hpp"
#include "pixeldoc/tokenizer.hpp"

namespace pixeldoc {

// Which loss a target-token position is scored under.
enum class LossRole { OCR, MLM, QA, BB, IGNORE };

enum class TaskTag { MAE, MDTG, RQA, BB };

std::string loss_role_name(LossRole role);
std::string task_tag_name(TaskTag tag);

// Default fraction of patches / words blanked out for reconstruction tasks.
inline constexpr double kPatchMaskRatio = 0.15;
inline constexpr double kPhraseMaskRatio = 0.15;

// One supervised example. Generative tasks carry token targets (ending in
// the end token) with one loss role per position; the patch-reconstruction
// task instead carries the list of masked patch indices.
struct TrainingExample {
    PixelImage image;
    std::vector<TokenId> prefix_tokens;  // decoder prompt; never scored
    std::vector<TokenId> target_tokens;
    std::vector<LossRole> roles;  // per target position
    TaskTag task_tag = TaskTag::MAE;
    std::vector<int> mae_mask;  // masked patch indices; empty for generative tasks

    void validate() const;  // throws a data error on any broken invariant
};

// Exactly floor(ratio * n_patches) distinct patch indices, uniform without
// replacement, sorted ascending. Deterministic in (n_patches, ratio, seed).
std::vector<int> sample_patch_mask(int n_patches, double ratio, std::uint64_t seed);

// Disjoint word-index spans of length 1-3 (uniform length, uniform free
// starts) covering exactly round(word_ratio * n_words) words, sorted by
// begin. A tiny document may round to zero spans.
std::vector<WordSpan> sample_phrase_spans(const RenderedDocument& doc, double word_ratio,
                                          std::uint64_t seed);

// Patch-reconstruction example: the image must match the grid's pixel size.
TrainingExample build_mae_example(const PixelImage& image, const PatchGrid& grid, double ratio,
                                  std::uint64_t seed);

// Masked-text-generation example: the image has the spanned words blanked
// out, the target is the full document text. Token positions inside masked
// words score under MLM, everything else (separators and the end token
// included) under OCR.
TrainingExample build_mdtg_example(const RenderedDocument& doc,
                                   const std::vector<WordSpan>& spans);

enum class BboxDirection { text_to_box, box_to_text };

// Corner form of a word box: x2 = x + w, y2 = y + h.
struct BoxCorners {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;
    bool operator==(const BoxCorners&) const = default;
};

// Box-grounding example in either direction. Coordinates are serialized as
// the decimal string "x1 y1 x2 y2" in the image pixel frame; all target
// positions score under BB.
TrainingExample serialize_bbox_example(const RenderedDocument& doc, std::size_t word_index,
                                       BboxDirection direction);

// Strict inverse of the coordinate serialization: exactly four
// whitespace-separated non-negative integers with x2 > x1 and y2 > y1. A
// single trailing end token is tolerated. Anything else throws a data error
// mentioning "unparseable box" (treated as an automatic miss in evaluation).
BoxCorners parse_bbox_prediction(const std::vector<TokenId>& tokens);

// Question-answering example: the question is rendered as a banner above the
// document, the decoder prompt is the [QA] token plus the question, and the
// target is the answer. All target positions score under QA.
TrainingExample build_rqa_example(const RenderedDocument& doc, const std::string& question,
                                  const std::string& answer, const StylePreset& banner_style);

}  // namespace pixeldoc
