#pragma once

#include <cstdint>
#include <vector>

#include "pixeldoc/image.hpp"

namespace pixeldoc {

// Patches are square and fixed-size; grids never exceed this many patches.
inline constexpr int kPatchPx = 14;
inline constexpr int kMaxPatches = 4096;

// A rows x cols tiling of 14 px patches. The long/short side ratio is always
// an even power of 2: 1, 4, 16, 64, 256, 1024 or 4096.
struct PatchGrid {
    int rows = 0;
    int cols = 0;

    int n_patches() const { return rows * cols; }
    int target_width() const { return cols * kPatchPx; }
    int target_height() const { return rows * kPatchPx; }

    void validate() const;  // throws a data error on any broken invariant
    bool operator==(const PatchGrid&) const = default;
};

// Row-major patch vectors; each patch holds 14*14*3 values in [0,1], laid
// out (py*14 + px)*3 + channel. pos_emb is filled only when patchify is
// asked for an embedding dimension.
struct PatchSequence {
    PatchGrid grid;
    std::vector<std::vector<double>> patches;
    std::vector<std::vector<double>> pos_emb;
};

// Picks the maximal grid within `budget` whose aspect ratio is the snap of
// src's aspect: nearest even power of 2 in log space, ties toward the
// smaller ratio, orientation preserved.
PatchGrid choose_grid(int src_width, int src_height, int budget = kMaxPatches);

// Fixed-resolution helpers: 224 -> 16x16 grid, 896 -> 64x64 grid.
PatchGrid fixed_grid(int side_px);

// Half-pixel-center bilinear resize, channels independent, results rounded
// to the nearest integer in [0,255].
PixelImage resize_bilinear(const PixelImage& img, int target_w, int target_h);

// Tiles img (whose dimensions must equal the grid target) into patch
// vectors scaled to [0,1]. d_emb > 0 additionally fills pos_emb with
// sinusoidal embeddings of that dimension.
PatchSequence patchify(const PixelImage& img, const PatchGrid& grid, int d_emb = 0);

// Exact inverse of patchify's tiling, up to the single round-to-nearest
// rescale back to [0,255].
PixelImage unpatchify(const PatchSequence& seq);

// pe[pos][2i] = sin(pos / 10000^(2i/d)), pe[pos][2i+1] = cos of the same.
std::vector<std::vector<double>> sinusoidal_pos_emb(int n_positions, int d);

}  // namespace pixeldoc
