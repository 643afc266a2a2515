#include "pixeldoc/patchify.hpp"

#include <algorithm>
#include <cmath>

#include "pixeldoc/common.hpp"

namespace pixeldoc {

namespace {

long long integer_sqrt(long long q) {
    long long r = static_cast<long long>(std::sqrt(static_cast<double>(q)));
    while ((r + 1) * (r + 1) <= q) ++r;
    while (r * r > q) --r;
    return r;
}

bool is_even_power_of_two(long long v) {
    for (long long s = 1; s <= kMaxPatches; s *= 4)
        if (v == s) return true;
    return false;
}

}  // namespace

void PatchGrid::validate() const {
    if (rows < 1 || cols < 1) throw_data("patch grid sides must be at least 1");
    if (static_cast<long long>(rows) * cols > kMaxPatches)
        throw_data("patch grid exceeds the " + std::to_string(kMaxPatches) + "-patch ceiling");
    long long lo = std::min(rows, cols), hi = std::max(rows, cols);
    if (hi % lo != 0 || !is_even_power_of_two(hi / lo))
        throw_data("patch grid aspect ratio " + std::to_string(rows) + "x" +
                   std::to_string(cols) + " is not an even power of 2");
}

PatchGrid choose_grid(int src_width, int src_height, int budget) {
    if (src_width < 1 || src_height < 1) throw_data("image dimensions must be at least 1");
    if (budget < 1) throw_data("patch budget must be at least 1");
    if (budget > kMaxPatches)
        throw_data("patch budget exceeds the " + std::to_string(kMaxPatches) + "-patch ceiling");

    const long long longer = std::max(src_width, src_height);
    const long long shorter = std::min(src_width, src_height);

    // Snap the aspect ratio to the nearest even power of 2 in log space.
    // The midpoint between 4^k and 4^(k+1) is 2*4^k, so move up only while
    // the true ratio is strictly past it (ties stay with the smaller s).
    long long s = 1;
    while (s < kMaxPatches && longer > 2 * s * shorter) s *= 4;

    const long long q = budget / s;
    const long long short_side = integer_sqrt(q);
    if (short_side < 1)
        throw_data("budget too small: " + std::to_string(budget) +
                   " patches cannot fit one row at aspect ratio " + std::to_string(s));
    const long long long_side = s * short_side;

    PatchGrid grid;
    if (src_width >= src_height) {
        grid.rows = static_cast<int>(short_side);
        grid.cols = static_cast<int>(long_side);
    } else {
        grid.rows = static_cast<int>(long_side);
        grid.cols = static_cast<int>(short_side);
    }
    grid.validate();
    return grid;
}

PatchGrid fixed_grid(int side_px) {
    if (side_px % kPatchPx != 0)
        throw_data("fixed resolution " + std::to_string(side_px) + " is not a multiple of " +
                   std::to_string(kPatchPx));
    PatchGrid grid{side_px / kPatchPx, side_px / kPatchPx};
    grid.validate();
    return grid;
}

PixelImage resize_bilinear(const PixelImage& img, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1) throw_data("resize target must be at least 1x1");
    if (img.width < 1 || img.height < 1) throw_data("cannot resize an empty image");
    if (target_w == img.width && target_h == img.height) return img;

    PixelImage out(target_w, target_h);
    const double sx_scale = static_cast<double>(img.width) / target_w;
    const double sy_scale = static_cast<double>(img.height) / target_h;

#pragma omp parallel for schedule(static)
    for (int dy = 0; dy < target_h; ++dy) {
        double sy = (dy + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = sy - y0;
        for (int dx = 0; dx < target_w; ++dx) {
            double sx = (dx + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = sx - x0;

            const Rgb p00 = img.at(x0, y0), p10 = img.at(x1, y0);
            const Rgb p01 = img.at(x0, y1), p11 = img.at(x1, y1);
            auto lerp2 = [&](std::uint8_t c00, std::uint8_t c10, std::uint8_t c01,
                             std::uint8_t c11) {
                const double top = c00 * (1.0 - fx) + c10 * fx;
                const double bot = c01 * (1.0 - fx) + c11 * fx;
                const double v = top * (1.0 - fy) + bot * fy;
                return static_cast<std::uint8_t>(std::floor(v + 0.5));
            };
            out.at(dx, dy) = {lerp2(p00.r, p10.r, p01.r, p11.r),
                              lerp2(p00.g, p10.g, p01.g, p11.g),
                              lerp2(p00.b, p10.b, p01.b, p11.b)};
        }
    }
    return out;
}

PatchSequence patchify(const PixelImage& img, const PatchGrid& grid, int d_emb) {
    grid.validate();
    if (img.width != grid.target_width() || img.height != grid.target_height())
        throw_data("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                   " does not match the grid target " + std::to_string(grid.target_width()) +
                   "x" + std::to_string(grid.target_height()));

    PatchSequence seq;
    seq.grid = grid;
    const int n = grid.n_patches();
    seq.patches.assign(static_cast<std::size_t>(n),
                       std::vector<double>(static_cast<std::size_t>(kPatchPx * kPatchPx * 3)));
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n; ++p) {
        const int gy = p / grid.cols;
        const int gx = p % grid.cols;
        auto& patch = seq.patches[static_cast<std::size_t>(p)];
        std::size_t i = 0;
        for (int py = 0; py < kPatchPx; ++py) {
            for (int px = 0; px < kPatchPx; ++px) {
                const Rgb c = img.at(gx * kPatchPx + px, gy * kPatchPx + py);
                patch[i++] = c.r / 255.0;
                patch[i++] = c.g / 255.0;
                patch[i++] = c.b / 255.0;
            }
        }
    }
    if (d_emb > 0) seq.pos_emb = sinusoidal_pos_emb(n, d_emb);
    return seq;
}

PixelImage unpatchify(const PatchSequence& seq) {
    seq.grid.validate();
    if (static_cast<int>(seq.patches.size()) != seq.grid.n_patches())
        throw_data("patch count does not match the grid");
    for (const auto& patch : seq.patches)
        if (patch.size() != static_cast<std::size_t>(kPatchPx * kPatchPx * 3))
            throw_data("patch vector has the wrong length");
    PixelImage img(seq.grid.target_width(), seq.grid.target_height());
    const int n = seq.grid.n_patches();
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n; ++p) {
        const int gy = p / seq.grid.cols;
        const int gx = p % seq.grid.cols;
        const auto& patch = seq.patches[static_cast<std::size_t>(p)];
        std::size_t i = 0;
        for (int py = 0; py < kPatchPx; ++py) {
            for (int px = 0; px < kPatchPx; ++px) {
                auto channel = [&](double v) {
                    v = std::clamp(v, 0.0, 1.0);
                    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
                };
                img.at(gx * kPatchPx + px, gy * kPatchPx + py) = {
                    channel(patch[i]), channel(patch[i + 1]), channel(patch[i + 2])};
                i += 3;
            }
        }
    }
    return img;
}

std::vector<std::vector<double>> sinusoidal_pos_emb(int n_positions, int d) {
    if (n_positions < 1) throw_data("need at least one position");
    if (d < 2 || d % 2 != 0)
        throw_data("position embedding dimension must be a positive even number");
    std::vector<std::vector<double>> pe(static_cast<std::size_t>(n_positions),
                                        std::vector<double>(static_cast<std::size_t>(d)));
    for (int pos = 0; pos < n_positions; ++pos) {
        for (int i = 0; 2 * i < d; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / d);
            pe[static_cast<std::size_t>(pos)][static_cast<std::size_t>(2 * i)] =
                std::sin(pos * freq);
            pe[static_cast<std::size_t>(pos)][static_cast<std::size_t>(2 * i + 1)] =
                std::cos(pos * freq);
        }
    }
    return pe;
}

}  // namespace pixeldoc
