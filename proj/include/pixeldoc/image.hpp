#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pixeldoc/common.hpp"

namespace pixeldoc {

// Row-major RGB raster, origin at the top-left corner.
struct PixelImage {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;

    PixelImage() = default;
    PixelImage(int w, int h, Rgb fill = {255, 255, 255});

    Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const Rgb& at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }

    bool in_bounds(int x, int y) const {
        return x >= 0 && y >= 0 && x < width && y < height;
    }

    void fill_rect(int x, int y, int w, int h, Rgb color);

    bool operator==(const PixelImage&) const = default;
};

// Binary PPM, header "P6\n<w> <h>\n255\n" followed by raw RGB bytes.
std::vector<std::uint8_t> encode_ppm(const PixelImage& img);
PixelImage decode_ppm(const std::vector<std::uint8_t>& bytes);

void write_ppm_file(const PixelImage& img, const std::string& path);
PixelImage read_ppm_file(const std::string& path);

}  // namespace pixeldoc
