#include "pixeldoc/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace pixeldoc {

PixelImage::PixelImage(int w, int h, Rgb fill) : width(w), height(h) {
    if (w < 1 || h < 1) {
        throw_data("image dimensions must be at least 1x1");
    }
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

void PixelImage::fill_rect(int x, int y, int w, int h, Rgb color) {
    const int x0 = std::max(0, x);
    const int y0 = std::max(0, y);
    const int x1 = std::min(width, x + w);
    const int y1 = std::min(height, y + h);
    for (int yy = y0; yy < y1; ++yy) {
        for (int xx = x0; xx < x1; ++xx) {
            at(xx, yy) = color;
        }
    }
}

std::vector<std::uint8_t> encode_ppm(const PixelImage& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height) {
        throw_data("cannot encode malformed image");
    }
    std::string header = "P6\n" + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out;
    out.reserve(header.size() + img.pixels.size() * 3);
    out.insert(out.end(), header.begin(), header.end());
    for (const Rgb& p : img.pixels) {
        out.push_back(p.r);
        out.push_back(p.g);
        out.push_back(p.b);
    }
    return out;
}

namespace {

bool is_ppm_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Reads one whitespace-delimited unsigned decimal token.
long read_ppm_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size() && is_ppm_space(bytes[pos])) {
        ++pos;
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
        throw_data("malformed PPM header");
    }
    long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + (bytes[pos] - '0');
        if (value > 1000000000L) {
            throw_data("malformed PPM header: value out of range");
        }
        ++pos;
    }
    return value;
}

}  // namespace

PixelImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') {
        throw_data("unsupported PPM dialect: missing magic");
    }
    if (bytes[1] != '6') {
        throw_data(std::string("unsupported PPM dialect: P") +
                   static_cast<char>(bytes[1]) + " (only binary P6 is handled)");
    }
    std::size_t pos = 2;
    const long w = read_ppm_int(bytes, pos);
    const long h = read_ppm_int(bytes, pos);
    const long maxval = read_ppm_int(bytes, pos);
    if (maxval != 255) {
        throw_data("unsupported PPM maxval " + std::to_string(maxval) +
                   " (must be 255)");
    }
    if (pos >= bytes.size() || !is_ppm_space(bytes[pos])) {
        throw_data("malformed PPM header: missing separator before payload");
    }
    ++pos;  // single whitespace byte between header and payload
    if (w < 1 || h < 1) {
        throw_data("malformed PPM header: non-positive dimensions");
    }
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (bytes.size() - pos < need) {
        throw_data("truncated PPM payload: expected " + std::to_string(need) +
                   " bytes, got " + std::to_string(bytes.size() - pos));
    }
    PixelImage img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = {bytes[pos + i * 3], bytes[pos + i * 3 + 1],
                         bytes[pos + i * 3 + 2]};
    }
    return img;
}

void write_ppm_file(const PixelImage& img, const std::string& path) {
    const std::vector<std::uint8_t> bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw_data("cannot open for writing: " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw_data("write failed: " + path);
    }
}

PixelImage read_ppm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_data("cannot open: " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_ppm(bytes);
}

}  // namespace pixeldoc
