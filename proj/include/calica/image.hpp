#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "calica/common.hpp"

namespace calica {

/// Row-major H x W x C image, values in [0, 1]. C is 1 or 3.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    static Image zeros(int w, int h, int c) {
        Image img;
        img.width = w;
        img.height = h;
        img.channels = c;
        img.data.assign(static_cast<size_t>(w) * h * c, 0.0f);
        return img;
    }

    float& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return data.empty(); }
};

/// Binary 8-bit PPM (P6), maxval 255. decode/encode round-trip bit-exactly
/// for canonical headers ("P6\n<w> <h>\n255\n").
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);

Image load_ppm(const std::filesystem::path& path);
void save_ppm(const Image& img, const std::filesystem::path& path);

/// Luma conversion, 0.299 R + 0.587 G + 0.114 B. Single-channel passthrough.
Image grayscale(const Image& img);

/// Bilinear sample with the value lattice at integer coordinates; clamps to
/// the image border. Caller guards out-of-bounds semantics.
float bilinear_sample(const Image& img, double x, double y, int c);

/// Uniform-scale bilinear resize. Throws UserError when the requested size
/// implies a non-uniform scale beyond 2% (single-f camera model assumption).
Image resize_bilinear(const Image& img, int new_w, int new_h);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& bytes);

}  // namespace calica
