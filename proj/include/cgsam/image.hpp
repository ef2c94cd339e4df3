#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cgsam/tensor.hpp"

namespace cgsam {

/// RGB image with values in [0, 1]; pixels is (height*width) x 3.
struct Image {
    int height = 0;
    int width = 0;
    Matrix pixels;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(h * w, 3) {}
    GridSize size() const { return {height, width}; }
};

/// Row-major {0,1} mask.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    GridSize size() const { return {height, width}; }
    std::uint8_t at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    std::size_t count() const;
    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Lossless 8-bit PNG I/O. Masks are written as single-channel 0/255 and read
// back as {0,1} (any nonzero pixel is foreground).
Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Image& image);
BinaryMask read_png_mask(const std::filesystem::path& path);
void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask);
/// Grayscale from values in [0, 1] (clamped).
void write_png_gray(const std::filesystem::path& path, int height, int width, const std::vector<real>& values);

std::vector<std::uint8_t> encode_png_rgb(const Image& image);
std::vector<std::uint8_t> encode_png_gray(int height, int width, const std::vector<real>& values);
Image decode_png_rgb(const std::vector<std::uint8_t>& bytes);

/// Quantizes to 8 bits per channel (round to nearest) and back.
std::uint8_t to_byte(real v);

}  // namespace cgsam
