#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cgsam/image.hpp"

namespace cgsam {

std::size_t BinaryMask::count() const
{
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

std::uint8_t to_byte(real v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

namespace {

struct Decoded {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> bytes;
};

// All PNG variants are normalized to 8-bit gray or RGB (alpha dropped).
Decoded decode(const std::vector<std::uint8_t>& data, const std::string& what)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, data.data(), data.size()))
        throw IoError("cannot decode PNG " + what + ": " + img.message);
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Decoded d;
    d.height = static_cast<int>(img.height);
    d.width = static_cast<int>(img.width);
    d.channels = gray ? 1 : 3;
    d.bytes.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, d.bytes.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("cannot decode PNG " + what + ": " + img.message);
    }
    return d;
}

std::vector<std::uint8_t> encode(int height, int width, int channels, const std::vector<std::uint8_t>& bytes)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, bytes.data(), 0, nullptr))
        throw IoError(std::string("cannot encode PNG: ") + img.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, bytes.data(), 0, nullptr))
        throw IoError(std::string("cannot encode PNG: ") + img.message);
    out.resize(size);
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

Image to_image(const Decoded& d)
{
    Image im(d.height, d.width);
    for (int i = 0; i < d.height * d.width; ++i)
        for (int c = 0; c < 3; ++c) {
            const std::uint8_t b = d.channels == 1 ? d.bytes[i] : d.bytes[static_cast<std::size_t>(i) * 3 + c];
            im.pixels(i, c) = b / 255.0;
        }
    return im;
}

}  // namespace

std::vector<std::uint8_t> encode_png_rgb(const Image& image)
{
    std::vector<std::uint8_t> bytes(image.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image.pixels.data[i]);
    return encode(image.height, image.width, 3, bytes);
}

std::vector<std::uint8_t> encode_png_gray(int height, int width, const std::vector<real>& values)
{
    std::vector<std::uint8_t> bytes(values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(values[i]);
    return encode(height, width, 1, bytes);
}

Image decode_png_rgb(const std::vector<std::uint8_t>& bytes) { return to_image(decode(bytes, "image")); }

Image read_png_rgb(const std::filesystem::path& path)
{
    return to_image(decode(read_file(path), path.string()));
}

void write_png_rgb(const std::filesystem::path& path, const Image& image) { write_file(path, encode_png_rgb(image)); }

BinaryMask read_png_mask(const std::filesystem::path& path)
{
    const Decoded d = decode(read_file(path), path.string());
    BinaryMask m(d.height, d.width);
    for (int i = 0; i < d.height * d.width; ++i) {
        const std::uint8_t b = d.bytes[static_cast<std::size_t>(i) * d.channels];
        m.values[i] = b != 0 ? 1 : 0;
    }
    return m;
}

void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask)
{
    std::vector<std::uint8_t> bytes(mask.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
    write_file(path, encode(mask.height, mask.width, 1, bytes));
}

void write_png_gray(const std::filesystem::path& path, int height, int width, const std::vector<real>& values)
{
    write_file(path, encode_png_gray(height, width, values));
}

}  // namespace cgsam
