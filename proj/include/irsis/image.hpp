#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "irsis/error.hpp"

namespace irsis {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 8-bit RGB raster, rows top to bottom, channels interleaved.
class RgbImage {
public:
    RgbImage(int width, int height, Rgb fill = {});

    int width() const { return width_; }
    int height() const { return height_; }

    Rgb at(int x, int y) const;
    void put(int x, int y, Rgb c);

    const std::vector<std::uint8_t>& bytes() const { return data_; }
    std::vector<std::uint8_t>& bytes() { return data_; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> data_;
};

// Deterministic 8-bit RGB PNG encoding (no timestamps, fixed filter and level).
std::string encode_png(const RgbImage& image);
// Accepts 8-bit gray/RGB/RGBA and palette PNGs; alpha is dropped.
RgbImage decode_png(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace irsis
