#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "objattr/types.hpp"

namespace objattr {

/// Failure to read or write an image or artifact file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads PNG (gray, gray+alpha, RGB, RGBA; 8 or 16 bit) or binary PPM (P6).
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const Image& image);
/// Single-channel 8-bit PNG.
void write_png_gray(const std::filesystem::path& path, int height, int width,
                    std::span<const std::uint8_t> values);

void write_ppm(const std::filesystem::path& path, const Image& image);

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const std::filesystem::path& path, int height, int width,
                 std::span<const std::uint16_t> values);
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& height, int& width);

/// Write-temp-then-rename so readers never observe partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> contents);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace objattr
