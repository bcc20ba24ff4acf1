#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dsa/image.hpp"

namespace dsa {

// Decodes PNG/JPEG/BMP by content sniffing. Throws DecodeFailure on any
// malformed input (corrupt files are expected in the wild and must not abort
// the process). Alpha is stripped, palettes expanded, 16-bit reduced to 8.
Image load_image(const std::filesystem::path& p);
Image decode_image(const std::vector<std::uint8_t>& bytes);

// Lossless workspace format is PNG everywhere.
std::vector<std::uint8_t> encode_png(const Image& img);
void save_png(const std::filesystem::path& p, const Image& img);

// Paletted PNG with one entry per label value; used for semantic masks.
// Values above the palette size throw TooManyClasses.
std::vector<std::uint8_t> encode_png_indexed(const Mask& m,
                                             const std::vector<std::array<std::uint8_t, 3>>& palette);

// Reads an 8-bit paletted PNG back as raw indices (no palette expansion).
Mask load_png_indices(const std::filesystem::path& p);
Mask decode_png_indices(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p);
void write_file_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes);

}  // namespace dsa
