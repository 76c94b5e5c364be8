#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "texanno/imaging.hpp"

namespace texanno {

// 8-bit RGB PNG codec. Alpha is stripped and grayscale is expanded on read.
std::vector<std::uint8_t> encode_png(const Raster& raster);
Raster decode_png(const std::vector<std::uint8_t>& bytes);

Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);

// Single-channel 0/255 mask images.
std::vector<std::uint8_t> encode_mask_png(int width, int height,
                                          const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> read_mask_png(const std::filesystem::path& path,
                                        int& width, int& height);

}  // namespace texanno
