#pragma once

#include <filesystem>
#include <vector>

#include "tldr/tensor.hpp"

namespace tldr {

// Binary PPM (P6) for 3 x H x W images in [0, 1], 8 bits per channel.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

// Binary PGM (P5) for label maps; values must fit in 0..255.
void write_pgm(const std::filesystem::path& path, const std::vector<int>& labels,
               std::size_t height, std::size_t width);
std::vector<int> read_pgm(const std::filesystem::path& path, std::size_t& height,
                          std::size_t& width);

}  // namespace tldr
