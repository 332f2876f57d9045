#pragma once

#include <filesystem>
#include <string>

#include "ovfer/tensor.hpp"

namespace ovfer::imageio {

// Reads .pgm (P5), .ppm (P6) or .pfm (Pf/PF) by extension. 8-bit formats are
// scaled to [0,1]; PFM floats are taken as-is. Returns channels x h x w.
Tensor3 read_image(const std::filesystem::path& path);

// PFM, float32, little-endian. channels must be 1 or 3.
void write_pfm(const std::filesystem::path& path, const Tensor3& img);

// P6 (channels==3) or P5 (channels==1), values clamped to [0,1] then
// quantized to 8 bits.
void write_pnm(const std::filesystem::path& path, const Tensor3& img);

bool is_supported_image(const std::filesystem::path& path);

}  // namespace ovfer::imageio
