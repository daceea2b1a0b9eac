#pragma once

#include <string>
#include <vector>

#include "tvq/tensor.hpp"

namespace tvq {

// Binary PPM (P6), 8-bit. Values are clamped to [0,1] and quantized on write.
void write_ppm(const std::string& path, const Tensor& image);  // (3,H,W)
Tensor read_ppm(const std::string& path);                      // -> (3,H,W) in [0,1]

// Tiles equally sized (3,H,W) images into one row-major grid image.
Tensor tile_grid(const std::vector<Tensor>& images, int columns, int pad_px = 2);

}  // namespace tvq
