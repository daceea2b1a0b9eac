#include "tvq/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace tvq {

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("write_ppm: expected (3,H,W), got " + shape_str(image.shape()));
  const int H = image.dim(1), W = image.dim(2);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << W << " " << H << "\n255\n";
  auto v = image.values();
  for (int y = 0; y < H; y++)
    for (int x = 0; x < W; x++)
      for (int c = 0; c < 3; c++) {
        const double val = std::clamp(static_cast<double>(v[(static_cast<int64_t>(c) * H + y) * W + x]), 0.0, 1.0);
        const unsigned char byte = static_cast<unsigned char>(std::lround(val * 255.0));
        f.write(reinterpret_cast<const char*>(&byte), 1);
      }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  int W = 0, H = 0, maxval = 0;
  f >> magic >> W >> H >> maxval;
  if (magic != "P6" || W <= 0 || H <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  f.get();  // single whitespace after header
  std::vector<scalar> v(static_cast<size_t>(3) * H * W);
  for (int y = 0; y < H; y++)
    for (int x = 0; x < W; x++)
      for (int c = 0; c < 3; c++) {
        unsigned char byte;
        if (!f.read(reinterpret_cast<char*>(&byte), 1))
          throw std::runtime_error("read_ppm: truncated pixel data in " + path);
        v[(static_cast<int64_t>(c) * H + y) * W + x] = static_cast<scalar>(byte) / scalar(255);
      }
  return make_tensor({3, H, W}, std::move(v));
}

Tensor tile_grid(const std::vector<Tensor>& images, int columns, int pad_px) {
  if (images.empty()) throw std::invalid_argument("tile_grid: no images");
  const int H = images[0].dim(1), W = images[0].dim(2);
  for (const auto& im : images)
    if (im.rank() != 3 || im.dim(0) != 3 || im.dim(1) != H || im.dim(2) != W)
      throw std::invalid_argument("tile_grid: images must share shape (3," + std::to_string(H) + "," +
                                  std::to_string(W) + ")");
  const int n = static_cast<int>(images.size());
  const int cols = std::min(columns, n);
  const int rows = (n + cols - 1) / cols;
  const int GH = rows * H + (rows + 1) * pad_px;
  const int GW = cols * W + (cols + 1) * pad_px;
  Tensor grid = full({3, GH, GW}, scalar(1));
  auto g = grid.values();
  for (int i = 0; i < n; i++) {
    const int r = i / cols, c = i % cols;
    const int oy = pad_px + r * (H + pad_px), ox = pad_px + c * (W + pad_px);
    auto v = images[static_cast<size_t>(i)].values();
    for (int ch = 0; ch < 3; ch++)
      for (int y = 0; y < H; y++)
        for (int x = 0; x < W; x++)
          g[(static_cast<int64_t>(ch) * GH + oy + y) * GW + ox + x] =
              v[(static_cast<int64_t>(ch) * H + y) * W + x];
  }
  return grid;
}

}  // namespace tvq
