#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tvq/tensor.hpp"

namespace tvq {

struct DegradationConfig {
  double blur_sigma_min = 0.4;
  double blur_sigma_max = 1.6;
  int downsample_factor = 4;
  double noise_sigma_min = 0.002;
  double noise_sigma_max = 0.012;
  uint64_t seed = 0;
};

// HR image plus the derived low-resolution input and extreme-low-res anchor,
// with the ground-truth structure/texture decomposition retained.
struct ImageSample {
  Tensor X;          // (3,H,H) in [0,1]
  Tensor Y;          // (3,H/4,H/4)
  Tensor X_down;     // (3,H/xdown,H/xdown)
  Tensor structure;  // (3,H,H) smooth component
  Tensor textured;   // (3,H,H) sum of mask*texture (pre-clamp addend)
  uint64_t seed = 0;
  int structure_id = 0;
  int texture_id = 0;
};

struct CorpusConfig {
  int hr_size = 64;
  int xdown_factor = 8;
  DegradationConfig degradation;
};

struct Corpus {
  CorpusConfig config;
  uint64_t seed = 0;
  std::vector<ImageSample> samples;
};

// Smooth composition of 2-5 soft-edged ellipses over a linear gradient,
// band-limited by a final Gaussian blur. Values in [0,1].
Tensor gen_structure_field(uint64_t seed, int size);

// Zero-mean high-frequency field, amplitude <= 0.3. texture_id indexes a
// fixed bank; unknown ids are an error.
Tensor gen_texture_field(uint64_t seed, int texture_id, int size);
int texture_bank_size();

// X = clamp01(structure + sum_r mask_r * texture_r). Returns (X, textured)
// where textured is the pre-clamp texture addend.
std::pair<Tensor, Tensor> compose_hr(const Tensor& structure, const std::vector<Tensor>& textures,
                                     const std::vector<Tensor>& masks);

// Gaussian blur (sigma sampled from cfg range) -> factor-4 average pool ->
// additive Gaussian noise -> clamp. All sampling derives from cfg.seed.
Tensor degrade_to_lr(const Tensor& X, const DegradationConfig& cfg);

// Plain average pool by `factor`, no blur or noise.
Tensor make_xdown(const Tensor& X, int factor = 8);

// Separable Gaussian blur with replicate edges (kernel radius 3*sigma).
Tensor gaussian_blur(const Tensor& image, double sigma);

Corpus corpus_generate(int n, uint64_t seed, const CorpusConfig& cfg);
void corpus_save(const Corpus& corpus, const std::string& path);
Corpus corpus_load(const std::string& path);

// Batch assembly: stacks per-sample (3,h,w) fields into (N,3,h,w).
Tensor stack_x(const std::vector<const ImageSample*>& batch);
Tensor stack_y(const std::vector<const ImageSample*>& batch);
Tensor stack_xdown(const std::vector<const ImageSample*>& batch);

}  // namespace tvq
