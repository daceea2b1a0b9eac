#pragma once

#include "tvq/tensor.hpp"

namespace tvq {

// PSNR in dB for images in [0,1]; +inf for identical inputs.
double psnr(const Tensor& a, const Tensor& b);

// Mean SSIM over valid 7x7 uniform windows, per-channel mean.
// Stabilizers C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace tvq
