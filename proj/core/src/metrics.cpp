#include "tvq/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tvq {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                (a.defined() ? shape_str(a.shape()) : "(undefined)") + " vs " +
                                (b.defined() ? shape_str(b.shape()) : "(undefined)"));
  if (a.rank() != 3) throw std::invalid_argument(std::string(who) + ": expected (C,H,W) images");
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "psnr");
  auto av = a.values();
  auto bv = b.values();
  double se = 0;
  for (size_t i = 0; i < av.size(); i++) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(av.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "ssim");
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  constexpr int kWin = 7;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  if (H < kWin || W < kWin)
    throw std::invalid_argument("ssim: image smaller than the 7x7 window, shape " + shape_str(a.shape()));

  auto av = a.values();
  auto bv = b.values();
  const double inv_n = 1.0 / (kWin * kWin);
  double total = 0;
  int64_t windows = 0;
  for (int c = 0; c < C; c++) {
    const scalar* pa = av.data() + static_cast<int64_t>(c) * H * W;
    const scalar* pb = bv.data() + static_cast<int64_t>(c) * H * W;
    for (int y = 0; y + kWin <= H; y++)
      for (int x = 0; x + kWin <= W; x++) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < kWin; dy++)
          for (int dx = 0; dx < kWin; dx++) {
            const double va = pa[static_cast<int64_t>(y + dy) * W + x + dx];
            const double vb = pb[static_cast<int64_t>(y + dy) * W + x + dx];
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        const double mu_a = sa * inv_n, mu_b = sb * inv_n;
        const double var_a = saa * inv_n - mu_a * mu_a;
        const double var_b = sbb * inv_n - mu_b * mu_b;
        const double cov = sab * inv_n - mu_a * mu_b;
        const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        total += num / den;
        windows++;
      }
  }
  return total / static_cast<double>(windows);
}

}  // namespace tvq
