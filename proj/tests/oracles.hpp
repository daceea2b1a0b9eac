#pragma once

// Test-only oracles, kept independent of the implementation paths they check:
// central finite differences, brute-force nearest neighbour, a direct SSIM
// translation, and a naive 2-D DFT spectrum.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "tvq/rng.hpp"
#include "tvq/tensor.hpp"

namespace oracles {

inline std::vector<tvq::scalar> random_values(tvq::Rng& rng, int64_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<tvq::scalar> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<tvq::scalar>(rng.uniform(lo, hi));
  return v;
}

inline tvq::Tensor random_tensor(tvq::Rng& rng, tvq::Shape shape, bool requires_grad = true,
                                 double lo = -1.0, double hi = 1.0) {
  return tvq::make_tensor(shape, random_values(rng, tvq::shape_numel(shape), lo, hi), requires_grad);
}

// Max relative error between the recorded gradient of `loss_fn()` wrt each
// checked tensor and central finite differences. `loss_fn` must rebuild the
// graph from the checked tensors' current values on every call.
struct FdReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

inline FdReport fd_check(const std::function<tvq::Tensor()>& loss_fn, std::vector<tvq::Tensor> inputs,
                         double eps = 1e-5, int64_t max_coords_per_input = 24) {
  using namespace tvq;
  FdReport rep;
  for (auto& t : inputs) t.zero_grad();  // leaf grads persist across backward calls
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = loss_fn();
    backward(loss);
  }
  // Snapshot analytic grads; FD re-evaluations must not disturb them.
  std::vector<std::vector<scalar>> grads;
  for (auto& t : inputs) {
    auto g = t.grad_view();
    grads.emplace_back(g.begin(), g.end());
  }
  auto value_of = [&]() {
    Tape fresh;
    Tape::Scope scope(fresh);
    return static_cast<double>(loss_fn().item());
  };
  for (size_t ti = 0; ti < inputs.size(); ti++) {
    Tensor& t = inputs[ti];
    const int64_t n = t.numel();
    const int64_t step = std::max<int64_t>(1, n / max_coords_per_input);
    for (int64_t i = 0; i < n; i += step) {
      auto v = t.values();
      const scalar saved = v[static_cast<size_t>(i)];
      v[static_cast<size_t>(i)] = saved + static_cast<scalar>(eps);
      const double lp = value_of();
      v[static_cast<size_t>(i)] = saved - static_cast<scalar>(eps);
      const double lm = value_of();
      v[static_cast<size_t>(i)] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = grads[ti].empty() ? 0.0 : static_cast<double>(grads[ti][static_cast<size_t>(i)]);
      const double rel = std::abs(fd - an) / std::max({1e-6, std::abs(fd), std::abs(an)});
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      rep.checked++;
    }
  }
  return rep;
}

// O(K * tokens) scan with the same direct squared-distance formula.
inline std::vector<int> brute_force_nearest(const tvq::Tensor& features, const tvq::Tensor& entries) {
  const int T = features.dim(0), D = features.dim(1), K = entries.dim(0);
  auto f = features.values();
  auto e = entries.values();
  std::vector<int> out(static_cast<size_t>(T));
  for (int t = 0; t < T; t++) {
    int best = 0;
    tvq::scalar bestd = std::numeric_limits<tvq::scalar>::max();
    for (int k = 0; k < K; k++) {
      tvq::scalar d2 = 0;
      for (int j = 0; j < D; j++) {
        const tvq::scalar diff = f[static_cast<size_t>(t) * D + j] - e[static_cast<size_t>(k) * D + j];
        d2 += diff * diff;
      }
      if (d2 < bestd) {
        bestd = d2;
        best = k;
      }
    }
    out[static_cast<size_t>(t)] = best;
  }
  return out;
}

// Straight per-window translation of the SSIM formula (independent of the
// implementation's accumulation order).
inline double ssim_reference(const tvq::Tensor& a, const tvq::Tensor& b) {
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const int win = 7;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto av = a.values();
  auto bv = b.values();
  double total = 0;
  int64_t count = 0;
  for (int c = 0; c < C; c++)
    for (int y = 0; y + win <= H; y++)
      for (int x = 0; x + win <= W; x++) {
        std::vector<double> wa, wb;
        for (int dy = 0; dy < win; dy++)
          for (int dx = 0; dx < win; dx++) {
            wa.push_back(av[(static_cast<int64_t>(c) * H + y + dy) * W + x + dx]);
            wb.push_back(bv[(static_cast<int64_t>(c) * H + y + dy) * W + x + dx]);
          }
        double ma = 0, mb = 0;
        for (size_t i = 0; i < wa.size(); i++) {
          ma += wa[i];
          mb += wb[i];
        }
        ma /= wa.size();
        mb /= wb.size();
        double va = 0, vb = 0, cov = 0;
        for (size_t i = 0; i < wa.size(); i++) {
          va += (wa[i] - ma) * (wa[i] - ma);
          vb += (wb[i] - mb) * (wb[i] - mb);
          cov += (wa[i] - ma) * (wb[i] - mb);
        }
        va /= wa.size();
        vb /= wb.size();
        cov /= wa.size();
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        count++;
      }
  return total / static_cast<double>(count);
}

// Naive 2-D DFT power spectrum of one channel plane.
inline std::vector<double> dft_power(const tvq::Tensor& image, int channel) {
  const int H = image.dim(1), W = image.dim(2);
  auto v = image.values();
  const tvq::scalar* p = v.data() + static_cast<int64_t>(channel) * H * W;
  std::vector<std::complex<double>> rows(static_cast<size_t>(H) * W);
  // 1-D DFT over rows, then columns.
  for (int y = 0; y < H; y++)
    for (int u = 0; u < W; u++) {
      std::complex<double> acc = 0;
      for (int x = 0; x < W; x++) {
        const double ang = -2.0 * M_PI * u * x / W;
        acc += std::complex<double>(p[static_cast<int64_t>(y) * W + x]) *
               std::complex<double>(std::cos(ang), std::sin(ang));
      }
      rows[static_cast<size_t>(y) * W + u] = acc;
    }
  std::vector<double> power(static_cast<size_t>(H) * W);
  for (int u = 0; u < W; u++)
    for (int vfreq = 0; vfreq < H; vfreq++) {
      std::complex<double> acc = 0;
      for (int y = 0; y < H; y++) {
        const double ang = -2.0 * M_PI * vfreq * y / H;
        acc += rows[static_cast<size_t>(y) * W + u] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      power[static_cast<size_t>(vfreq) * W + u] = std::norm(acc);
    }
  return power;
}

// Fraction of non-DC spectral energy above |f| = size/(2*denom) (e.g. denom 4
// checks the band above Nyquist/4).
inline double high_freq_fraction(const tvq::Tensor& image, int denom) {
  const int H = image.dim(1), W = image.dim(2);
  double total = 0, high = 0;
  for (int c = 0; c < image.dim(0); c++) {
    auto power = dft_power(image, c);
    for (int v = 0; v < H; v++)
      for (int u = 0; u < W; u++) {
        if (u == 0 && v == 0) continue;  // DC excluded
        const int fu = std::min(u, W - u);
        const int fv = std::min(v, H - v);
        total += power[static_cast<size_t>(v) * W + u];
        if (std::max(fu, fv) > H / (2 * denom)) high += power[static_cast<size_t>(v) * W + u];
      }
  }
  return total > 0 ? high / total : 0.0;
}

}  // namespace oracles
