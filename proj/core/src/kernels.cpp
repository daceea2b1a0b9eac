#include "kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tvq::kernels {

namespace {
constexpr int64_t kParallelFlops = 1 << 20;
}

void gemm_nn(const scalar* a, const scalar* b, scalar* c, int m, int n, int k, bool accumulate) {
  const int64_t work = static_cast<int64_t>(m) * n * k;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
#endif
  for (int i = 0; i < m; i++) {
    scalar* ci = c + static_cast<int64_t>(i) * n;
    if (!accumulate) {
      for (int j = 0; j < n; j++) ci[j] = 0;
    }
    const scalar* ai = a + static_cast<int64_t>(i) * k;
    for (int p = 0; p < k; p++) {
      const scalar av = ai[p];
      if (av == scalar(0)) continue;
      const scalar* bp = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; j++) ci[j] += av * bp[j];
    }
  }
  (void)work;
}

void gemm_nt(const scalar* a, const scalar* b, scalar* c, int m, int n, int k, bool accumulate) {
  const int64_t work = static_cast<int64_t>(m) * n * k;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
#endif
  for (int i = 0; i < m; i++) {
    const scalar* ai = a + static_cast<int64_t>(i) * k;
    scalar* ci = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; j++) {
      const scalar* bj = b + static_cast<int64_t>(j) * k;
      scalar acc = 0;
      for (int p = 0; p < k; p++) acc += ai[p] * bj[p];
      if (accumulate) {
        ci[j] += acc;
      } else {
        ci[j] = acc;
      }
    }
  }
  (void)work;
}

void gemm_tn(const scalar* a, const scalar* b, scalar* c, int m, int n, int k, bool accumulate) {
  const int64_t work = static_cast<int64_t>(m) * n * k;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
#endif
  for (int i = 0; i < m; i++) {
    scalar* ci = c + static_cast<int64_t>(i) * n;
    if (!accumulate) {
      for (int j = 0; j < n; j++) ci[j] = 0;
    }
    for (int p = 0; p < k; p++) {
      const scalar av = a[static_cast<int64_t>(p) * m + i];
      if (av == scalar(0)) continue;
      const scalar* bp = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; j++) ci[j] += av * bp[j];
    }
  }
  (void)work;
}

void im2col(const scalar* x, const ConvDims& d, scalar* cols) {
  const int hw = d.hout * d.wout;
  for (int c = 0; c < d.cin; c++) {
    const scalar* xc = x + static_cast<int64_t>(c) * d.hin * d.win;
    for (int ky = 0; ky < d.kh; ky++) {
      for (int kx = 0; kx < d.kw; kx++) {
        scalar* row = cols + (static_cast<int64_t>(c) * d.kh * d.kw + ky * d.kw + kx) * hw;
        for (int oy = 0; oy < d.hout; oy++) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.hin) {
            for (int ox = 0; ox < d.wout; ox++) row[oy * d.wout + ox] = 0;
            continue;
          }
          const scalar* xr = xc + static_cast<int64_t>(iy) * d.win;
          for (int ox = 0; ox < d.wout; ox++) {
            const int ix = ox * d.stride - d.pad + kx;
            row[oy * d.wout + ox] = (ix >= 0 && ix < d.win) ? xr[ix] : scalar(0);
          }
        }
      }
    }
  }
}

void col2im(const scalar* cols, const ConvDims& d, scalar* x) {
  const int hw = d.hout * d.wout;
  for (int c = 0; c < d.cin; c++) {
    scalar* xc = x + static_cast<int64_t>(c) * d.hin * d.win;
    for (int ky = 0; ky < d.kh; ky++) {
      for (int kx = 0; kx < d.kw; kx++) {
        const scalar* row = cols + (static_cast<int64_t>(c) * d.kh * d.kw + ky * d.kw + kx) * hw;
        for (int oy = 0; oy < d.hout; oy++) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.hin) continue;
          scalar* xr = xc + static_cast<int64_t>(iy) * d.win;
          for (int ox = 0; ox < d.wout; ox++) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.win) xr[ix] += row[oy * d.wout + ox];
          }
        }
      }
    }
  }
}

}  // namespace tvq::kernels
