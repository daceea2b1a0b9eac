#pragma once

#include "tvq/tensor.hpp"

// Dense fp kernels shared by the forward and backward paths. All routines are
// deterministic: every output element is a sequential reduction, so results
// are bit-identical for any thread count.

namespace tvq::kernels {

// C = A(M,K) @ B(K,N), optionally accumulating into C.
void gemm_nn(const scalar* a, const scalar* b, scalar* c, int m, int n, int k, bool accumulate);
// C = A(M,K) @ B(N,K)^T
void gemm_nt(const scalar* a, const scalar* b, scalar* c, int m, int n, int k, bool accumulate);
// C = A(K,M)^T @ B(K,N)
void gemm_tn(const scalar* a, const scalar* b, scalar* c, int m, int n, int k, bool accumulate);

struct ConvDims {
  int cin, hin, win;
  int cout, kh, kw;
  int stride, pad;
  int hout, wout;
};

// cols has shape (cin*kh*kw) x (hout*wout).
void im2col(const scalar* x, const ConvDims& d, scalar* cols);
// Adjoint of im2col: scatter-adds cols back into x (x must be zeroed first).
void col2im(const scalar* cols, const ConvDims& d, scalar* x);

}  // namespace tvq::kernels
