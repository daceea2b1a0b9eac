#pragma once

#include <string>
#include <vector>

#include "tvq/optimizer.hpp"
#include "tvq/rng.hpp"
#include "tvq/tensor.hpp"

namespace tvq {

// Conv layer with He-normal init. stride/pad fixed at construction.
struct Conv2dLayer {
  Tensor w, b;
  int stride = 1;
  int pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int ksize, int stride, int pad, Rng& rng, double gain = 1.0);

  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t param_count() const { return w.numel() + b.numel(); }
};

// Pre-activation residual block: x + c2(act(c1(act(x)))).
struct ResBlock {
  Conv2dLayer c1, c2;

  ResBlock() = default;
  ResBlock(int channels, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t param_count() const { return c1.param_count() + c2.param_count(); }
};

// Single-head self-attention over all spatial positions, 1x1 conv q/k/v/proj,
// residual output.
struct SelfAttention2d {
  Conv2dLayer q, k, v, proj;
  int channels = 0;

  SelfAttention2d() = default;
  SelfAttention2d(int channels, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t param_count() const;
};

// (N,C,H,W) -> (N*H*W, C) token rows and back.
Tensor tokens_from_nchw(const Tensor& x);
Tensor nchw_from_tokens(const Tensor& tokens, int n, int h, int w);

Tensor act(const Tensor& x);  // leaky_relu(0.2), the activation used everywhere

int64_t param_count(const ParamList& params);
void set_requires_grad(const ParamList& params, bool value);

}  // namespace tvq
