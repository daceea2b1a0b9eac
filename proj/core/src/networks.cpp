#include "tvq/networks.hpp"

#include <cmath>

namespace tvq {

Conv2dLayer::Conv2dLayer(int cin, int cout, int ksize, int stride_, int pad_, Rng& rng, double gain)
    : stride(stride_), pad(pad_) {
  const int64_t fan_in = static_cast<int64_t>(cin) * ksize * ksize;
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<scalar> wv(static_cast<size_t>(cout) * cin * ksize * ksize);
  for (auto& x : wv) x = static_cast<scalar>(rng.normal(0.0, stddev));
  w = make_tensor({cout, cin, ksize, ksize}, std::move(wv), true);
  b = zeros({cout}, true);
}

void Conv2dLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

ResBlock::ResBlock(int channels, Rng& rng)
    : c1(channels, channels, 3, 1, 1, rng), c2(channels, channels, 3, 1, 1, rng, 0.5) {}

Tensor ResBlock::operator()(const Tensor& x) const { return add(x, c2(act(c1(act(x))))); }

void ResBlock::collect(const std::string& prefix, ParamList& out) const {
  c1.collect(prefix + ".c1", out);
  c2.collect(prefix + ".c2", out);
}

SelfAttention2d::SelfAttention2d(int channels_, Rng& rng)
    : q(channels_, channels_, 1, 1, 0, rng),
      k(channels_, channels_, 1, 1, 0, rng),
      v(channels_, channels_, 1, 1, 0, rng),
      proj(channels_, channels_, 1, 1, 0, rng, 0.5),
      channels(channels_) {}

Tensor SelfAttention2d::operator()(const Tensor& x) const {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto to_seq = [&](const Tensor& t) { return reshape(nchw_to_nhwc(t), {N, H * W, C}); };
  Tensor qs = to_seq(q(x));
  Tensor ks = to_seq(k(x));
  Tensor vs = to_seq(v(x));
  Tensor attn = softmax(scalar_mul(bmm(qs, transpose_last2(ks)), 1.0 / std::sqrt(static_cast<double>(C))), -1);
  Tensor out = nhwc_to_nchw(reshape(bmm(attn, vs), {N, H, W, C}));
  return add(x, proj(out));
}

void SelfAttention2d::collect(const std::string& prefix, ParamList& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  proj.collect(prefix + ".proj", out);
}

int64_t SelfAttention2d::param_count() const {
  return q.param_count() + k.param_count() + v.param_count() + proj.param_count();
}

Tensor tokens_from_nchw(const Tensor& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  return reshape(nchw_to_nhwc(x), {N * H * W, C});
}

Tensor nchw_from_tokens(const Tensor& tokens, int n, int h, int w) {
  const int C = tokens.dim(1);
  return nhwc_to_nchw(reshape(tokens, {n, h, w, C}));
}

Tensor act(const Tensor& x) { return leaky_relu(x, 0.2); }

int64_t param_count(const ParamList& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

void set_requires_grad(const ParamList& params, bool value) {
  for (const auto& p : params) p.value.impl()->requires_grad = value;
}

}  // namespace tvq
