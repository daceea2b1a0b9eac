#include "tvq/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "kernels.hpp"

namespace tvq {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); i++) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace {

[[noreturn]] void fail(OpKind op, const std::string& msg) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + msg);
}

void require(bool ok, OpKind op, const std::string& msg) {
  if (!ok) fail(op, msg);
}

int64_t prod(const Shape& s, int from, int to) {
  int64_t n = 1;
  for (int i = from; i < to; i++) n *= s[static_cast<size_t>(i)];
  return n;
}

// Row-wise stable softmax over contiguous slices of length n with stride
// `inner`; shared by Softmax forward/backward and the one-hot STE so their
// probability paths are bit-identical.
void softmax_slices(const scalar* x, scalar* y, int64_t outer, int n, int64_t inner) {
  for (int64_t o = 0; o < outer; o++) {
    for (int64_t i = 0; i < inner; i++) {
      const scalar* xs = x + o * n * inner + i;
      scalar* ys = y + o * n * inner + i;
      scalar mx = xs[0];
      for (int j = 1; j < n; j++) mx = std::max(mx, xs[j * inner]);
      scalar sum = 0;
      for (int j = 0; j < n; j++) {
        const scalar e = std::exp(xs[j * inner] - mx);
        ys[j * inner] = e;
        sum += e;
      }
      for (int j = 0; j < n; j++) ys[j * inner] /= sum;
    }
  }
}

void softmax_backward_slices(const scalar* y, const scalar* g, scalar* dx, int64_t outer, int n,
                             int64_t inner) {
  for (int64_t o = 0; o < outer; o++) {
    for (int64_t i = 0; i < inner; i++) {
      const scalar* ys = y + o * n * inner + i;
      const scalar* gs = g + o * n * inner + i;
      scalar* ds = dx + o * n * inner + i;
      scalar dot = 0;
      for (int j = 0; j < n; j++) dot += gs[j * inner] * ys[j * inner];
      for (int j = 0; j < n; j++) ds[j * inner] += ys[j * inner] * (gs[j * inner] - dot);
    }
  }
}

kernels::ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
  kernels::ConvDims d;
  d.cin = xs[1];
  d.hin = xs[2];
  d.win = xs[3];
  d.cout = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.stride = stride;
  d.pad = pad;
  d.hout = (d.hin + 2 * pad - d.kh) / stride + 1;
  d.wout = (d.win + 2 * pad - d.kw) / stride + 1;
  return d;
}

// Transposed conv expressed through the adjoint of a regular conv whose
// input is the tconv *output*.
kernels::ConvDims tconv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
  kernels::ConvDims d;
  d.cin = ws[1];  // tconv output channels
  d.kh = ws[2];
  d.kw = ws[3];
  d.cout = ws[0];  // tconv input channels
  d.stride = stride;
  d.pad = pad;
  d.hout = xs[2];
  d.wout = xs[3];
  d.hin = (xs[2] - 1) * stride - 2 * pad + d.kh;
  d.win = (xs[3] - 1) * stride - 2 * pad + d.kw;
  return d;
}

std::span<scalar> grad_buf(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.buf->size(), scalar(0));
  return t.grad;
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::ScalarMul: return "scalar_mul";
    case OpKind::ScalarAdd: return "scalar_add";
    case OpKind::Matmul: return "matmul";
    case OpKind::Bmm: return "bmm";
    case OpKind::TransposeLast2: return "transpose_last2";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::TransposedConv2d: return "transposed_conv2d";
    case OpKind::NearestUpsample: return "nearest_upsample";
    case OpKind::AvgDownsample: return "avg_downsample";
    case OpKind::Relu: return "relu";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softmax: return "softmax";
    case OpKind::Log: return "log";
    case OpKind::Reshape: return "reshape";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::ReduceSum: return "reduce_sum";
    case OpKind::ReduceMean: return "reduce_mean";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::NchwToNhwc: return "nchw_to_nhwc";
    case OpKind::NhwcToNchw: return "nhwc_to_nchw";
    case OpKind::ArgmaxOneHotSte: return "argmax_one_hot_ste";
    case OpKind::StePassthrough: return "ste_passthrough";
  }
  throw std::invalid_argument("unknown op_kind");
}

OpKind op_from_name(const std::string& name) {
  static const std::unordered_map<std::string, OpKind> table = [] {
    std::unordered_map<std::string, OpKind> t;
    for (int i = 0; i <= static_cast<int>(OpKind::StePassthrough); i++) {
      const auto op = static_cast<OpKind>(i);
      t.emplace(op_name(op), op);
    }
    return t;
  }();
  auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown op_kind: " + name);
  return it->second;
}

// ---------------------------------------------------------------------------
// Tensor

scalar Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar-shaped, shape " + shape_str(shape()));
  return (*impl_->buf)[0];
}

std::span<scalar> Tensor::grad() { return grad_buf(*impl_); }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), scalar(0));
}

// ---------------------------------------------------------------------------
// Tape

namespace {
Tape* g_active_tape = nullptr;
std::atomic<uint64_t> g_tape_gen{1};
}  // namespace

Tape::Tape() : gen_(g_tape_gen.fetch_add(1)) {}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

int Tape::record(TapeNode node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

// ---------------------------------------------------------------------------
// Construction

Tensor make_tensor(Shape shape, std::vector<scalar> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("make_tensor: shape " + shape_str(shape) + " does not match buffer of " +
                                std::to_string(values.size()) + " scalars");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->buf = std::make_shared<std::vector<scalar>>(std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<scalar>(static_cast<size_t>(n), scalar(0)), requires_grad);
}

Tensor full(Shape shape, scalar value, bool requires_grad) {
  auto n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<scalar>(static_cast<size_t>(n), value), requires_grad);
}

Tensor scalar_tensor(scalar value) { return make_tensor({1}, {value}); }

Tensor detach(const Tensor& x) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = x.shape();
  impl->buf = x.impl()->buf;  // shared values
  impl->requires_grad = false;
  return Tensor(impl);
}

Tensor clone_values(const Tensor& x) {
  auto v = x.values();
  return make_tensor(x.shape(), std::vector<scalar>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------
// Forward

namespace {

struct ForwardResult {
  Shape shape;
  std::vector<scalar> values;
  std::vector<scalar> saved;
};

ForwardResult forward_op(OpKind op, const std::vector<Tensor>& in, const OpAttrs& at, bool want_saved) {
  ForwardResult r;
  switch (op) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      require(in.size() == 2, op, "expects 2 inputs");
      require(in[0].shape() == in[1].shape(), op,
              "shape mismatch " + shape_str(in[0].shape()) + " vs " + shape_str(in[1].shape()));
      auto a = in[0].values();
      auto b = in[1].values();
      r.shape = in[0].shape();
      r.values.resize(a.size());
      if (op == OpKind::Add)
        for (size_t i = 0; i < a.size(); i++) r.values[i] = a[i] + b[i];
      else if (op == OpKind::Sub)
        for (size_t i = 0; i < a.size(); i++) r.values[i] = a[i] - b[i];
      else
        for (size_t i = 0; i < a.size(); i++) r.values[i] = a[i] * b[i];
      break;
    }
    case OpKind::ScalarMul:
    case OpKind::ScalarAdd: {
      require(in.size() == 1, op, "expects 1 input");
      auto a = in[0].values();
      const scalar c = static_cast<scalar>(at.alpha);
      r.shape = in[0].shape();
      r.values.resize(a.size());
      if (op == OpKind::ScalarMul)
        for (size_t i = 0; i < a.size(); i++) r.values[i] = a[i] * c;
      else
        for (size_t i = 0; i < a.size(); i++) r.values[i] = a[i] + c;
      break;
    }
    case OpKind::Matmul: {
      require(in.size() == 2, op, "expects 2 inputs");
      const auto& sa = in[0].shape();
      const auto& sb = in[1].shape();
      require(sa.size() == 2 && sb.size() == 2, op,
              "expects 2-D operands, got " + shape_str(sa) + " and " + shape_str(sb));
      require(sa[1] == sb[0], op, "inner extents differ: " + shape_str(sa) + " @ " + shape_str(sb));
      const int m = sa[0], k = sa[1], n = sb[1];
      r.shape = {m, n};
      r.values.resize(static_cast<size_t>(m) * n);
      kernels::gemm_nn(in[0].values().data(), in[1].values().data(), r.values.data(), m, n, k, false);
      break;
    }
    case OpKind::Bmm: {
      require(in.size() == 2, op, "expects 2 inputs");
      const auto& sa = in[0].shape();
      const auto& sb = in[1].shape();
      require(sa.size() == 3 && sb.size() == 3, op,
              "expects 3-D operands, got " + shape_str(sa) + " and " + shape_str(sb));
      require(sa[0] == sb[0] && sa[2] == sb[1], op,
              "extents incompatible: " + shape_str(sa) + " @ " + shape_str(sb));
      const int B = sa[0], m = sa[1], k = sa[2], n = sb[2];
      r.shape = {B, m, n};
      r.values.resize(static_cast<size_t>(B) * m * n);
      for (int b = 0; b < B; b++)
        kernels::gemm_nn(in[0].values().data() + static_cast<int64_t>(b) * m * k,
                         in[1].values().data() + static_cast<int64_t>(b) * k * n,
                         r.values.data() + static_cast<int64_t>(b) * m * n, m, n, k, false);
      break;
    }
    case OpKind::TransposeLast2: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      require(s.size() == 2 || s.size() == 3, op, "expects 2-D or 3-D input, got " + shape_str(s));
      const int B = s.size() == 3 ? s[0] : 1;
      const int m = s[s.size() - 2], n = s[s.size() - 1];
      r.shape = s;
      r.shape[s.size() - 2] = n;
      r.shape[s.size() - 1] = m;
      r.values.resize(in[0].values().size());
      auto a = in[0].values();
      for (int b = 0; b < B; b++) {
        const scalar* ab = a.data() + static_cast<int64_t>(b) * m * n;
        scalar* rb = r.values.data() + static_cast<int64_t>(b) * m * n;
        for (int i = 0; i < m; i++)
          for (int j = 0; j < n; j++) rb[static_cast<int64_t>(j) * m + i] = ab[static_cast<int64_t>(i) * n + j];
      }
      break;
    }
    case OpKind::Conv2d: {
      require(in.size() == 2 || in.size() == 3, op, "expects (x, w[, bias])");
      const auto& xs = in[0].shape();
      const auto& ws = in[1].shape();
      require(xs.size() == 4, op, "input must be NCHW, got " + shape_str(xs));
      require(ws.size() == 4, op, "weight must be (out,in,kh,kw), got " + shape_str(ws));
      require(xs[1] == ws[1], op, "channel mismatch: input " + shape_str(xs) + " vs weight " + shape_str(ws));
      require(at.stride >= 1 && at.pad >= 0, op, "bad stride/pad");
      auto d = conv_dims(xs, ws, at.stride, at.pad);
      require(d.hout >= 1 && d.wout >= 1, op,
              "kernel does not fit: input " + shape_str(xs) + " weight " + shape_str(ws));
      const bool has_bias = in.size() == 3;
      if (has_bias)
        require(in[2].shape() == Shape{ws[0]}, op, "bias must be (out,), got " + shape_str(in[2].shape()));
      const int N = xs[0];
      const int64_t ckk = static_cast<int64_t>(d.cin) * d.kh * d.kw;
      const int64_t hw = static_cast<int64_t>(d.hout) * d.wout;
      r.shape = {N, d.cout, d.hout, d.wout};
      r.values.resize(static_cast<size_t>(N) * d.cout * hw);
      std::vector<scalar> cols(static_cast<size_t>(ckk) * hw);
      for (int nidx = 0; nidx < N; nidx++) {
        kernels::im2col(in[0].values().data() + static_cast<int64_t>(nidx) * d.cin * d.hin * d.win, d,
                        cols.data());
        scalar* y = r.values.data() + static_cast<int64_t>(nidx) * d.cout * hw;
        kernels::gemm_nn(in[1].values().data(), cols.data(), y, d.cout, static_cast<int>(hw),
                         static_cast<int>(ckk), false);
        if (has_bias) {
          auto bias = in[2].values();
          for (int co = 0; co < d.cout; co++) {
            const scalar bv = bias[static_cast<size_t>(co)];
            scalar* yc = y + static_cast<int64_t>(co) * hw;
            for (int64_t i = 0; i < hw; i++) yc[i] += bv;
          }
        }
      }
      break;
    }
    case OpKind::TransposedConv2d: {
      require(in.size() == 2 || in.size() == 3, op, "expects (x, w[, bias])");
      const auto& xs = in[0].shape();
      const auto& ws = in[1].shape();
      require(xs.size() == 4, op, "input must be NCHW, got " + shape_str(xs));
      require(ws.size() == 4, op, "weight must be (in,out,kh,kw), got " + shape_str(ws));
      require(xs[1] == ws[0], op, "channel mismatch: input " + shape_str(xs) + " vs weight " + shape_str(ws));
      auto d = tconv_dims(xs, ws, at.stride, at.pad);
      require(d.hin >= 1 && d.win >= 1, op, "degenerate output for input " + shape_str(xs));
      const bool has_bias = in.size() == 3;
      if (has_bias)
        require(in[2].shape() == Shape{ws[1]}, op, "bias must be (out,), got " + shape_str(in[2].shape()));
      const int N = xs[0];
      const int64_t ckk = static_cast<int64_t>(d.cin) * d.kh * d.kw;  // cin = tconv out channels
      const int64_t hw = static_cast<int64_t>(d.hout) * d.wout;       // tconv input spatial
      const int64_t ohw = static_cast<int64_t>(d.hin) * d.win;        // tconv output spatial
      r.shape = {N, d.cin, d.hin, d.win};
      r.values.assign(static_cast<size_t>(N) * d.cin * ohw, scalar(0));
      std::vector<scalar> cols(static_cast<size_t>(ckk) * hw);
      for (int nidx = 0; nidx < N; nidx++) {
        // cols = W^T @ x, then scatter into the output plane
        kernels::gemm_tn(in[1].values().data(),
                         in[0].values().data() + static_cast<int64_t>(nidx) * d.cout * hw, cols.data(),
                         static_cast<int>(ckk), static_cast<int>(hw), d.cout, false);
        scalar* y = r.values.data() + static_cast<int64_t>(nidx) * d.cin * ohw;
        kernels::col2im(cols.data(), d, y);
        if (has_bias) {
          auto bias = in[2].values();
          for (int co = 0; co < d.cin; co++) {
            const scalar bv = bias[static_cast<size_t>(co)];
            scalar* yc = y + static_cast<int64_t>(co) * ohw;
            for (int64_t i = 0; i < ohw; i++) yc[i] += bv;
          }
        }
      }
      break;
    }
    case OpKind::NearestUpsample: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      require(s.size() == 4, op, "input must be NCHW, got " + shape_str(s));
      require(at.factor >= 1, op, "factor must be >= 1");
      const int f = at.factor, N = s[0], C = s[1], H = s[2], W = s[3];
      r.shape = {N, C, H * f, W * f};
      r.values.resize(static_cast<size_t>(N) * C * H * f * W * f);
      auto x = in[0].values();
      for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; nc++) {
        const scalar* xp = x.data() + nc * H * W;
        scalar* yp = r.values.data() + nc * H * f * W * f;
        for (int y = 0; y < H * f; y++)
          for (int xcol = 0; xcol < W * f; xcol++)
            yp[static_cast<int64_t>(y) * W * f + xcol] = xp[static_cast<int64_t>(y / f) * W + xcol / f];
      }
      break;
    }
    case OpKind::AvgDownsample: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      require(s.size() == 4, op, "input must be NCHW, got " + shape_str(s));
      require(at.factor >= 1, op, "factor must be >= 1");
      const int f = at.factor, N = s[0], C = s[1], H = s[2], W = s[3];
      require(H % f == 0 && W % f == 0, op,
              "factor " + std::to_string(f) + " does not divide spatial extents of " + shape_str(s));
      const int Ho = H / f, Wo = W / f;
      r.shape = {N, C, Ho, Wo};
      r.values.resize(static_cast<size_t>(N) * C * Ho * Wo);
      auto x = in[0].values();
      const scalar inv = scalar(1) / static_cast<scalar>(f * f);
      for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; nc++) {
        const scalar* xp = x.data() + nc * H * W;
        scalar* yp = r.values.data() + nc * Ho * Wo;
        for (int oy = 0; oy < Ho; oy++)
          for (int ox = 0; ox < Wo; ox++) {
            scalar acc = 0;
            for (int dy = 0; dy < f; dy++)
              for (int dx = 0; dx < f; dx++) acc += xp[static_cast<int64_t>(oy * f + dy) * W + ox * f + dx];
            yp[static_cast<int64_t>(oy) * Wo + ox] = acc * inv;
          }
      }
      break;
    }
    case OpKind::Relu:
    case OpKind::LeakyRelu:
    case OpKind::Sigmoid:
    case OpKind::Log: {
      require(in.size() == 1, op, "expects 1 input");
      auto x = in[0].values();
      r.shape = in[0].shape();
      r.values.resize(x.size());
      if (op == OpKind::Relu) {
        for (size_t i = 0; i < x.size(); i++) r.values[i] = x[i] > 0 ? x[i] : scalar(0);
      } else if (op == OpKind::LeakyRelu) {
        const scalar a = static_cast<scalar>(at.alpha);
        for (size_t i = 0; i < x.size(); i++) r.values[i] = x[i] > 0 ? x[i] : a * x[i];
      } else if (op == OpKind::Sigmoid) {
        for (size_t i = 0; i < x.size(); i++) {
          const scalar v = x[i];
          r.values[i] = v >= 0 ? scalar(1) / (scalar(1) + std::exp(-v))
                               : std::exp(v) / (scalar(1) + std::exp(v));
        }
      } else {
        for (size_t i = 0; i < x.size(); i++) r.values[i] = std::log(x[i]);
      }
      break;
    }
    case OpKind::Softmax: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      const int rank = static_cast<int>(s.size());
      int axis = at.axis < 0 ? rank + at.axis : at.axis;
      require(axis >= 0 && axis < rank, op, "axis out of range for " + shape_str(s));
      const int64_t outer = prod(s, 0, axis);
      const int n = s[static_cast<size_t>(axis)];
      const int64_t inner = prod(s, axis + 1, rank);
      r.shape = s;
      r.values.resize(in[0].values().size());
      softmax_slices(in[0].values().data(), r.values.data(), outer, n, inner);
      break;
    }
    case OpKind::Reshape: {
      require(in.size() == 1, op, "expects 1 input");
      require(shape_numel(at.shape) == in[0].numel(), op,
              "cannot view " + shape_str(in[0].shape()) + " as " + shape_str(at.shape));
      r.shape = at.shape;
      r.values.assign(in[0].values().begin(), in[0].values().end());
      break;
    }
    case OpKind::Concat: {
      require(!in.empty(), op, "expects at least 1 input");
      const auto& s0 = in[0].shape();
      const int rank = static_cast<int>(s0.size());
      const int axis = at.axis < 0 ? rank + at.axis : at.axis;
      require(axis >= 0 && axis < rank, op, "axis out of range for " + shape_str(s0));
      int total = 0;
      for (const auto& t : in) {
        const auto& s = t.shape();
        require(static_cast<int>(s.size()) == rank, op, "rank mismatch " + shape_str(s));
        for (int i = 0; i < rank; i++)
          require(i == axis || s[static_cast<size_t>(i)] == s0[static_cast<size_t>(i)], op,
                  "extent mismatch " + shape_str(s) + " vs " + shape_str(s0));
        total += s[static_cast<size_t>(axis)];
      }
      r.shape = s0;
      r.shape[static_cast<size_t>(axis)] = total;
      const int64_t outer = prod(s0, 0, axis);
      const int64_t inner = prod(s0, axis + 1, rank);
      r.values.resize(static_cast<size_t>(outer * total * inner));
      int64_t off = 0;
      for (const auto& t : in) {
        const int n = t.shape()[static_cast<size_t>(axis)];
        auto v = t.values();
        for (int64_t o = 0; o < outer; o++)
          std::copy_n(v.data() + o * n * inner, n * inner,
                      r.values.data() + (o * total + off) * inner);
        off += n;
      }
      break;
    }
    case OpKind::Slice: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      const int rank = static_cast<int>(s.size());
      const int axis = at.axis < 0 ? rank + at.axis : at.axis;
      require(axis >= 0 && axis < rank, op, "axis out of range for " + shape_str(s));
      const int n = s[static_cast<size_t>(axis)];
      require(at.start >= 0 && at.len >= 1 && at.start + at.len <= n, op,
              "window [" + std::to_string(at.start) + "," + std::to_string(at.start + at.len) +
                  ") out of range for extent " + std::to_string(n));
      const int64_t outer = prod(s, 0, axis);
      const int64_t inner = prod(s, axis + 1, rank);
      r.shape = s;
      r.shape[static_cast<size_t>(axis)] = at.len;
      r.values.resize(static_cast<size_t>(outer * at.len * inner));
      auto v = in[0].values();
      for (int64_t o = 0; o < outer; o++)
        std::copy_n(v.data() + (o * n + at.start) * inner, static_cast<int64_t>(at.len) * inner,
                    r.values.data() + o * at.len * inner);
      break;
    }
    case OpKind::ReduceSum:
    case OpKind::ReduceMean: {
      require(in.size() == 1, op, "expects 1 input");
      auto v = in[0].values();
      scalar acc = 0;
      for (scalar x : v) acc += x;
      if (op == OpKind::ReduceMean) acc /= static_cast<scalar>(v.size());
      r.shape = {1};
      r.values = {acc};
      break;
    }
    case OpKind::GatherRows: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      require(s.size() == 2, op, "table must be 2-D, got " + shape_str(s));
      const int K = s[0], D = s[1];
      r.shape = {static_cast<int>(at.indices.size()), D};
      r.values.resize(at.indices.size() * static_cast<size_t>(D));
      auto v = in[0].values();
      for (size_t i = 0; i < at.indices.size(); i++) {
        const int idx = at.indices[i];
        require(idx >= 0 && idx < K, op,
                "index " + std::to_string(idx) + " out of range for table " + shape_str(s));
        std::copy_n(v.data() + static_cast<int64_t>(idx) * D, D, r.values.data() + i * static_cast<size_t>(D));
      }
      break;
    }
    case OpKind::NchwToNhwc:
    case OpKind::NhwcToNchw: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      require(s.size() == 4, op, "expects 4-D input, got " + shape_str(s));
      auto v = in[0].values();
      r.values.resize(v.size());
      if (op == OpKind::NchwToNhwc) {
        const int N = s[0], C = s[1], H = s[2], W = s[3];
        r.shape = {N, H, W, C};
        for (int n = 0; n < N; n++)
          for (int c = 0; c < C; c++)
            for (int y = 0; y < H; y++)
              for (int x = 0; x < W; x++)
                r.values[((static_cast<int64_t>(n) * H + y) * W + x) * C + c] =
                    v[((static_cast<int64_t>(n) * C + c) * H + y) * W + x];
      } else {
        const int N = s[0], H = s[1], W = s[2], C = s[3];
        r.shape = {N, C, H, W};
        for (int n = 0; n < N; n++)
          for (int y = 0; y < H; y++)
            for (int x = 0; x < W; x++)
              for (int c = 0; c < C; c++)
                r.values[((static_cast<int64_t>(n) * C + c) * H + y) * W + x] =
                    v[((static_cast<int64_t>(n) * H + y) * W + x) * C + c];
      }
      break;
    }
    case OpKind::ArgmaxOneHotSte: {
      require(in.size() == 1, op, "expects 1 input");
      const auto& s = in[0].shape();
      require(s.size() == 2, op, "logits must be (tokens, K), got " + shape_str(s));
      const int T = s[0], K = s[1];
      auto v = in[0].values();
      for (scalar x : v)
        require(std::isfinite(x), op, "logits must be finite");
      r.shape = s;
      r.values.assign(v.size(), scalar(0));
      for (int t = 0; t < T; t++) {
        const scalar* row = v.data() + static_cast<int64_t>(t) * K;
        int best = 0;
        for (int k = 1; k < K; k++)
          if (row[k] > row[best]) best = k;  // ties keep lowest index
        r.values[static_cast<int64_t>(t) * K + best] = scalar(1);
      }
      if (want_saved) {
        r.saved.resize(v.size());
        softmax_slices(v.data(), r.saved.data(), T, K, 1);
      }
      break;
    }
    case OpKind::StePassthrough: {
      require(in.size() == 2, op, "expects (grad_path, value_src)");
      require(in[0].shape() == in[1].shape(), op,
              "shape mismatch " + shape_str(in[0].shape()) + " vs " + shape_str(in[1].shape()));
      r.shape = in[1].shape();
      r.values.assign(in[1].values().begin(), in[1].values().end());
      break;
    }
  }
  return r;
}

bool input_is_differentiable(OpKind op, size_t input_index) {
  // The value source of the straight-through copy is gradient-stopped.
  return !(op == OpKind::StePassthrough && input_index == 1);
}

}  // namespace

Tensor apply_primitive(OpKind op, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
  const int opi = static_cast<int>(op);
  if (opi < 0 || opi > static_cast<int>(OpKind::StePassthrough))
    throw std::invalid_argument("unknown op_kind id " + std::to_string(opi));

  bool needs_grad = false;
  for (size_t i = 0; i < inputs.size(); i++)
    if (input_is_differentiable(op, i) && inputs[i].requires_grad()) needs_grad = true;
  Tape* tape = Tape::active();
  const bool record = needs_grad && tape != nullptr;

  auto fw = forward_op(op, inputs, attrs, record);
  Tensor out = make_tensor(std::move(fw.shape), std::move(fw.values), needs_grad);
  if (record) {
    TapeNode node;
    node.op = op;
    node.attrs = attrs;
    node.inputs = inputs;
    node.output = out;
    node.saved = std::move(fw.saved);
    out.impl()->node = tape->record(std::move(node));
    out.impl()->tape_gen = tape->gen();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

void backward_op(TapeNode& nd) {
  const auto& g = nd.output.impl()->grad;
  const auto& at = nd.attrs;
  auto& in = nd.inputs;
  auto wants = [&](size_t i) {
    return input_is_differentiable(nd.op, i) && in[i].requires_grad();
  };

  switch (nd.op) {
    case OpKind::Add:
    case OpKind::Sub: {
      if (wants(0)) {
        auto da = grad_buf(*in[0].impl());
        for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
      }
      if (wants(1)) {
        auto db = grad_buf(*in[1].impl());
        if (nd.op == OpKind::Add)
          for (size_t i = 0; i < g.size(); i++) db[i] += g[i];
        else
          for (size_t i = 0; i < g.size(); i++) db[i] -= g[i];
      }
      break;
    }
    case OpKind::Mul: {
      if (wants(0)) {
        auto da = grad_buf(*in[0].impl());
        auto b = in[1].values();
        for (size_t i = 0; i < g.size(); i++) da[i] += g[i] * b[i];
      }
      if (wants(1)) {
        auto db = grad_buf(*in[1].impl());
        auto a = in[0].values();
        for (size_t i = 0; i < g.size(); i++) db[i] += g[i] * a[i];
      }
      break;
    }
    case OpKind::ScalarMul: {
      if (wants(0)) {
        auto da = grad_buf(*in[0].impl());
        const scalar c = static_cast<scalar>(at.alpha);
        for (size_t i = 0; i < g.size(); i++) da[i] += g[i] * c;
      }
      break;
    }
    case OpKind::ScalarAdd: {
      if (wants(0)) {
        auto da = grad_buf(*in[0].impl());
        for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
      }
      break;
    }
    case OpKind::Matmul: {
      const int m = in[0].shape()[0], k = in[0].shape()[1], n = in[1].shape()[1];
      if (wants(0))
        kernels::gemm_nt(g.data(), in[1].values().data(), grad_buf(*in[0].impl()).data(), m, k, n, true);
      if (wants(1))
        kernels::gemm_tn(in[0].values().data(), g.data(), grad_buf(*in[1].impl()).data(), k, n, m, true);
      break;
    }
    case OpKind::Bmm: {
      const int B = in[0].shape()[0], m = in[0].shape()[1], k = in[0].shape()[2], n = in[1].shape()[2];
      for (int b = 0; b < B; b++) {
        const scalar* gb = g.data() + static_cast<int64_t>(b) * m * n;
        if (wants(0))
          kernels::gemm_nt(gb, in[1].values().data() + static_cast<int64_t>(b) * k * n,
                           grad_buf(*in[0].impl()).data() + static_cast<int64_t>(b) * m * k, m, k, n, true);
        if (wants(1))
          kernels::gemm_tn(in[0].values().data() + static_cast<int64_t>(b) * m * k, gb,
                           grad_buf(*in[1].impl()).data() + static_cast<int64_t>(b) * k * n, k, n, m, true);
      }
      break;
    }
    case OpKind::TransposeLast2: {
      if (!wants(0)) break;
      const auto& s = nd.output.shape();
      const int B = s.size() == 3 ? s[0] : 1;
      const int m = s[s.size() - 2], n = s[s.size() - 1];
      auto da = grad_buf(*in[0].impl());
      for (int b = 0; b < B; b++) {
        const scalar* gb = g.data() + static_cast<int64_t>(b) * m * n;
        scalar* db = da.data() + static_cast<int64_t>(b) * m * n;
        for (int i = 0; i < m; i++)
          for (int j = 0; j < n; j++) db[static_cast<int64_t>(j) * m + i] += gb[static_cast<int64_t>(i) * n + j];
      }
      break;
    }
    case OpKind::Conv2d: {
      const auto& xs = in[0].shape();
      auto d = conv_dims(xs, in[1].shape(), at.stride, at.pad);
      const int N = xs[0];
      const int64_t ckk = static_cast<int64_t>(d.cin) * d.kh * d.kw;
      const int64_t hw = static_cast<int64_t>(d.hout) * d.wout;
      std::vector<scalar> cols(static_cast<size_t>(ckk) * hw);
      std::vector<scalar> dcols;
      if (wants(0)) dcols.resize(static_cast<size_t>(ckk) * hw);
      for (int nidx = 0; nidx < N; nidx++) {
        const scalar* gy = g.data() + static_cast<int64_t>(nidx) * d.cout * hw;
        if (wants(1) || wants(0)) {
          if (wants(1)) {
            kernels::im2col(in[0].values().data() + static_cast<int64_t>(nidx) * d.cin * d.hin * d.win, d,
                            cols.data());
            kernels::gemm_nt(gy, cols.data(), grad_buf(*in[1].impl()).data(), d.cout,
                             static_cast<int>(ckk), static_cast<int>(hw), true);
          }
          if (wants(0)) {
            kernels::gemm_tn(in[1].values().data(), gy, dcols.data(), static_cast<int>(ckk),
                             static_cast<int>(hw), d.cout, false);
            kernels::col2im(dcols.data(), d,
                            grad_buf(*in[0].impl()).data() + static_cast<int64_t>(nidx) * d.cin * d.hin * d.win);
          }
        }
        if (in.size() == 3 && wants(2)) {
          auto db = grad_buf(*in[2].impl());
          for (int co = 0; co < d.cout; co++) {
            scalar acc = 0;
            const scalar* gc = gy + static_cast<int64_t>(co) * hw;
            for (int64_t i = 0; i < hw; i++) acc += gc[i];
            db[static_cast<size_t>(co)] += acc;
          }
        }
      }
      break;
    }
    case OpKind::TransposedConv2d: {
      const auto& xs = in[0].shape();
      auto d = tconv_dims(xs, in[1].shape(), at.stride, at.pad);
      const int N = xs[0];
      const int64_t ckk = static_cast<int64_t>(d.cin) * d.kh * d.kw;
      const int64_t hw = static_cast<int64_t>(d.hout) * d.wout;   // tconv input spatial
      const int64_t ohw = static_cast<int64_t>(d.hin) * d.win;    // tconv output spatial
      std::vector<scalar> cols(static_cast<size_t>(ckk) * hw);
      for (int nidx = 0; nidx < N; nidx++) {
        const scalar* gy = g.data() + static_cast<int64_t>(nidx) * d.cin * ohw;
        kernels::im2col(gy, d, cols.data());
        if (wants(0))
          kernels::gemm_nn(in[1].values().data(), cols.data(),
                           grad_buf(*in[0].impl()).data() + static_cast<int64_t>(nidx) * d.cout * hw, d.cout,
                           static_cast<int>(hw), static_cast<int>(ckk), true);
        if (wants(1))
          kernels::gemm_nt(in[0].values().data() + static_cast<int64_t>(nidx) * d.cout * hw, cols.data(),
                           grad_buf(*in[1].impl()).data(), d.cout, static_cast<int>(ckk),
                           static_cast<int>(hw), true);
        if (in.size() == 3 && wants(2)) {
          auto db = grad_buf(*in[2].impl());
          for (int co = 0; co < d.cin; co++) {
            scalar acc = 0;
            const scalar* gc = gy + static_cast<int64_t>(co) * ohw;
            for (int64_t i = 0; i < ohw; i++) acc += gc[i];
            db[static_cast<size_t>(co)] += acc;
          }
        }
      }
      break;
    }
    case OpKind::NearestUpsample: {
      if (!wants(0)) break;
      const auto& s = in[0].shape();
      const int f = at.factor, N = s[0], C = s[1], H = s[2], W = s[3];
      auto da = grad_buf(*in[0].impl());
      for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; nc++) {
        const scalar* gp = g.data() + nc * H * f * W * f;
        scalar* dp = da.data() + nc * H * W;
        for (int y = 0; y < H * f; y++)
          for (int x = 0; x < W * f; x++)
            dp[static_cast<int64_t>(y / f) * W + x / f] += gp[static_cast<int64_t>(y) * W * f + x];
      }
      break;
    }
    case OpKind::AvgDownsample: {
      if (!wants(0)) break;
      const auto& s = in[0].shape();
      const int f = at.factor, N = s[0], C = s[1], H = s[2], W = s[3];
      const int Ho = H / f, Wo = W / f;
      const scalar inv = scalar(1) / static_cast<scalar>(f * f);
      auto da = grad_buf(*in[0].impl());
      for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; nc++) {
        const scalar* gp = g.data() + nc * Ho * Wo;
        scalar* dp = da.data() + nc * H * W;
        for (int oy = 0; oy < Ho; oy++)
          for (int ox = 0; ox < Wo; ox++) {
            const scalar gv = gp[static_cast<int64_t>(oy) * Wo + ox] * inv;
            for (int dy = 0; dy < f; dy++)
              for (int dx = 0; dx < f; dx++) dp[static_cast<int64_t>(oy * f + dy) * W + ox * f + dx] += gv;
          }
      }
      break;
    }
    case OpKind::Relu: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      auto x = in[0].values();
      for (size_t i = 0; i < g.size(); i++)
        if (x[i] > 0) da[i] += g[i];
      break;
    }
    case OpKind::LeakyRelu: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      auto x = in[0].values();
      const scalar a = static_cast<scalar>(at.alpha);
      for (size_t i = 0; i < g.size(); i++) da[i] += g[i] * (x[i] > 0 ? scalar(1) : a);
      break;
    }
    case OpKind::Sigmoid: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      auto y = nd.output.values();
      for (size_t i = 0; i < g.size(); i++) da[i] += g[i] * y[i] * (scalar(1) - y[i]);
      break;
    }
    case OpKind::Log: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      auto x = in[0].values();
      for (size_t i = 0; i < g.size(); i++) da[i] += g[i] / x[i];
      break;
    }
    case OpKind::Softmax: {
      if (!wants(0)) break;
      const auto& s = in[0].shape();
      const int rank = static_cast<int>(s.size());
      const int axis = at.axis < 0 ? rank + at.axis : at.axis;
      softmax_backward_slices(nd.output.values().data(), g.data(), grad_buf(*in[0].impl()).data(),
                              prod(s, 0, axis), s[static_cast<size_t>(axis)], prod(s, axis + 1, rank));
      break;
    }
    case OpKind::Reshape: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
      break;
    }
    case OpKind::Concat: {
      const auto& s0 = nd.output.shape();
      const int rank = static_cast<int>(s0.size());
      const int axis = at.axis < 0 ? rank + at.axis : at.axis;
      const int total = s0[static_cast<size_t>(axis)];
      const int64_t outer = prod(s0, 0, axis);
      const int64_t inner = prod(s0, axis + 1, rank);
      int64_t off = 0;
      for (size_t t = 0; t < in.size(); t++) {
        const int n = in[t].shape()[static_cast<size_t>(axis)];
        if (wants(t)) {
          auto da = grad_buf(*in[t].impl());
          for (int64_t o = 0; o < outer; o++) {
            const scalar* gp = g.data() + (o * total + off) * inner;
            scalar* dp = da.data() + o * n * inner;
            for (int64_t i = 0; i < static_cast<int64_t>(n) * inner; i++) dp[i] += gp[i];
          }
        }
        off += n;
      }
      break;
    }
    case OpKind::Slice: {
      if (!wants(0)) break;
      const auto& s = in[0].shape();
      const int rank = static_cast<int>(s.size());
      const int axis = at.axis < 0 ? rank + at.axis : at.axis;
      const int n = s[static_cast<size_t>(axis)];
      const int64_t outer = prod(s, 0, axis);
      const int64_t inner = prod(s, axis + 1, rank);
      auto da = grad_buf(*in[0].impl());
      for (int64_t o = 0; o < outer; o++) {
        const scalar* gp = g.data() + o * at.len * inner;
        scalar* dp = da.data() + (o * n + at.start) * inner;
        for (int64_t i = 0; i < static_cast<int64_t>(at.len) * inner; i++) dp[i] += gp[i];
      }
      break;
    }
    case OpKind::ReduceSum: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      const scalar gv = g[0];
      for (auto& d : da) d += gv;
      break;
    }
    case OpKind::ReduceMean: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      const scalar gv = g[0] / static_cast<scalar>(da.size());
      for (auto& d : da) d += gv;
      break;
    }
    case OpKind::GatherRows: {
      if (!wants(0)) break;
      const int D = in[0].shape()[1];
      auto da = grad_buf(*in[0].impl());
      for (size_t i = 0; i < at.indices.size(); i++) {
        const scalar* gp = g.data() + i * static_cast<size_t>(D);
        scalar* dp = da.data() + static_cast<int64_t>(at.indices[i]) * D;
        for (int j = 0; j < D; j++) dp[j] += gp[j];
      }
      break;
    }
    case OpKind::NchwToNhwc: {
      if (!wants(0)) break;
      const auto& s = in[0].shape();
      const int N = s[0], C = s[1], H = s[2], W = s[3];
      auto da = grad_buf(*in[0].impl());
      for (int n = 0; n < N; n++)
        for (int c = 0; c < C; c++)
          for (int y = 0; y < H; y++)
            for (int x = 0; x < W; x++)
              da[((static_cast<int64_t>(n) * C + c) * H + y) * W + x] +=
                  g[((static_cast<int64_t>(n) * H + y) * W + x) * C + c];
      break;
    }
    case OpKind::NhwcToNchw: {
      if (!wants(0)) break;
      const auto& s = in[0].shape();
      const int N = s[0], H = s[1], W = s[2], C = s[3];
      auto da = grad_buf(*in[0].impl());
      for (int n = 0; n < N; n++)
        for (int y = 0; y < H; y++)
          for (int x = 0; x < W; x++)
            for (int c = 0; c < C; c++)
              da[((static_cast<int64_t>(n) * H + y) * W + x) * C + c] +=
                  g[((static_cast<int64_t>(n) * C + c) * H + y) * W + x];
      break;
    }
    case OpKind::ArgmaxOneHotSte: {
      if (!wants(0)) break;
      const auto& s = in[0].shape();
      softmax_backward_slices(nd.saved.data(), g.data(), grad_buf(*in[0].impl()).data(), s[0], s[1], 1);
      break;
    }
    case OpKind::StePassthrough: {
      if (!wants(0)) break;
      auto da = grad_buf(*in[0].impl());
      for (size_t i = 0; i < g.size(); i++) da[i] += g[i];
      break;
    }
  }
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar-shaped" +
                                (loss.defined() ? ", got " + shape_str(loss.shape()) : std::string()));
  Tape* tape = Tape::active();
  if (!tape || tape->size() == 0) throw std::runtime_error("backward: no active tape or tape is empty");
  if (loss.impl()->node < 0 || loss.impl()->tape_gen != tape->gen())
    throw std::runtime_error("backward: loss was not produced on the active tape");

  const size_t start = static_cast<size_t>(loss.impl()->node);
  // Fresh pass: grads of tape-produced tensors are scratch, leaf grads persist.
  for (size_t i = 0; i <= start; i++) tape->node(i).output.impl()->grad.clear();
  grad_buf(*loss.impl())[0] = scalar(1);

  for (size_t i = start + 1; i-- > 0;) {
    TapeNode& nd = tape->node(i);
    if (nd.output.impl()->grad.empty()) continue;  // not on the path to the loss
    backward_op(nd);
  }
}

// ---------------------------------------------------------------------------
// Named wrappers

Tensor add(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Add, {a, b}); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Sub, {a, b}); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Mul, {a, b}); }

Tensor scalar_mul(const Tensor& a, double c) {
  OpAttrs at;
  at.alpha = c;
  return apply_primitive(OpKind::ScalarMul, {a}, at);
}

Tensor scalar_add(const Tensor& a, double c) {
  OpAttrs at;
  at.alpha = c;
  return apply_primitive(OpKind::ScalarAdd, {a}, at);
}

Tensor matmul(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Matmul, {a, b}); }
Tensor bmm(const Tensor& a, const Tensor& b) { return apply_primitive(OpKind::Bmm, {a, b}); }
Tensor transpose_last2(const Tensor& a) { return apply_primitive(OpKind::TransposeLast2, {a}); }

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  OpAttrs at;
  at.stride = stride;
  at.pad = pad;
  return apply_primitive(OpKind::Conv2d, {x, w, bias}, at);
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  OpAttrs at;
  at.stride = stride;
  at.pad = pad;
  return apply_primitive(OpKind::Conv2d, {x, w}, at);
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  OpAttrs at;
  at.stride = stride;
  at.pad = pad;
  return apply_primitive(OpKind::TransposedConv2d, {x, w, bias}, at);
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  OpAttrs at;
  at.stride = stride;
  at.pad = pad;
  return apply_primitive(OpKind::TransposedConv2d, {x, w}, at);
}

Tensor nearest_upsample(const Tensor& x, int factor) {
  OpAttrs at;
  at.factor = factor;
  return apply_primitive(OpKind::NearestUpsample, {x}, at);
}

Tensor avg_downsample(const Tensor& x, int factor) {
  OpAttrs at;
  at.factor = factor;
  return apply_primitive(OpKind::AvgDownsample, {x}, at);
}

Tensor relu(const Tensor& x) { return apply_primitive(OpKind::Relu, {x}); }

Tensor leaky_relu(const Tensor& x, double slope) {
  OpAttrs at;
  at.alpha = slope;
  return apply_primitive(OpKind::LeakyRelu, {x}, at);
}

Tensor sigmoid(const Tensor& x) { return apply_primitive(OpKind::Sigmoid, {x}); }

Tensor softmax(const Tensor& x, int axis) {
  OpAttrs at;
  at.axis = axis;
  return apply_primitive(OpKind::Softmax, {x}, at);
}

Tensor log_op(const Tensor& x) { return apply_primitive(OpKind::Log, {x}); }

Tensor reshape(const Tensor& x, Shape shape) {
  OpAttrs at;
  at.shape = std::move(shape);
  return apply_primitive(OpKind::Reshape, {x}, at);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  OpAttrs at;
  at.axis = axis;
  return apply_primitive(OpKind::Concat, xs, at);
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  OpAttrs at;
  at.axis = axis;
  at.start = start;
  at.len = len;
  return apply_primitive(OpKind::Slice, {x}, at);
}

Tensor reduce_sum(const Tensor& x) { return apply_primitive(OpKind::ReduceSum, {x}); }
Tensor reduce_mean(const Tensor& x) { return apply_primitive(OpKind::ReduceMean, {x}); }

Tensor gather_rows(const Tensor& table, const std::vector<int>& indices) {
  OpAttrs at;
  at.indices = indices;
  return apply_primitive(OpKind::GatherRows, {table}, at);
}

Tensor nchw_to_nhwc(const Tensor& x) { return apply_primitive(OpKind::NchwToNhwc, {x}); }
Tensor nhwc_to_nchw(const Tensor& x) { return apply_primitive(OpKind::NhwcToNchw, {x}); }

Tensor argmax_one_hot_ste(const Tensor& logits) {
  return apply_primitive(OpKind::ArgmaxOneHotSte, {logits});
}

Tensor ste_passthrough(const Tensor& grad_path, const Tensor& value_src) {
  return apply_primitive(OpKind::StePassthrough, {grad_path, value_src});
}

Tensor mse(const Tensor& a, const Tensor& b) {
  Tensor d = sub(a, b);
  return reduce_mean(mul(d, d));
}

}  // namespace tvq
