#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tvq {

#ifdef TVQSR_SCALAR_F32
using scalar = float;
#else
using scalar = double;
#endif

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class OpKind {
  Add,
  Sub,
  Mul,
  ScalarMul,
  ScalarAdd,
  Matmul,
  Bmm,
  TransposeLast2,
  Conv2d,
  TransposedConv2d,
  NearestUpsample,
  AvgDownsample,
  Relu,
  LeakyRelu,
  Sigmoid,
  Softmax,
  Log,
  Reshape,
  Concat,
  Slice,
  ReduceSum,
  ReduceMean,
  GatherRows,
  NchwToNhwc,
  NhwcToNchw,
  ArgmaxOneHotSte,
  StePassthrough,
};

const char* op_name(OpKind op);
// Reverse mapping; throws std::invalid_argument for unknown names.
OpKind op_from_name(const std::string& name);

struct OpAttrs {
  int stride = 1;
  int pad = 0;
  int factor = 2;
  int axis = -1;
  double alpha = 0.0;        // leaky slope or scalar constant
  Shape shape;               // reshape target
  int start = 0, len = 0;    // slice window
  std::vector<int> indices;  // gather rows
};

struct TensorImpl {
  Shape shape;
  // Value buffer, shared with detached views of this tensor.
  std::shared_ptr<std::vector<scalar>> buf;
  std::vector<scalar> grad;  // empty until touched by backward
  bool requires_grad = false;
  uint64_t tape_gen = 0;  // generation of the tape that produced this tensor
  int node = -1;          // producing node on that tape, -1 for leaves
};

// Value-semantic handle onto a shared dense buffer. Copying a Tensor aliases
// the storage; detach() makes a non-grad view sharing values.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->buf->size()); }
  bool is_scalar() const { return numel() == 1; }

  std::span<scalar> values() { return *impl_->buf; }
  std::span<const scalar> values() const { return *impl_->buf; }
  scalar item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient buffer, zero-filled on first access.
  std::span<scalar> grad();
  std::span<const scalar> grad_view() const { return impl_->grad; }
  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

struct TapeNode {
  OpKind op;
  OpAttrs attrs;
  std::vector<Tensor> inputs;
  Tensor output;
  std::vector<scalar> saved;  // op-specific forward state (e.g. softmax probs)
};

// Ordered record of primitive applications. Creation order is topological by
// construction. One tape is active at a time (single-threaded training).
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  uint64_t gen() const { return gen_; }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  const TapeNode& node(size_t i) const { return nodes_[i]; }
  TapeNode& node(size_t i) { return nodes_[i]; }

  // RAII activation; nested scopes restore the previous tape.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  int record(TapeNode node);

 private:
  std::vector<TapeNode> nodes_;
  uint64_t gen_;
};

// ---------------------------------------------------------------------------
// Construction

Tensor make_tensor(Shape shape, std::vector<scalar> values, bool requires_grad = false);
Tensor zeros(Shape shape, bool requires_grad = false);
Tensor full(Shape shape, scalar value, bool requires_grad = false);
Tensor scalar_tensor(scalar value);

// Value-identical tensor excluded from gradient flow; shares the buffer.
Tensor detach(const Tensor& x);
// Deep copy (fresh buffer, no tape participation).
Tensor clone_values(const Tensor& x);

// ---------------------------------------------------------------------------
// Primitives. All shape checks throw std::invalid_argument naming the op and
// the offending extents. Applications are recorded on the active tape when
// any input requires grad.

Tensor apply_primitive(OpKind op, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);              // 2-D
Tensor bmm(const Tensor& a, const Tensor& b);                 // 3-D batched
Tensor transpose_last2(const Tensor& a);                      // 2-D or 3-D
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor nearest_upsample(const Tensor& x, int factor);
Tensor avg_downsample(const Tensor& x, int factor);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor log_op(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor reduce_sum(const Tensor& x);   // -> shape {1}
Tensor reduce_mean(const Tensor& x);  // -> shape {1}
Tensor gather_rows(const Tensor& table, const std::vector<int>& indices);
Tensor nchw_to_nhwc(const Tensor& x);
Tensor nhwc_to_nchw(const Tensor& x);

// Forward: exact argmax one-hot per row (ties -> lowest index).
// Backward: the softmax-probabilities path (straight-through).
Tensor argmax_one_hot_ste(const Tensor& logits);
// Forward: bit-copy of value_src. Backward: identity onto grad_path.
Tensor ste_passthrough(const Tensor& grad_path, const Tensor& value_src);

// Convenience compositions.
Tensor mse(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Reverse pass. Populates grad for every requires_grad tensor reachable from
// the (scalar-shaped) loss. Leaf grads accumulate across calls; grads of
// tape-produced tensors are reset at the start of each call.
void backward(const Tensor& loss);

}  // namespace tvq
