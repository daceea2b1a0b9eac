#pragma once

#include <string>
#include <vector>

#include "tvq/tensor.hpp"

namespace tvq {

struct NamedParam {
  std::string name;
  Tensor value;
};

using ParamList = std::vector<NamedParam>;

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments live in the optimizer; parameters are
// updated in place through their shared buffers.
class AdamOptimizer {
 public:
  AdamOptimizer(ParamList params, AdamHyper hyper);

  // One update from the gradients currently on the parameters. Tensors with
  // no gradient buffer are treated as zero-gradient. Throws std::runtime_error
  // naming the parameter if its gradient contains NaN/Inf.
  void step();
  void zero_grad();

  int64_t step_count() const { return t_; }
  const ParamList& params() const { return params_; }
  const AdamHyper& hyper() const { return hyper_; }
  void set_lr(double lr) { hyper_.lr = lr; }

 private:
  ParamList params_;
  AdamHyper hyper_;
  std::vector<std::vector<scalar>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace tvq
