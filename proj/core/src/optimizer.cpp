#include "tvq/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace tvq {

AdamOptimizer::AdamOptimizer(ParamList params, AdamHyper hyper)
    : params_(std::move(params)), hyper_(hyper) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.value.numel()), scalar(0));
    v_.emplace_back(static_cast<size_t>(p.value.numel()), scalar(0));
  }
}

void AdamOptimizer::step() {
  t_++;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); pi++) {
    auto& p = params_[pi];
    auto g = p.value.grad_view();
    auto vals = p.value.values();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < vals.size(); i++) {
      const scalar gi = g.empty() ? scalar(0) : g[i];
      if (!std::isfinite(gi))
        throw std::runtime_error("optimizer_step: non-finite gradient in parameter '" + p.name + "'");
      m[i] = static_cast<scalar>(hyper_.beta1) * m[i] + static_cast<scalar>(1.0 - hyper_.beta1) * gi;
      v[i] = static_cast<scalar>(hyper_.beta2) * v[i] + static_cast<scalar>(1.0 - hyper_.beta2) * gi * gi;
      const scalar mhat = m[i] / static_cast<scalar>(bc1);
      const scalar vhat = v[i] / static_cast<scalar>(bc2);
      vals[i] -= static_cast<scalar>(hyper_.lr) * mhat / (std::sqrt(vhat) + static_cast<scalar>(hyper_.eps));
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

}  // namespace tvq
