#include "tabgsl/optim.hpp"

#include <cmath>

namespace tabgsl {

void Adam::add_group(const ParameterSet& params, AdamOptions opts) {
  groups_.push_back(opts);
  for (const auto& p : params.items()) {
    slots_.push_back({p.var, Matrix::Zero(p.var.rows(), p.var.cols()),
                      Matrix::Zero(p.var.rows(), p.var.cols()),
                      groups_.size() - 1});
  }
}

void Adam::step() {
  ++t_;
  const auto t = static_cast<double>(t_);
  for (auto& s : slots_) {
    if (!s.var.has_grad()) continue;
    const auto& o = groups_[s.group];
    if (o.lr == 0.0) continue;
    Matrix g = s.var.grad();
    if (o.weight_decay != 0.0) g += o.weight_decay * s.var.value();
    s.m = o.beta1 * s.m + (1.0 - o.beta1) * g;
    s.v = o.beta2 * s.v + (1.0 - o.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(o.beta1, t);
    const double bc2 = 1.0 - std::pow(o.beta2, t);
    auto& theta = s.var.mutable_value();
    theta.array() -= o.lr * (s.m.array() / bc1) /
                     ((s.v.array() / bc2).sqrt() + o.eps);
  }
}

}  // namespace tabgsl
