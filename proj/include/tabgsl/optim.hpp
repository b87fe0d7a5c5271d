#pragma once

#include "tabgsl/nn.hpp"

#include <vector>

namespace tabgsl {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 penalty added to the gradient before the moment updates.
  double weight_decay = 0.0;
};

/// Adam over one or more parameter groups with per-group options.
/// Parameters without an accumulated gradient are skipped for that step.
class Adam {
 public:
  void add_group(const ParameterSet& params, AdamOptions opts);
  void step();
  long steps() const { return t_; }

 private:
  struct Slot {
    Var var;
    Matrix m;
    Matrix v;
    std::size_t group;
  };
  std::vector<AdamOptions> groups_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

}  // namespace tabgsl
