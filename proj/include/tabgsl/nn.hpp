// Parameter containers and small layer building blocks shared by the models.
#pragma once

#include "tabgsl/autograd.hpp"
#include "tabgsl/rng.hpp"

#include <string>
#include <vector>

namespace tabgsl {

using ag::Matrix;
using ag::Var;

struct NamedParameter {
  std::string name;
  Var var;
};

/// Ordered collection of trainable leaves. Order is stable and is the order
/// used by optimizers, checkpoints and gradient checks.
class ParameterSet {
 public:
  Var add(std::string name, Matrix init);

  const std::vector<NamedParameter>& items() const { return items_; }
  std::vector<NamedParameter>& items() { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;

  /// Nullptr-safe lookup; throws std::out_of_range if absent.
  const Var& at(const std::string& name) const;

  void zero_grad();
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

  /// Appends all of `other`'s parameters with `prefix` prepended to names.
  void extend(const ParameterSet& other, const std::string& prefix = "");

 private:
  std::vector<NamedParameter> items_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight matrix of shape fan_in x fan_out.
Matrix uniform_fan_in(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out);
Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                     double stddev);

/// Affine map x W + b with W stored fan_in x fan_out.
struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, Eigen::Index in,
         Eigen::Index out, Rng& rng);

  Var operator()(const Var& x) const;
  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
};

/// Inverted dropout. Identity when `rng` is null or `p` is 0.
Var dropout(const Var& x, double p, Rng* rng);

}  // namespace tabgsl
