#include "tabgsl/nn.hpp"

#include <stdexcept>

namespace tabgsl {

Var ParameterSet::add(std::string name, Matrix init) {
  for (const auto& p : items_) {
    if (p.name == name) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
  }
  Var v = ag::parameter(std::move(init));
  items_.push_back({std::move(name), v});
  return v;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : items_) total += static_cast<std::size_t>(p.var.value().size());
  return total;
}

const Var& ParameterSet::at(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return p.var;
  }
  throw std::out_of_range("no parameter named " + name);
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.var.zero_grad();
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.var.value());
  return out;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  if (values.size() != items_.size()) {
    throw std::invalid_argument("restore: parameter count mismatch");
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& dst = items_[i].var.mutable_value();
    if (dst.rows() != values[i].rows() || dst.cols() != values[i].cols()) {
      throw std::invalid_argument("restore: shape mismatch for " +
                                  items_[i].name);
    }
    dst = values[i];
  }
}

void ParameterSet::extend(const ParameterSet& other, const std::string& prefix) {
  for (const auto& p : other.items_) items_.push_back({prefix + p.name, p.var});
}

Matrix uniform_fan_in(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i) {
    for (Eigen::Index j = 0; j < fan_out; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                     double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
  }
  return m;
}

Linear::Linear(ParameterSet& params, const std::string& name, Eigen::Index in,
               Eigen::Index out, Rng& rng) {
  weight = params.add(name + ".weight", uniform_fan_in(rng, in, out));
  bias = params.add(name + ".bias", Matrix::Zero(1, out));
}

Var Linear::operator()(const Var& x) const {
  if (x.cols() != weight.rows()) {
    throw std::invalid_argument("Linear: input width " +
                                std::to_string(x.cols()) + " != " +
                                std::to_string(weight.rows()));
  }
  return ag::add_row(ag::matmul(x, weight), bias);
}

Var dropout(const Var& x, double p, Rng* rng) {
  if (rng == nullptr || p <= 0.0) return x;
  if (p >= 1.0) return ag::mul_const(x, Matrix::Zero(x.rows(), x.cols()));
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
      mask(i, j) = rng->bernoulli(p) ? 0.0 : keep_scale;
    }
  }
  return ag::mul_const(x, mask);
}

}  // namespace tabgsl
