// Central finite-difference checks against reverse-mode gradients.
#pragma once

#include "tabgsl/autograd.hpp"
#include "tabgsl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace tabgsl::testing {

struct GradCheck {
  std::string name;
  double rel_error = 0.0;  // ||backprop - fd|| / max(||backprop||, ||fd||)
  double scale = 0.0;      // max(||backprop||, ||fd||)
  bool ok(double tol = 1e-4, double zero = 1e-8) const {
    return scale < zero || rel_error < tol;
  }
};

/// Compares d loss / d p for every tensor in `params`. The loss closure must
/// rebuild the graph from the current parameter values on every call.
inline std::vector<GradCheck> check_gradients(std::vector<NamedParameter> params,
                                              const std::function<ag::Var()>& loss_fn,
                                              double step = 1e-5) {
  for (auto& p : params) p.var.zero_grad();
  ag::backward(loss_fn());
  std::vector<ag::Matrix> analytic;
  for (auto& p : params) {
    analytic.push_back(p.var.has_grad() ? p.var.grad()
                                        : ag::Matrix::Zero(p.var.rows(), p.var.cols()));
  }
  std::vector<GradCheck> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    ag::Matrix& v = params[k].var.mutable_value();
    double diff2 = 0.0;
    double a2 = 0.0;
    double f2 = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double saved = v.data()[i];
      v.data()[i] = saved + step;
      const double up = loss_fn().scalar();
      v.data()[i] = saved - step;
      const double down = loss_fn().scalar();
      v.data()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double a = analytic[k].data()[i];
      diff2 += (a - fd) * (a - fd);
      a2 += a * a;
      f2 += fd * fd;
    }
    const double scale = std::sqrt(std::max(a2, f2));
    out.push_back({params[k].name, scale > 0.0 ? std::sqrt(diff2) / scale : 0.0, scale});
  }
  for (auto& p : params) p.var.zero_grad();
  return out;
}

inline std::vector<GradCheck> check_gradients(const ParameterSet& ps,
                                              const std::function<ag::Var()>& loss_fn,
                                              double step = 1e-5) {
  return check_gradients(ps.items(), loss_fn, step);
}

/// Shifts every parameter by small noise so checks do not sit on special
/// initial values (identity weights, unit slopes).
inline void jitter(ParameterSet& ps, Rng& rng, double amount = 0.05) {
  for (auto& p : ps.items()) {
    ag::Matrix& v = p.var.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += amount * rng.normal();
  }
}

}  // namespace tabgsl::testing
