#include "tabgsl/metrics.hpp"

#include <stdexcept>

namespace tabgsl {

F1Scores f1_scores(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                   int class_count) {
  if (y_true.empty()) throw std::invalid_argument("f1_scores: empty input");
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument("f1_scores: length mismatch");
  }
  const auto C = static_cast<std::size_t>(class_count);
  std::vector<long> tp(C, 0), fp(C, 0), fn(C, 0), support(C, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= class_count || p < 0 || p >= class_count) {
      throw std::invalid_argument("f1_scores: label out of range");
    }
    ++support[static_cast<std::size_t>(t)];
    if (t == p) {
      ++tp[static_cast<std::size_t>(t)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  F1Scores out;
  out.per_class.resize(C);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    // 2PR / (P + R) in count form, one rounding instead of four.
    const long denom = 2 * tp[c] + fp[c] + fn[c];
    const double f1 =
        denom > 0 ? static_cast<double>(2 * tp[c]) / static_cast<double>(denom) : 0.0;
    out.per_class[c] = f1;
    total += f1;
  }
  out.macro = total / static_cast<double>(C);
  long smallest = -1;
  for (std::size_t c = 0; c < C; ++c) {
    if (support[c] == 0) continue;
    if (smallest < 0 || support[c] < smallest) {
      smallest = support[c];
      out.minority_class = static_cast<int>(c);
    }
  }
  out.minority = out.per_class[static_cast<std::size_t>(out.minority_class)];
  return out;
}

double headline_metric(const F1Scores& s, int class_count) {
  return class_count == 2 ? s.minority : s.macro;
}

}  // namespace tabgsl
