// Classification metrics.
#pragma once

#include <vector>

namespace tabgsl {

struct F1Scores {
  double minority = 0.0;
  double macro = 0.0;
  int minority_class = 0;
  std::vector<double> per_class;
};

/// Per-class F1 with 0/0 read as 0. The minority class is the least frequent
/// class in `y_true` among classes that occur (ties go to the lower index).
F1Scores f1_scores(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                   int class_count);

/// Minority F1 for two classes, macro F1 otherwise.
double headline_metric(const F1Scores& s, int class_count);

}  // namespace tabgsl
