#pragma once

#include <vector>

namespace ctxfactor {

struct EvalBatch {
  std::vector<double> predictions;
  std::vector<double> truths;
  // Range of the target variable over the full dataset; only nrmse uses it.
  double y_min = 0.0;
  double y_max = 0.0;
};

// Probability that a uniformly random positive outscores a uniformly random
// negative, ties credited 0.5 (Mann-Whitney). Truths must be 0/1 labels with
// both classes present.
double auc(const EvalBatch& batch);

double rmse(const EvalBatch& batch);

// RMSE divided by the target's value range.
double nrmse(const EvalBatch& batch);

}  // namespace ctxfactor
