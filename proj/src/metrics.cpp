#include "ctxfactor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ctxfactor {

namespace {

void check_batch(const EvalBatch& batch) {
  if (batch.predictions.empty()) throw std::invalid_argument("empty evaluation batch");
  if (batch.predictions.size() != batch.truths.size()) {
    throw std::invalid_argument("predictions and truths differ in length");
  }
}

}  // namespace

double auc(const EvalBatch& batch) {
  check_batch(batch);
  std::size_t n_pos = 0;
  for (double y : batch.truths) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("auc: truths must be 0/1 labels");
    if (y == 1.0) ++n_pos;
  }
  const std::size_t n = batch.truths.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: truths contain a single class");

  // Rank-statistic form with midranks for ties. 2*rank keeps the
  // accumulation integral, so the result matches pairwise counting exactly.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return batch.predictions[a] < batch.predictions[b];
  });
  double twice_rank_sum_pos = 0.0;
  std::size_t s = 0;
  while (s < n) {
    std::size_t e = s;
    while (e + 1 < n && batch.predictions[order[e + 1]] == batch.predictions[order[s]]) ++e;
    // Tied block occupies ranks s+1 .. e+1 (1-based); midrank doubled = s+e+2.
    const double twice_midrank = static_cast<double>(s + e + 2);
    for (std::size_t q = s; q <= e; ++q) {
      if (batch.truths[order[q]] == 1.0) twice_rank_sum_pos += twice_midrank;
    }
    s = e + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double numerator = 0.5 * (twice_rank_sum_pos - np * (np + 1.0));
  return numerator / (np * static_cast<double>(n_neg));
}

double rmse(const EvalBatch& batch) {
  check_batch(batch);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.predictions.size(); ++i) {
    const double d = batch.predictions[i] - batch.truths[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(batch.predictions.size()));
}

double nrmse(const EvalBatch& batch) {
  if (!(batch.y_max > batch.y_min)) {
    throw std::invalid_argument("nrmse: degenerate target range (y_max must exceed y_min)");
  }
  return rmse(batch) / (batch.y_max - batch.y_min);
}

}  // namespace ctxfactor
