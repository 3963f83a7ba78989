#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "ctxfactor/metrics.hpp"
#include "ctxfactor/rng.hpp"

using namespace ctxfactor;

namespace {

// O(n^2) oracle: count positive-negative pairs won, half credit for ties.
double auc_pairwise(const std::vector<double>& preds, const std::vector<double>& truths) {
  double won = 0.0;
  std::size_t pairs = 0;
  for (std::size_t p = 0; p < preds.size(); ++p) {
    if (truths[p] != 1.0) continue;
    for (std::size_t n = 0; n < preds.size(); ++n) {
      if (truths[n] != 0.0) continue;
      ++pairs;
      if (preds[p] > preds[n]) {
        won += 1.0;
      } else if (preds[p] == preds[n]) {
        won += 0.5;
      }
    }
  }
  return won / static_cast<double>(pairs);
}

EvalBatch batch_of(std::vector<double> preds, std::vector<double> truths, double lo = 0.0,
                   double hi = 0.0) {
  EvalBatch b;
  b.predictions = std::move(preds);
  b.truths = std::move(truths);
  b.y_min = lo;
  b.y_max = hi;
  return b;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("auc matches pairwise enumeration exactly on random batches") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 200;
    std::vector<double> preds(n), truths(n);
    bool saw0 = false, saw1 = false;
    for (int i = 0; i < n; ++i) {
      // Coarse grid of predictions forces plenty of exact ties.
      preds[i] = rng.uniform_int(0, 9) / 10.0;
      truths[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
      saw0 |= truths[i] == 0.0;
      saw1 |= truths[i] == 1.0;
    }
    if (!saw0) truths[0] = 0.0;
    if (!saw1) truths[1] = 1.0;
    // Exact equality: both sides resolve to the same half-integer numerator.
    CHECK(auc(batch_of(preds, truths)) == auc_pairwise(preds, truths));
  }
}

TEST_CASE("auc anchors") {
  // Perfect ranking.
  CHECK(auc(batch_of({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})) == 1.0);
  // Perfectly inverted.
  CHECK(auc(batch_of({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0})) == 0.0);
  // All predictions identical: every pair ties, AUC is exactly one half.
  CHECK(auc(batch_of({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0})) == 0.5);
  // One tie out of four pairs: 3/4 + (1/2)/4.
  CHECK(auc(batch_of({0.7, 0.4, 0.4, 0.1}, {1, 1, 0, 0})) == 0.875);
}

TEST_CASE("auc input validation") {
  CHECK_THROWS_AS(auc(batch_of({}, {})), std::invalid_argument);
  CHECK_THROWS_AS(auc(batch_of({0.5}, {1.0, 0.0})), std::invalid_argument);  // length mismatch
  CHECK_THROWS_AS(auc(batch_of({0.5, 0.6}, {1.0, 1.0})), std::invalid_argument);  // one class
  CHECK_THROWS_AS(auc(batch_of({0.5, 0.6}, {1.0, 0.5})), std::invalid_argument);  // non-binary
}

TEST_CASE("rmse matches direct summation") {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 99));
    std::vector<double> preds(n), truths(n);
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      preds[i] = rng.uniform(-5.0, 5.0);
      truths[i] = rng.uniform(-5.0, 5.0);
      ss += (preds[i] - truths[i]) * (preds[i] - truths[i]);
    }
    const double expect = std::sqrt(ss / n);
    CHECK(rmse(batch_of(preds, truths)) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(rmse(batch_of({1.0, 2.0}, {1.0, 2.0})) == 0.0);
}

TEST_CASE("nrmse divides by the declared target range") {
  const EvalBatch b = batch_of({2.0, 4.0}, {0.0, 0.0}, 0.0, 10.0);
  const double expected = std::sqrt((4.0 + 16.0) / 2.0) / 10.0;
  CHECK(nrmse(b) == doctest::Approx(expected).epsilon(1e-12));
  // Degenerate range is an error rather than a division by zero.
  CHECK_THROWS_AS(nrmse(batch_of({1.0}, {1.0}, 3.0, 3.0)), std::invalid_argument);
  CHECK_THROWS_AS(nrmse(batch_of({1.0}, {1.0}, 5.0, 3.0)), std::invalid_argument);
}

}  // TEST_SUITE
