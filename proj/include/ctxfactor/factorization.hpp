#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctxfactor/tensor.hpp"

namespace ctxfactor {

// Rank-R Kruskal form of a 3-way tensor: rows are entity embeddings, columns
// are component vectors. All entries are >= 0.
struct KruskalFactors {
  Eigen::MatrixXd U;  // users,     I x R
  Eigen::MatrixXd T;  // versions,  J x R
  Eigen::MatrixXd F;  // champions, K x R
  int rank = 0;
};

enum class Optimizer : int { kQuasiNewtonBounded = 0, kProjectedGradient };

struct FitOptions {
  int rank = 6;
  int max_iterations = 500;
  double tolerance = 1e-8;  // relative objective change
  int restarts = 3;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kQuasiNewtonBounded;
  int lbfgs_memory = 7;
  bool verbose = false;
};

struct FitReport {
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
  int restarts_used = 0;
  int best_restart = -1;
};

// Model value at one cell: sum_r U(i,r) * T(j,r) * F(k,r).
double reconstruct(const KruskalFactors& factors, int i, int j, int k);

// (1/2) sum over observed cells of the squared residual. Observed zeros
// participate; cells in unobserved slices never do.
double masked_loss(const KruskalFactors& factors, const SparseMaskedTensor& tensor);

struct Gradient {
  Eigen::MatrixXd U, T, F;
};

// Exact gradient of masked_loss, accumulated slice-wise over the observed
// cells only (masked MTTKRP; the dense tensor is never materialized).
Gradient masked_gradient(const KruskalFactors& factors, const SparseMaskedTensor& tensor);

// Fits a non-negative CP model by minimizing masked_loss subject to
// elementwise lower bounds at 0, from `restarts` random initializations;
// returns the best fit. Deterministic given options.seed.
KruskalFactors factorize(const SparseMaskedTensor& tensor, const FitOptions& options,
                         FitReport* report = nullptr);

struct RankScore {
  int rank = 0;
  double score = 0.0;  // lower is better
  bool ok = false;
  std::string note;
};

struct RankSelection {
  int chosen_rank = 0;
  std::vector<RankScore> scores;
};

// Fits each candidate rank on `tensor` and scores it with `evaluator`
// (lower is better, e.g. validation reconstruction error). Returns the
// smallest rank whose score is within `rel_tolerance` of the best.
RankSelection select_rank(const SparseMaskedTensor& tensor, const std::vector<int>& candidates,
                          const FitOptions& base_options,
                          const std::function<double(const KruskalFactors&)>& evaluator,
                          double rel_tolerance = 0.005);

// Randomly partitions the observed slices into a fit part and a held-out
// part (at least one slice each). Entries follow their slice.
std::pair<SparseMaskedTensor, SparseMaskedTensor> split_slices_holdout(
    const SparseMaskedTensor& tensor, double holdout_fraction, std::uint64_t seed);

// ||reconstruction - x|| / ||x|| over the tensor's observed cells.
double relative_error_on(const SparseMaskedTensor& tensor, const KruskalFactors& factors);

// Stable content hash of the factor values, recorded in downstream models.
std::string factors_run_id(const KruskalFactors& factors);

struct FitMeta {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Writes U.csv / T.csv / F.csv ("id,c0,...,c{R-1}") plus metadata.json.
// `user_labels`, when non-empty, provides the id column of U.csv.
void save_factors(const KruskalFactors& factors, const std::string& dir, const FitMeta& meta,
                  const std::vector<std::string>& user_labels = {});
KruskalFactors load_factors(const std::string& dir, FitMeta* meta = nullptr);

}  // namespace ctxfactor
