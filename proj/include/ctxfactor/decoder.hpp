#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctxfactor/data_model.hpp"
#include "ctxfactor/factorization.hpp"

namespace ctxfactor {

// Scales row j of F by x_f[j] and column-sums the result into an R-vector.
// With a one-hot x_f this selects a single champion row.
Eigen::VectorXd fuse_individual_context(const Eigen::VectorXd& x_f, const Eigen::MatrixXd& F);

struct FeatureOptions {
  Target target = Target::kWin;
  // Baseline swaps the embedding blocks for one-hot user, one-hot champion
  // and a numeric version index; everything else stays identical.
  bool baseline = false;
  bool exclude_performance = false;  // drop kills/deaths/assists/kda entirely
};

// Encoders plus normalization statistics, fitted on training instances
// only. Assembly walks a fixed layout:
//   [u_i | f_i | t_i | x^m]                      (embedding mode)
//   [user 1-hot | champion 1-hot | version_z | x^m]  (baseline mode)
// where x^m = season/queue/champion-type/role/lane/map one-hots, z-scored
// duration and timestamp, and the non-excluded performance numbers.
struct FeatureSpace {
  FeatureOptions options;
  int rank = 0;  // embedding width; 0 in baseline mode
  int n_users = 0;
  int n_champions = 0;
  CategoricalDict users;
  CategoricalDict seasons;
  CategoricalDict queue_types;
  CategoricalDict map_ids;
  CategoricalDict roles;
  CategoricalDict lanes;
  std::set<std::string> excluded;              // fields never emitted
  std::vector<std::string> continuous_names;   // layout order
  Eigen::VectorXd continuous_mean;
  Eigen::VectorXd continuous_sd;  // sd 0 -> the feature is emitted as 0
  int dimension = 0;

  // Feature vector for one instance. `factors` is required in embedding
  // mode and ignored in baseline mode. Unseen categorical values (and ids
  // beyond the factor rows) become all-zero blocks with a warning on
  // stderr.
  Eigen::VectorXd assemble(const LabeledInstance& instance, const KruskalFactors* factors) const;
  // Column-per-instance batch, dimension x n.
  Eigen::MatrixXd assemble_matrix(const std::vector<LabeledInstance>& instances,
                                  const KruskalFactors* factors) const;
  double target_value(const LabeledInstance& instance) const;
};

// Dictionaries come from the dataset; z-score statistics from `train` only.
FeatureSpace fit_feature_space(const Dataset& dataset, const std::vector<LabeledInstance>& train,
                               const KruskalFactors* factors, const FeatureOptions& options);

// ---------------------------------------------------------------------------
// The multilayer perceptron under the decoder. Kept as a standalone value
// type so the backpropagation can be oracle-checked on arbitrary shapes.

struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: out x in
  std::vector<Eigen::VectorXd> biases;
  bool binary = true;  // sigmoid + cross-entropy vs ReLU + squared error
  double leaky_slope = 0.01;

  std::vector<int> layer_sizes() const;
};

// Hidden widths 256 down to 2, then the scalar output.
std::vector<int> decoder_layer_plan(int input_dim);

// He-style random init, deterministic under the seed. `layer_sizes` lists
// input, hidden..., output (output must be 1).
Mlp make_mlp(const std::vector<int>& layer_sizes, bool binary, std::uint64_t seed);

// Forward pass without dropout; X is dimension x batch. Binary nets emit
// probabilities in (0,1), regression nets values >= 0.
Eigen::VectorXd mlp_predict(const Mlp& mlp, const Eigen::MatrixXd& X);

// Mean data loss (cross-entropy or squared error) plus l2_beta * sum of
// squared weights. An empty batch has zero data loss.
double mlp_loss(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double l2_beta);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_biases;
};

// Loss plus analytic gradients (no dropout). The L2 term contributes
// 2 * l2_beta * W to each weight gradient and nothing to biases.
double mlp_loss_and_gradients(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double l2_beta, MlpGradients& grads);

// Max relative error between analytic gradients and central finite
// differences over every parameter.
double gradient_check(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      double l2_beta, double step = 1e-5);

// ---------------------------------------------------------------------------

struct TrainOptions {
  double learning_rate = 1e-3;
  double l2_beta = 1e-7;
  int batch_size = 2048;
  double dropout = 0.1;  // after each hidden activation, training only
  int max_epochs = 200;
  int patience = 10;                  // epochs without validation improvement
  double validation_fraction = 0.1;   // carved from the training instances
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct TrainLog {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  double final_train_loss = 0.0;
  std::vector<double> train_loss_per_epoch;
  std::vector<double> validation_loss_per_epoch;
};

struct DecoderModel {
  FeatureSpace space;
  Mlp mlp;
  std::string factor_run_id;  // empty in baseline mode
  TrainLog log;
  std::map<std::string, std::string> metadata;  // training context (split seed, ...)
};

// Adam + inverted dropout + early stopping on a validation carve-out, with
// the best-epoch weights restored. Deterministic under options.seed.
// Throws on an empty or single-class (binary) training set and aborts with
// diagnostics if the loss goes non-finite.
DecoderModel train_decoder(const Dataset& dataset, const std::vector<LabeledInstance>& train,
                           const KruskalFactors* factors, const FeatureOptions& feature_options,
                           const TrainOptions& train_options);

std::vector<double> predict(const DecoderModel& model,
                            const std::vector<LabeledInstance>& instances,
                            const KruskalFactors* factors);

void save_model(const DecoderModel& model, const std::string& path);
DecoderModel load_model(const std::string& path);

}  // namespace ctxfactor
