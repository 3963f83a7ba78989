#include "ctxfactor/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ctxfactor/rng.hpp"

namespace ctxfactor {

Eigen::VectorXd fuse_individual_context(const Eigen::VectorXd& x_f, const Eigen::MatrixXd& F) {
  if (x_f.size() != F.rows()) {
    throw std::invalid_argument("fuse_individual_context: indicator length " +
                                std::to_string(x_f.size()) + " != champion rows " +
                                std::to_string(F.rows()));
  }
  return F.transpose() * x_f;
}

namespace {

// At most this many unseen-category warnings per feature space; assembly is
// per-instance and a systematic mismatch would otherwise flood stderr.
constexpr int kMaxUnseenWarnings = 10;

double continuous_value(const std::string& name, const LabeledInstance& inst) {
  if (name == "version_index") return static_cast<double>(inst.record.version_index);
  if (name == "duration") return static_cast<double>(inst.record.duration);
  if (name == "timestamp") return static_cast<double>(inst.record.timestamp);
  if (name == "kills") return static_cast<double>(inst.record.kills);
  if (name == "deaths") return static_cast<double>(inst.record.deaths);
  if (name == "assists") return static_cast<double>(inst.record.assists);
  if (name == "kda") return inst.kda;
  throw std::logic_error("unknown continuous feature " + name);
}

}  // namespace

FeatureSpace fit_feature_space(const Dataset& dataset, const std::vector<LabeledInstance>& train,
                               const KruskalFactors* factors, const FeatureOptions& options) {
  if (train.empty()) throw std::invalid_argument("fit_feature_space: empty training set");
  if (!options.baseline && factors == nullptr) {
    throw std::invalid_argument("fit_feature_space: embedding mode needs factor matrices");
  }

  FeatureSpace space;
  space.options = options;
  space.n_users = dataset.users.size();
  space.n_champions = dataset.n_champions;
  space.users = dataset.users;
  space.seasons = dataset.seasons;
  space.queue_types = dataset.queue_types;
  space.map_ids = dataset.map_ids;
  space.roles = dataset.roles;
  space.lanes = dataset.lanes;
  space.excluded = feature_exclusions(options.target, options.exclude_performance);
  space.excluded.insert(std::string(to_string(options.target)));  // never a feature of itself

  if (options.baseline) {
    space.rank = 0;
    space.continuous_names.push_back("version_index");
  } else {
    space.rank = factors->rank;
  }
  space.continuous_names.push_back("duration");
  space.continuous_names.push_back("timestamp");
  for (const char* name : {"kills", "deaths", "assists", "kda"}) {
    if (!space.excluded.count(name)) space.continuous_names.push_back(name);
  }

  const Eigen::Index nc = static_cast<Eigen::Index>(space.continuous_names.size());
  space.continuous_mean = Eigen::VectorXd::Zero(nc);
  space.continuous_sd = Eigen::VectorXd::Zero(nc);
  for (Eigen::Index f = 0; f < nc; ++f) {
    double mean = 0.0;
    for (const LabeledInstance& inst : train) {
      mean += continuous_value(space.continuous_names[static_cast<std::size_t>(f)], inst);
    }
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (const LabeledInstance& inst : train) {
      const double d =
          continuous_value(space.continuous_names[static_cast<std::size_t>(f)], inst) - mean;
      var += d * d;
    }
    var /= static_cast<double>(train.size());
    space.continuous_mean[f] = mean;
    space.continuous_sd[f] = var > 1e-24 ? std::sqrt(var) : 0.0;
  }

  space.dimension = (options.baseline ? space.n_users + space.n_champions : 3 * space.rank) +
                    space.seasons.size() + space.queue_types.size() + kNumChampionTypes +
                    space.roles.size() + space.lanes.size() + space.map_ids.size() +
                    static_cast<int>(nc);
  return space;
}

namespace {

// Shared by FeatureSpace::assemble for every dictionary-encoded block.
void fill_one_hot(Eigen::VectorXd& h, int& cursor, const CategoricalDict& dict,
                  const std::string& value, const char* what, int* warnings) {
  const int idx = dict.index_of(value);
  if (idx >= 0) {
    h[cursor + idx] = 1.0;
  } else if (*warnings < kMaxUnseenWarnings) {
    std::cerr << "warning: unseen " << what << " \"" << value << "\"; emitting a zero block\n";
    ++*warnings;
  }
  cursor += dict.size();
}

}  // namespace

Eigen::VectorXd FeatureSpace::assemble(const LabeledInstance& instance,
                                       const KruskalFactors* factors) const {
  static thread_local int warnings = 0;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(dimension);
  int cursor = 0;
  const MatchRecord& r = instance.record;

  if (options.baseline) {
    fill_one_hot(h, cursor, users, r.user_id, "user", &warnings);
    if (r.champion_id >= 0 && r.champion_id < n_champions) {
      h[cursor + r.champion_id] = 1.0;
    } else if (warnings < kMaxUnseenWarnings) {
      std::cerr << "warning: champion id " << r.champion_id << " outside the trained range\n";
      ++warnings;
    }
    cursor += n_champions;
  } else {
    if (factors == nullptr) {
      throw std::invalid_argument("assemble: embedding mode needs factor matrices");
    }
    const int i = users.index_of(r.user_id);
    if (i >= 0 && i < factors->U.rows()) {
      h.segment(cursor, rank) = factors->U.row(i).transpose();
    } else if (warnings < kMaxUnseenWarnings) {
      std::cerr << "warning: user \"" << r.user_id << "\" has no embedding; emitting zeros\n";
      ++warnings;
    }
    cursor += rank;
    if (r.champion_id >= 0 && r.champion_id < factors->F.rows()) {
      // One-hot fusion reduces to the champion's own embedding row.
      h.segment(cursor, rank) = factors->F.row(r.champion_id).transpose();
    } else if (warnings < kMaxUnseenWarnings) {
      std::cerr << "warning: champion " << r.champion_id << " has no embedding; emitting zeros\n";
      ++warnings;
    }
    cursor += rank;
    if (r.version_index >= 0 && r.version_index < factors->T.rows()) {
      h.segment(cursor, rank) = factors->T.row(r.version_index).transpose();
    } else if (warnings < kMaxUnseenWarnings) {
      std::cerr << "warning: version " << r.version_index << " has no embedding; emitting zeros\n";
      ++warnings;
    }
    cursor += rank;
  }

  fill_one_hot(h, cursor, seasons, r.season, "season", &warnings);
  fill_one_hot(h, cursor, queue_types, r.queue_type, "queue type", &warnings);
  h[cursor + static_cast<int>(r.champion_type)] = 1.0;
  cursor += kNumChampionTypes;
  fill_one_hot(h, cursor, roles, r.role, "role", &warnings);
  fill_one_hot(h, cursor, lanes, r.lane, "lane", &warnings);
  fill_one_hot(h, cursor, map_ids, r.map_id, "map", &warnings);

  for (std::size_t f = 0; f < continuous_names.size(); ++f) {
    const double sd = continuous_sd[static_cast<Eigen::Index>(f)];
    if (sd > 0.0) {
      h[cursor] = (continuous_value(continuous_names[f], instance) -
                   continuous_mean[static_cast<Eigen::Index>(f)]) /
                  sd;
    }
    ++cursor;
  }
  if (cursor != dimension) throw std::logic_error("assemble: layout drifted from fitted dimension");
  return h;
}

Eigen::MatrixXd FeatureSpace::assemble_matrix(const std::vector<LabeledInstance>& instances,
                                              const KruskalFactors* factors) const {
  Eigen::MatrixXd X(dimension, static_cast<Eigen::Index>(instances.size()));
  for (std::size_t i = 0; i < instances.size(); ++i) {
    X.col(static_cast<Eigen::Index>(i)) = assemble(instances[i], factors);
  }
  return X;
}

double FeatureSpace::target_value(const LabeledInstance& instance) const {
  switch (options.target) {
    case Target::kWin: return instance.record.win ? 1.0 : 0.0;
    case Target::kEndOfSession: return instance.end_of_session ? 1.0 : 0.0;
    case Target::kKda: return instance.kda;
    case Target::kKills: return static_cast<double>(instance.record.kills);
    case Target::kDeaths: return static_cast<double>(instance.record.deaths);
    case Target::kAssists: return static_cast<double>(instance.record.assists);
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------

std::vector<int> Mlp::layer_sizes() const {
  std::vector<int> sizes;
  if (weights.empty()) return sizes;
  sizes.push_back(static_cast<int>(weights.front().cols()));
  for (const Eigen::MatrixXd& w : weights) sizes.push_back(static_cast<int>(w.rows()));
  return sizes;
}

std::vector<int> decoder_layer_plan(int input_dim) {
  return {input_dim, 256, 128, 64, 32, 16, 8, 4, 2, 1};
}

Mlp make_mlp(const std::vector<int>& layer_sizes, bool binary, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("make_mlp: need input and output sizes");
  if (layer_sizes.back() != 1) throw std::invalid_argument("make_mlp: output size must be 1");
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("make_mlp: layer sizes must be >= 1");
  }
  Mlp mlp;
  mlp.binary = binary;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l], out = layer_sizes[l + 1];
    Eigen::MatrixXd w(out, in);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = rng.normal(0.0, scale);
    }
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return mlp;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Numerically stable per-sample cross-entropy of a logit against y in {0,1}:
// log(1 + e^-|z|) + max(z, 0) - z y.
double bce_from_logit(double z, double y) {
  return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - z * y;
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> post;  // post[l]: activations entering layer l
  Eigen::MatrixXd z_out;              // final pre-activation, 1 x batch
};

// Forward pass keeping what backprop needs. `masks` (may be null) holds
// inverted-dropout masks for each hidden layer, already scaled by 1/(1-p).
void forward(const Mlp& mlp, const Eigen::MatrixXd& X,
             const std::vector<Eigen::MatrixXd>* masks, ForwardCache& cache) {
  const std::size_t L = mlp.weights.size();
  cache.post.resize(L);
  Eigen::MatrixXd a = X;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    cache.post[l] = a;
    Eigen::MatrixXd z = (mlp.weights[l] * a).colwise() + mlp.biases[l];
    a = z.unaryExpr([s = mlp.leaky_slope](double v) { return v > 0.0 ? v : s * v; });
    if (masks != nullptr) a.array() *= (*masks)[l].array();
  }
  cache.post[L - 1] = a;
  cache.z_out = (mlp.weights[L - 1] * a).colwise() + mlp.biases[L - 1];
}

double weight_penalty(const Mlp& mlp, double l2_beta) {
  double p = 0.0;
  for (const Eigen::MatrixXd& w : mlp.weights) p += w.squaredNorm();
  return l2_beta * p;
}

// Data loss + L2 penalty; fills grads if non-null. One implementation so
// the finite-difference oracle exercises exactly the training math.
double loss_and_grads_impl(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           double l2_beta, const std::vector<Eigen::MatrixXd>* masks,
                           MlpGradients* grads) {
  if (X.cols() != y.size()) throw std::invalid_argument("mlp: batch and target sizes differ");
  const std::size_t L = mlp.weights.size();
  const Eigen::Index B = X.cols();

  ForwardCache cache;
  forward(mlp, X, masks, cache);

  double data_loss = 0.0;
  Eigen::MatrixXd dz(1, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double z = cache.z_out(0, i);
    if (mlp.binary) {
      data_loss += bce_from_logit(z, y[i]);
      dz(0, i) = sigmoid(z) - y[i];
    } else {
      const double a = std::max(z, 0.0);
      const double d = a - y[i];
      data_loss += d * d;
      dz(0, i) = z > 0.0 ? 2.0 * d : 0.0;
    }
  }
  if (B > 0) {
    data_loss /= static_cast<double>(B);
    dz /= static_cast<double>(B);
  }
  const double total = data_loss + weight_penalty(mlp, l2_beta);
  if (grads == nullptr) return total;

  grads->d_weights.resize(L);
  grads->d_biases.resize(L);
  Eigen::MatrixXd delta = dz;  // d loss / d z of the current layer
  for (std::size_t l = L; l-- > 0;) {
    grads->d_weights[l] = delta * cache.post[l].transpose() + 2.0 * l2_beta * mlp.weights[l];
    grads->d_biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd da = mlp.weights[l].transpose() * delta;
    if (masks != nullptr) da.array() *= (*masks)[l - 1].array();
    // cache.post[l] is the post-dropout activation of hidden layer l-1; its
    // sign matches the pre-activation's except at exact zeros, so recover
    // the leaky slope from it.
    delta = da.array() *
            cache.post[l].unaryExpr([s = mlp.leaky_slope](double v) {
                     return v > 0.0 ? 1.0 : s;
                   }).array();
  }
  return total;
}

}  // namespace

Eigen::VectorXd mlp_predict(const Mlp& mlp, const Eigen::MatrixXd& X) {
  if (mlp.weights.empty()) throw std::invalid_argument("mlp_predict: uninitialized model");
  if (X.rows() != mlp.weights.front().cols()) {
    throw std::invalid_argument("mlp_predict: input has " + std::to_string(X.rows()) +
                                " rows, model expects " +
                                std::to_string(mlp.weights.front().cols()));
  }
  ForwardCache cache;
  forward(mlp, X, nullptr, cache);
  Eigen::VectorXd out(X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const double z = cache.z_out(0, i);
    out[i] = mlp.binary ? sigmoid(z) : std::max(z, 0.0);
  }
  return out;
}

double mlp_loss(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                double l2_beta) {
  return loss_and_grads_impl(mlp, X, y, l2_beta, nullptr, nullptr);
}

double mlp_loss_and_gradients(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double l2_beta, MlpGradients& grads) {
  return loss_and_grads_impl(mlp, X, y, l2_beta, nullptr, &grads);
}

double gradient_check(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      double l2_beta, double step) {
  MlpGradients grads;
  mlp_loss_and_gradients(mlp, X, y, l2_beta, grads);
  Mlp probe = mlp;
  double worst = 0.0;
  auto check = [&](double* p, double analytic) {
    const double saved = *p;
    *p = saved + step;
    const double hi = mlp_loss(probe, X, y, l2_beta);
    *p = saved - step;
    const double lo = mlp_loss(probe, X, y, l2_beta);
    *p = saved;
    const double numeric = (hi - lo) / (2.0 * step);
    const double err = std::abs(analytic - numeric) /
                       std::max(1e-6, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, err);
  };
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < probe.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < probe.weights[l].cols(); ++c) {
        check(&probe.weights[l](r, c), grads.d_weights[l](r, c));
      }
    }
    for (Eigen::Index r = 0; r < probe.biases[l].size(); ++r) {
      check(&probe.biases[l][r], grads.d_biases[l][r]);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long long t = 0;

  explicit AdamState(const Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
      mw.push_back(Eigen::MatrixXd::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
      vw.push_back(Eigen::MatrixXd::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
      mb.push_back(Eigen::VectorXd::Zero(mlp.biases[l].size()));
      vb.push_back(Eigen::VectorXd::Zero(mlp.biases[l].size()));
    }
  }

  void update(Mlp& mlp, const MlpGradients& g, double lr) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
      mw[l] = kBeta1 * mw[l] + (1.0 - kBeta1) * g.d_weights[l];
      vw[l] = (kBeta2 * vw[l].array() + (1.0 - kBeta2) * g.d_weights[l].array().square()).matrix();
      mlp.weights[l].array() -=
          lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + kEps);
      mb[l] = kBeta1 * mb[l] + (1.0 - kBeta1) * g.d_biases[l];
      vb[l] = (kBeta2 * vb[l].array() + (1.0 - kBeta2) * g.d_biases[l].array().square()).matrix();
      mlp.biases[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + kEps);
    }
  }
};

}  // namespace

DecoderModel train_decoder(const Dataset& dataset, const std::vector<LabeledInstance>& train,
                           const KruskalFactors* factors, const FeatureOptions& feature_options,
                           const TrainOptions& train_options) {
  if (train.empty()) throw std::invalid_argument("train_decoder: empty training set");
  if (train_options.batch_size < 1) throw std::invalid_argument("train_decoder: batch_size >= 1");
  if (!(train_options.dropout >= 0.0 && train_options.dropout < 1.0)) {
    throw std::invalid_argument("train_decoder: dropout must be in [0, 1)");
  }
  if (train_options.max_epochs < 1) throw std::invalid_argument("train_decoder: max_epochs >= 1");

  DecoderModel model;
  model.space = fit_feature_space(dataset, train, factors, feature_options);
  const bool binary = is_binary_target(feature_options.target);
  if (binary) {
    bool saw0 = false, saw1 = false;
    for (const LabeledInstance& inst : train) {
      (model.space.target_value(inst) > 0.5 ? saw1 : saw0) = true;
    }
    if (!saw0 || !saw1) {
      throw std::invalid_argument("train_decoder: binary training set has a single class");
    }
  }

  Rng rng(train_options.seed);
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::size_t n_val = 0;
  if (n >= 2 && train_options.validation_fraction > 0.0) {
    n_val = static_cast<std::size_t>(std::clamp<long long>(
        std::llround(train_options.validation_fraction * static_cast<double>(n)), 1,
        static_cast<long long>(n) - 1));
  }
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  const KruskalFactors* assembly_factors = feature_options.baseline ? nullptr : factors;
  Eigen::MatrixXd x_val(model.space.dimension, static_cast<Eigen::Index>(n_val));
  Eigen::VectorXd y_val(static_cast<Eigen::Index>(n_val));
  for (std::size_t i = 0; i < n_val; ++i) {
    x_val.col(static_cast<Eigen::Index>(i)) = model.space.assemble(train[val_idx[i]], assembly_factors);
    y_val[static_cast<Eigen::Index>(i)] = model.space.target_value(train[val_idx[i]]);
  }

  model.mlp = make_mlp(decoder_layer_plan(model.space.dimension), binary,
                       Rng::mix(train_options.seed, 1));
  AdamState adam(model.mlp);
  const std::size_t batch = static_cast<std::size_t>(train_options.batch_size);
  const std::size_t n_hidden = model.mlp.weights.size() - 1;

  Mlp best = model.mlp;
  double best_val = std::numeric_limits<double>::infinity();
  TrainLog& log = model.log;

  for (int epoch = 1; epoch <= train_options.max_epochs; ++epoch) {
    rng.shuffle(fit_idx);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < fit_idx.size(); start += batch) {
      const std::size_t stop = std::min(fit_idx.size(), start + batch);
      const Eigen::Index b = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd x(model.space.dimension, b);
      Eigen::VectorXd y(b);
      for (std::size_t i = start; i < stop; ++i) {
        x.col(static_cast<Eigen::Index>(i - start)) =
            model.space.assemble(train[fit_idx[i]], assembly_factors);
        y[static_cast<Eigen::Index>(i - start)] = model.space.target_value(train[fit_idx[i]]);
      }

      std::vector<Eigen::MatrixXd> masks;
      std::vector<Eigen::MatrixXd>* masks_ptr = nullptr;
      if (train_options.dropout > 0.0) {
        const double keep = 1.0 - train_options.dropout;
        masks.resize(n_hidden);
        const std::vector<int> sizes = model.mlp.layer_sizes();
        for (std::size_t l = 0; l < n_hidden; ++l) {
          masks[l].resize(sizes[l + 1], b);
          for (Eigen::Index r = 0; r < masks[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < b; ++c) {
              masks[l](r, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
            }
          }
        }
        masks_ptr = &masks;
      }

      MlpGradients grads;
      const double loss =
          loss_and_grads_impl(model.mlp, x, y, train_options.l2_beta, masks_ptr, &grads);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_decoder: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch offset " +
                                 std::to_string(start) + "; try a lower learning rate");
      }
      adam.update(model.mlp, grads, train_options.learning_rate);
      epoch_loss += loss * static_cast<double>(b);
    }
    epoch_loss /= static_cast<double>(fit_idx.size());
    log.train_loss_per_epoch.push_back(epoch_loss);

    const double val_loss = n_val > 0
                                ? mlp_loss(model.mlp, x_val, y_val, train_options.l2_beta)
                                : epoch_loss;
    log.validation_loss_per_epoch.push_back(val_loss);
    log.epochs_run = epoch;
    if (train_options.verbose) {
      std::cerr << "epoch " << epoch << " train " << epoch_loss << " val " << val_loss << "\n";
    }
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model.mlp;
      log.best_epoch = epoch;
    } else if (epoch - log.best_epoch >= train_options.patience) {
      break;
    }
  }
  model.mlp = best;
  log.best_validation_loss = best_val;
  log.final_train_loss = log.train_loss_per_epoch.back();
  if (!feature_options.baseline) model.factor_run_id = factors_run_id(*factors);
  return model;
}

std::vector<double> predict(const DecoderModel& model,
                            const std::vector<LabeledInstance>& instances,
                            const KruskalFactors* factors) {
  const bool baseline = model.space.options.baseline;
  if (!baseline) {
    if (factors == nullptr) throw std::invalid_argument("predict: model needs factor matrices");
    if (!model.factor_run_id.empty() && factors_run_id(*factors) != model.factor_run_id) {
      throw std::runtime_error(
          "predict: factor matrices do not match the run the model was trained against (id " +
          model.factor_run_id + ")");
    }
  }
  const Eigen::MatrixXd X = model.space.assemble_matrix(instances, baseline ? nullptr : factors);
  const Eigen::VectorXd out = mlp_predict(model.mlp, X);
  return std::vector<double>(out.data(), out.data() + out.size());
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != c) {
      throw std::runtime_error("model file: ragged matrix");
    }
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

std::vector<double> vector_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_eigen(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace

void save_model(const DecoderModel& model, const std::string& path) {
  nlohmann::json doc;
  doc["format"] = "ctxfactor-decoder-v1";
  doc["task"] = model.mlp.binary ? "binary" : "regression";
  doc["target"] = std::string(to_string(model.space.options.target));
  doc["factor_run_id"] = model.factor_run_id;
  doc["leaky_slope"] = model.mlp.leaky_slope;
  doc["layer_sizes"] = model.mlp.layer_sizes();
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t l = 0; l < model.mlp.weights.size(); ++l) {
    weights.push_back(matrix_json(model.mlp.weights[l]));
    biases.push_back(vector_std(model.mlp.biases[l]));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);

  nlohmann::json fs;
  fs["baseline"] = model.space.options.baseline;
  fs["exclude_performance"] = model.space.options.exclude_performance;
  fs["rank"] = model.space.rank;
  fs["n_users"] = model.space.n_users;
  fs["n_champions"] = model.space.n_champions;
  fs["users"] = model.space.users.values();
  fs["seasons"] = model.space.seasons.values();
  fs["queue_types"] = model.space.queue_types.values();
  fs["map_ids"] = model.space.map_ids.values();
  fs["roles"] = model.space.roles.values();
  fs["lanes"] = model.space.lanes.values();
  fs["excluded"] = std::vector<std::string>(model.space.excluded.begin(), model.space.excluded.end());
  fs["continuous_names"] = model.space.continuous_names;
  fs["continuous_mean"] = vector_std(model.space.continuous_mean);
  fs["continuous_sd"] = vector_std(model.space.continuous_sd);
  fs["dimension"] = model.space.dimension;
  doc["feature_space"] = std::move(fs);

  doc["log"] = {{"epochs_run", model.log.epochs_run},
                {"best_epoch", model.log.best_epoch},
                {"best_validation_loss", model.log.best_validation_loss},
                {"final_train_loss", model.log.final_train_loss},
                {"train_loss_per_epoch", model.log.train_loss_per_epoch},
                {"validation_loss_per_epoch", model.log.validation_loss_per_epoch}};
  doc["metadata"] = model.metadata;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << doc.dump(1) << "\n";
  if (!out) throw std::runtime_error("save_model: write to " + path + " failed");
}

DecoderModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_model: " + path + " is not valid JSON: " + e.what());
  }
  if (doc.value("format", "") != "ctxfactor-decoder-v1") {
    throw std::runtime_error("load_model: " + path + " has an unknown format tag");
  }

  DecoderModel model;
  model.mlp.binary = doc.at("task").get<std::string>() == "binary";
  model.mlp.leaky_slope = doc.at("leaky_slope").get<double>();
  for (const auto& w : doc.at("weights")) model.mlp.weights.push_back(matrix_from_json(w));
  for (const auto& b : doc.at("biases")) {
    model.mlp.biases.push_back(vector_eigen(b.get<std::vector<double>>()));
  }
  if (model.mlp.weights.size() != model.mlp.biases.size() || model.mlp.weights.empty()) {
    throw std::runtime_error("load_model: inconsistent layer counts");
  }
  model.factor_run_id = doc.value("factor_run_id", "");

  const nlohmann::json& fs = doc.at("feature_space");
  FeatureSpace& space = model.space;
  space.options.target = target_from_string(doc.at("target").get<std::string>());
  space.options.baseline = fs.at("baseline").get<bool>();
  space.options.exclude_performance = fs.at("exclude_performance").get<bool>();
  space.rank = fs.at("rank").get<int>();
  space.n_users = fs.at("n_users").get<int>();
  space.n_champions = fs.at("n_champions").get<int>();
  space.users = CategoricalDict::from_observed(fs.at("users").get<std::vector<std::string>>());
  space.seasons = CategoricalDict::from_observed(fs.at("seasons").get<std::vector<std::string>>());
  space.queue_types =
      CategoricalDict::from_observed(fs.at("queue_types").get<std::vector<std::string>>());
  space.map_ids = CategoricalDict::from_observed(fs.at("map_ids").get<std::vector<std::string>>());
  space.roles = CategoricalDict::from_observed(fs.at("roles").get<std::vector<std::string>>());
  space.lanes = CategoricalDict::from_observed(fs.at("lanes").get<std::vector<std::string>>());
  for (const auto& name : fs.at("excluded")) space.excluded.insert(name.get<std::string>());
  space.continuous_names = fs.at("continuous_names").get<std::vector<std::string>>();
  space.continuous_mean = vector_eigen(fs.at("continuous_mean").get<std::vector<double>>());
  space.continuous_sd = vector_eigen(fs.at("continuous_sd").get<std::vector<double>>());
  space.dimension = fs.at("dimension").get<int>();

  if (doc.contains("log")) {
    const nlohmann::json& log = doc.at("log");
    model.log.epochs_run = log.value("epochs_run", 0);
    model.log.best_epoch = log.value("best_epoch", 0);
    model.log.best_validation_loss = log.value("best_validation_loss", 0.0);
    model.log.final_train_loss = log.value("final_train_loss", 0.0);
    model.log.train_loss_per_epoch =
        log.value("train_loss_per_epoch", std::vector<double>{});
    model.log.validation_loss_per_epoch =
        log.value("validation_loss_per_epoch", std::vector<double>{});
  }
  if (doc.contains("metadata")) {
    model.metadata = doc.at("metadata").get<std::map<std::string, std::string>>();
  }
  if (static_cast<int>(model.mlp.weights.front().cols()) != space.dimension) {
    throw std::runtime_error("load_model: weight shape does not match the feature dimension");
  }
  return model;
}

}  // namespace ctxfactor
