#include "ctxfactor/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ctxfactor/csv.hpp"
#include "ctxfactor/rng.hpp"

namespace ctxfactor {

namespace {

struct NonFiniteLoss : std::runtime_error {
  NonFiniteLoss() : std::runtime_error("non-finite loss") {}
};

void check_dims(const KruskalFactors& f, const SparseMaskedTensor& t) {
  if (f.rank < 1 || f.U.cols() != f.rank || f.T.cols() != f.rank || f.F.cols() != f.rank) {
    throw std::invalid_argument("factor matrices disagree with the declared rank");
  }
  if (f.U.rows() != t.dim_i() || f.T.rows() != t.dim_j() || f.F.rows() != t.dim_k()) {
    throw std::invalid_argument("factor dimensions do not match the tensor");
  }
}

// Shared loss/gradient kernel. Walks observed slices in order; per slice
// computes the dense residual over k from the slice's nonzeros and the
// implicit observed zeros. Gradient outputs may be null.
double eval_masked(const Eigen::MatrixXd& U, const Eigen::MatrixXd& T, const Eigen::MatrixXd& F,
                   const SparseMaskedTensor& tensor, Eigen::MatrixXd* gU, Eigen::MatrixXd* gT,
                   Eigen::MatrixXd* gF) {
  const auto& slices = tensor.observed_slices();
  const int R = static_cast<int>(U.cols());
  Eigen::VectorXd z(R), gfr(R);
  Eigen::VectorXd resid(tensor.dim_k());
  if (gU) {
    gU->setZero(U.rows(), R);
    gT->setZero(T.rows(), R);
    gF->setZero(F.rows(), R);
  }
  double loss = 0.0;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    const auto [i, j] = slices[s];
    z = (U.row(i).array() * T.row(j).array()).matrix().transpose();
    resid.noalias() = F * z;
    for (const auto& e : tensor.slice_nonzeros(s)) resid[e.k] -= e.value;
    loss += 0.5 * resid.squaredNorm();
    if (gU) {
      gfr.noalias() = F.transpose() * resid;
      gU->row(i).array() += T.row(j).array() * gfr.transpose().array();
      gT->row(j).array() += U.row(i).array() * gfr.transpose().array();
      gF->noalias() += resid * z.transpose();
    }
  }
  return loss;
}

// Frobenius norm of the model restricted to the observed cells.
double model_norm_observed(const Eigen::MatrixXd& U, const Eigen::MatrixXd& T,
                           const Eigen::MatrixXd& F, const SparseMaskedTensor& tensor) {
  const auto& slices = tensor.observed_slices();
  const int R = static_cast<int>(U.cols());
  Eigen::VectorXd z(R), m(tensor.dim_k());
  double sum = 0.0;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    const auto [i, j] = slices[s];
    z = (U.row(i).array() * T.row(j).array()).matrix().transpose();
    m.noalias() = F * z;
    sum += m.squaredNorm();
  }
  return std::sqrt(sum);
}

struct SingleFit {
  Eigen::VectorXd x;  // concatenated [vec U | vec T | vec F]
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

class Problem {
 public:
  Problem(const SparseMaskedTensor& tensor, int rank)
      : tensor_(tensor), rank_(rank), nu_(tensor.dim_i() * rank), nt_(tensor.dim_j() * rank),
        nf_(tensor.dim_k() * rank) {}

  Eigen::Index size() const { return nu_ + nt_ + nf_; }

  Eigen::Map<const Eigen::MatrixXd> map_u(const Eigen::VectorXd& x) const {
    return {x.data(), tensor_.dim_i(), rank_};
  }
  Eigen::Map<const Eigen::MatrixXd> map_t(const Eigen::VectorXd& x) const {
    return {x.data() + nu_, tensor_.dim_j(), rank_};
  }
  Eigen::Map<const Eigen::MatrixXd> map_f(const Eigen::VectorXd& x) const {
    return {x.data() + nu_ + nt_, tensor_.dim_k(), rank_};
  }

  double value(const Eigen::VectorXd& x) const {
    // Materialized copies keep the kernel oblivious to the flat layout.
    Eigen::MatrixXd U = map_u(x), T = map_t(x), F = map_f(x);
    const double loss = eval_masked(U, T, F, tensor_, nullptr, nullptr, nullptr);
    if (!std::isfinite(loss)) throw NonFiniteLoss();
    return loss;
  }

  // An all-zero factor matrix has an all-zero gradient, so no step can ever
  // revive it: the iteration would be stuck on a saddle. The line search
  // refuses to move to such points.
  bool dead_mode(const Eigen::VectorXd& x) const {
    return x.head(nu_).isZero(0.0) || x.segment(nu_, nt_).isZero(0.0) ||
           x.tail(nf_).isZero(0.0);
  }

  double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    Eigen::MatrixXd U = map_u(x), T = map_t(x), F = map_f(x);
    Eigen::MatrixXd gU, gT, gF;
    const double loss = eval_masked(U, T, F, tensor_, &gU, &gT, &gF);
    grad.resize(size());
    std::memcpy(grad.data(), gU.data(), sizeof(double) * static_cast<std::size_t>(nu_));
    std::memcpy(grad.data() + nu_, gT.data(), sizeof(double) * static_cast<std::size_t>(nt_));
    std::memcpy(grad.data() + nu_ + nt_, gF.data(), sizeof(double) * static_cast<std::size_t>(nf_));
    if (!std::isfinite(loss) || !grad.allFinite()) throw NonFiniteLoss();
    return loss;
  }

  // Random non-negative init, scaled so the initial model norm over the
  // observed cells matches the data norm.
  Eigen::VectorXd initial_point(std::uint64_t seed) const {
    Rng rng(seed);
    Eigen::VectorXd x(size());
    for (Eigen::Index n = 0; n < x.size(); ++n) x[n] = rng.uniform01();
    const double data_norm = tensor_.norm_observed();
    Eigen::MatrixXd U = map_u(x), T = map_t(x), F = map_f(x);
    const double model_norm = model_norm_observed(U, T, F, tensor_);
    if (data_norm > 0.0 && model_norm > 0.0) {
      x *= std::cbrt(data_norm / model_norm);
    }
    return x;
  }

 private:
  const SparseMaskedTensor& tensor_;
  int rank_;
  Eigen::Index nu_, nt_, nf_;
};

constexpr double kArmijoC1 = 1e-4;
constexpr double kCurvatureEps = 1e-12;

// Zeroes components that sit on the bound with the gradient pushing outward.
Eigen::VectorXd reduced_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  Eigen::VectorXd r = g;
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    if (x[n] <= 0.0 && g[n] > 0.0) r[n] = 0.0;
  }
  return r;
}

// Backtracking line search along d with projection onto the non-negative
// orthant; Armijo condition on the projected step. Returns false when no
// acceptable step exists.
bool line_search(const Problem& problem, const Eigen::VectorXd& x, double fx,
                 const Eigen::VectorXd& g, const Eigen::VectorXd& d, Eigen::VectorXd& x_out,
                 double& f_out) {
  double alpha = 1.0;
  for (int back = 0; back < 60; ++back) {
    Eigen::VectorXd x_new = (x + alpha * d).cwiseMax(0.0);
    const double gtp = g.dot(x_new - x);
    if ((x_new - x).squaredNorm() > 0.0 && !problem.dead_mode(x_new)) {
      const double f_new = problem.value(x_new);
      if (f_new <= fx + kArmijoC1 * std::min(gtp, 0.0)) {
        x_out = std::move(x_new);
        f_out = f_new;
        return true;
      }
    }
    alpha *= 0.5;
  }
  return false;
}

SingleFit run_single_fit(const Problem& problem, const FitOptions& options, std::uint64_t seed) {
  SingleFit fit;
  fit.x = problem.initial_point(seed);
  Eigen::VectorXd g;
  double f = problem.value_and_gradient(fit.x, g);

  const bool use_lbfgs = options.optimizer == Optimizer::kQuasiNewtonBounded;
  const std::size_t memory = static_cast<std::size_t>(std::max(1, options.lbfgs_memory));
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history;  // (s, y)

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd gr = reduced_gradient(fit.x, g);
    if (gr.norm() == 0.0) {
      fit.converged = true;
      break;
    }

    Eigen::VectorXd d;
    if (use_lbfgs && !history.empty()) {
      // Two-loop recursion on the reduced gradient.
      Eigen::VectorXd q = gr;
      std::vector<double> alpha(history.size());
      std::vector<double> rho(history.size());
      for (std::size_t h = history.size(); h-- > 0;) {
        const auto& [s, y] = history[h];
        rho[h] = 1.0 / s.dot(y);
        alpha[h] = rho[h] * s.dot(q);
        q -= alpha[h] * y;
      }
      const auto& [s_last, y_last] = history.back();
      q *= s_last.dot(y_last) / y_last.dot(y_last);
      for (std::size_t h = 0; h < history.size(); ++h) {
        const auto& [s, y] = history[h];
        const double beta = rho[h] * y.dot(q);
        q += (alpha[h] - beta) * s;
      }
      d = -q;
      if (d.dot(gr) > -1e-14 * d.norm() * gr.norm()) {
        history.clear();
        d = -gr;
      }
    } else {
      d = -gr;
    }

    Eigen::VectorXd x_new;
    double f_new = 0.0;
    bool ok = line_search(problem, fit.x, f, g, d, x_new, f_new);
    if (!ok && use_lbfgs && !history.empty()) {
      // Fall back to a plain projected-gradient step.
      history.clear();
      ok = line_search(problem, fit.x, f, g, -gr, x_new, f_new);
    }
    if (!ok) {
      fit.converged = true;
      break;
    }

    Eigen::VectorXd g_new;
    const double f_check = problem.value_and_gradient(x_new, g_new);
    f_new = f_check;

    if (use_lbfgs) {
      Eigen::VectorXd s = x_new - fit.x;
      Eigen::VectorXd y = g_new - g;
      const double sy = s.dot(y);
      if (sy > kCurvatureEps * s.norm() * y.norm()) {
        history.emplace_back(std::move(s), std::move(y));
        if (history.size() > memory) history.pop_front();
      }
    }

    const double rel_change = (f - f_new) / std::max(std::abs(f), 1e-30);
    fit.x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    fit.iterations = iter + 1;
    if (rel_change < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.loss = f;
  return fit;
}

}  // namespace

double reconstruct(const KruskalFactors& factors, int i, int j, int k) {
  if (i < 0 || i >= factors.U.rows() || j < 0 || j >= factors.T.rows() || k < 0 ||
      k >= factors.F.rows()) {
    throw std::out_of_range("reconstruct: index out of range");
  }
  return (factors.U.row(i).array() * factors.T.row(j).array() * factors.F.row(k).array()).sum();
}

double masked_loss(const KruskalFactors& factors, const SparseMaskedTensor& tensor) {
  check_dims(factors, tensor);
  return eval_masked(factors.U, factors.T, factors.F, tensor, nullptr, nullptr, nullptr);
}

Gradient masked_gradient(const KruskalFactors& factors, const SparseMaskedTensor& tensor) {
  check_dims(factors, tensor);
  Gradient g;
  eval_masked(factors.U, factors.T, factors.F, tensor, &g.U, &g.T, &g.F);
  return g;
}

KruskalFactors factorize(const SparseMaskedTensor& tensor, const FitOptions& options,
                         FitReport* report) {
  if (tensor.observed_slices().empty()) {
    throw std::invalid_argument("factorize: tensor has no observed slices");
  }
  if (options.rank < 1) throw std::invalid_argument("factorize: rank must be >= 1");
  if (options.tolerance <= 0.0) throw std::invalid_argument("factorize: tolerance must be > 0");
  if (options.restarts < 1) throw std::invalid_argument("factorize: restarts must be >= 1");
  const int min_dim = std::min({tensor.dim_i(), tensor.dim_j(), tensor.dim_k()});
  if (options.rank > min_dim) {
    std::cerr << "factorize: rank " << options.rank << " exceeds min tensor dimension " << min_dim
              << "\n";
  }

  Problem problem(tensor, options.rank);
  std::optional<SingleFit> best;
  int best_restart = -1;
  int successes = 0;
  constexpr int kAttemptsPerRestart = 3;
  for (int r = 0; r < options.restarts; ++r) {
    for (int attempt = 0; attempt < kAttemptsPerRestart; ++attempt) {
      const std::uint64_t seed = Rng::mix(options.seed, static_cast<std::uint64_t>(r) * 16 + attempt);
      try {
        SingleFit fit = run_single_fit(problem, options, seed);
        ++successes;
        if (options.verbose) {
          std::cerr << "factorize: restart " << r << " loss " << fit.loss << " after "
                    << fit.iterations << " iterations\n";
        }
        if (!best || fit.loss < best->loss) {
          best = std::move(fit);
          best_restart = r;
        }
        break;
      } catch (const NonFiniteLoss&) {
        if (options.verbose) {
          std::cerr << "factorize: restart " << r << " attempt " << attempt
                    << " hit a non-finite loss; reseeding\n";
        }
      }
    }
  }
  if (!best) throw std::runtime_error("factorize: every restart diverged to a non-finite loss");

  KruskalFactors factors;
  factors.rank = options.rank;
  factors.U = problem.map_u(best->x);
  factors.T = problem.map_t(best->x);
  factors.F = problem.map_f(best->x);
  if (factors.U.isZero(0.0) || factors.T.isZero(0.0) || factors.F.isZero(0.0)) {
    throw std::runtime_error("factorize: fit collapsed to an all-zero factor matrix");
  }
  if (report) {
    report->final_loss = best->loss;
    report->iterations = best->iterations;
    report->converged = best->converged;
    report->restarts_used = successes;
    report->best_restart = best_restart;
  }
  return factors;
}

RankSelection select_rank(const SparseMaskedTensor& tensor, const std::vector<int>& candidates,
                          const FitOptions& base_options,
                          const std::function<double(const KruskalFactors&)>& evaluator,
                          double rel_tolerance) {
  if (candidates.empty()) throw std::invalid_argument("select_rank: no candidate ranks");
  RankSelection selection;
  for (int rank : candidates) {
    RankScore score;
    score.rank = rank;
    try {
      FitOptions options = base_options;
      options.rank = rank;
      const KruskalFactors factors = factorize(tensor, options);
      score.score = evaluator(factors);
      if (!std::isfinite(score.score)) throw std::runtime_error("evaluator returned a non-finite score");
      score.ok = true;
    } catch (const std::exception& e) {
      score.note = e.what();
      std::cerr << "select_rank: skipping rank " << rank << ": " << e.what() << "\n";
    }
    selection.scores.push_back(std::move(score));
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : selection.scores) {
    if (s.ok) best = std::min(best, s.score);
  }
  if (!std::isfinite(best)) throw std::runtime_error("select_rank: every candidate rank failed");
  const double threshold = best + rel_tolerance * std::abs(best);
  int chosen = 0;
  bool found = false;
  for (const auto& s : selection.scores) {
    if (s.ok && s.score <= threshold && (!found || s.rank < chosen)) {
      chosen = s.rank;
      found = true;
    }
  }
  selection.chosen_rank = chosen;
  return selection;
}

std::pair<SparseMaskedTensor, SparseMaskedTensor> split_slices_holdout(
    const SparseMaskedTensor& tensor, double holdout_fraction, std::uint64_t seed) {
  const auto& slices = tensor.observed_slices();
  if (slices.size() < 2) {
    throw std::invalid_argument("split_slices_holdout: need at least two observed slices");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("split_slices_holdout: fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(slices.size());
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t n_holdout = static_cast<std::size_t>(
      std::llround(holdout_fraction * static_cast<double>(slices.size())));
  n_holdout = std::max<std::size_t>(std::size_t{1}, std::min(n_holdout, slices.size() - 1));
  std::vector<char> held(slices.size(), 0);
  for (std::size_t s = 0; s < n_holdout; ++s) held[order[s]] = 1;

  std::vector<std::pair<int, int>> fit_slices, holdout_slices;
  std::vector<TensorEntry> fit_entries, holdout_entries;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    auto nonzeros = tensor.slice_nonzeros(s);
    if (held[s]) {
      holdout_slices.push_back(slices[s]);
      holdout_entries.insert(holdout_entries.end(), nonzeros.begin(), nonzeros.end());
    } else {
      fit_slices.push_back(slices[s]);
      fit_entries.insert(fit_entries.end(), nonzeros.begin(), nonzeros.end());
    }
  }
  SparseMaskedTensor fit(tensor.dim_i(), tensor.dim_j(), tensor.dim_k(), std::move(fit_entries),
                         std::move(fit_slices));
  SparseMaskedTensor holdout(tensor.dim_i(), tensor.dim_j(), tensor.dim_k(),
                             std::move(holdout_entries), std::move(holdout_slices));
  return {std::move(fit), std::move(holdout)};
}

double relative_error_on(const SparseMaskedTensor& tensor, const KruskalFactors& factors) {
  const double data_norm = tensor.norm_observed();
  if (data_norm == 0.0) throw std::invalid_argument("relative_error_on: zero data norm");
  return std::sqrt(2.0 * masked_loss(factors, tensor)) / data_norm;
}

std::string factors_run_id(const KruskalFactors& factors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t b = 0; b < n; ++b) {
      h ^= bytes[b];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t dims[4] = {factors.U.rows(), factors.T.rows(), factors.F.rows(), factors.rank};
  mix(dims, sizeof(dims));
  for (const auto* m : {&factors.U, &factors.T, &factors.F}) {
    mix(m->data(), sizeof(double) * static_cast<std::size_t>(m->size()));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void write_factor_csv(const Eigen::MatrixXd& m, const std::string& path,
                      const std::function<std::string(int)>& id_of) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "id";
  for (int c = 0; c < m.cols(); ++c) out << ",c" << c;
  out << '\n';
  for (int r = 0; r < m.rows(); ++r) {
    out << id_of(r);
    for (int c = 0; c < m.cols(); ++c) out << ',' << format_double(m(r, c));
    out << '\n';
  }
}

Eigen::MatrixXd read_factor_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  const std::size_t cols = split_csv_line(line).size();
  if (cols < 2) throw std::runtime_error(path + ": expected id plus at least one component column");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != cols) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": bad field count");
    }
    std::vector<double> row(cols - 1);
    for (std::size_t c = 1; c < cols; ++c) {
      row[c - 1] = parse_double(fields[c], path + ": line " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(rows.size(), cols - 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace

void save_factors(const KruskalFactors& factors, const std::string& dir, const FitMeta& meta,
                  const std::vector<std::string>& user_labels) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (!user_labels.empty() && static_cast<Eigen::Index>(user_labels.size()) != factors.U.rows()) {
    throw std::invalid_argument("save_factors: user label count does not match U");
  }
  write_factor_csv(factors.U, (fs::path(dir) / "U.csv").string(), [&](int r) {
    return user_labels.empty() ? std::to_string(r) : user_labels[static_cast<std::size_t>(r)];
  });
  write_factor_csv(factors.T, (fs::path(dir) / "T.csv").string(),
                   [](int r) { return std::to_string(r); });
  write_factor_csv(factors.F, (fs::path(dir) / "F.csv").string(),
                   [](int r) { return std::to_string(r); });
  nlohmann::json j{
      {"rank", factors.rank},
      {"seed", meta.seed},
      {"final_loss", meta.final_loss},
      {"iterations", meta.iterations},
      {"converged", meta.converged},
      {"run_id", factors_run_id(factors)},
  };
  std::ofstream out(fs::path(dir) / "metadata.json");
  if (!out) throw std::runtime_error("cannot write factor metadata in " + dir);
  out << j.dump(2) << '\n';
}

KruskalFactors load_factors(const std::string& dir, FitMeta* meta) {
  namespace fs = std::filesystem;
  KruskalFactors factors;
  factors.U = read_factor_csv((fs::path(dir) / "U.csv").string());
  factors.T = read_factor_csv((fs::path(dir) / "T.csv").string());
  factors.F = read_factor_csv((fs::path(dir) / "F.csv").string());
  factors.rank = static_cast<int>(factors.U.cols());
  if (factors.T.cols() != factors.rank || factors.F.cols() != factors.rank) {
    throw std::runtime_error("load_factors: factor files disagree on rank");
  }
  if (meta) {
    std::ifstream in(fs::path(dir) / "metadata.json");
    if (!in) throw std::runtime_error("load_factors: missing metadata.json in " + dir);
    nlohmann::json j = nlohmann::json::parse(in);
    meta->seed = j.value("seed", std::uint64_t{0});
    meta->final_loss = j.value("final_loss", 0.0);
    meta->iterations = j.value("iterations", 0);
    meta->converged = j.value("converged", false);
  }
  return factors;
}

}  // namespace ctxfactor
