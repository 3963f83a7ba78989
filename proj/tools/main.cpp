// Command-line front end: synth / ingest / factorize / train / evaluate /
// analyze. Every run that produces files also writes run_config.json with
// the effective parameter values, and a failing run removes whatever it had
// already written.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ctxfactor/behavior.hpp"
#include "ctxfactor/csv.hpp"
#include "ctxfactor/data_model.hpp"
#include "ctxfactor/decoder.hpp"
#include "ctxfactor/factorization.hpp"
#include "ctxfactor/metrics.hpp"
#include "ctxfactor/rng.hpp"
#include "ctxfactor/synth.hpp"
#include "ctxfactor/tensor.hpp"

#ifndef CTXFACTOR_VERSION
#define CTXFACTOR_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctxfactor;

namespace {

// Tracks the files a command writes so a failure can take them back out.
class Outputs {
 public:
  explicit Outputs(const std::string& dir) : dir_(dir) { fs::create_directories(dir_); }

  fs::path file(const std::string& name) {
    fs::path p = dir_ / name;
    written_.push_back(p);
    return p;
  }

  void discard() {
    for (const fs::path& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw std::runtime_error("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) throw std::runtime_error("config file " + path + " must hold an object");
  return cfg;
}

// Config-file values fill in options the user did not pass; explicit flags
// always win. Keys are the long option names without the leading dashes.
template <typename T>
void merge(CLI::App* cmd, const json& cfg, const std::string& flag, T& value) {
  if (cmd->get_option("--" + flag)->count() > 0) return;
  if (!cfg.contains(flag)) return;
  try {
    value = cfg.at(flag).get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error("config key \"" + flag + "\" has the wrong type");
  }
}

template <typename T>
void config_only(const json& cfg, const std::string& key, T& value) {
  if (!cfg.contains(key)) return;
  try {
    value = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error("config key \"" + key + "\" has the wrong type");
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

void write_run_config(Outputs& outputs, const std::string& command, json args) {
  json doc;
  doc["tool"] = "ctxfactor";
  doc["tool_version"] = CTXFACTOR_VERSION;
  doc["command"] = command;
  doc["effective_config"] = std::move(args);
  write_json(outputs.file("run_config.json"), doc);
}

Dataset load_corpus(const std::string& path, int min_matches) {
  Dataset ds = ingest_file(path);
  if (min_matches > 1) {
    return dataset_from_records(filter_min_matches(ds.records, min_matches));
  }
  return ds;
}

std::string csv_cell(double v) { return std::isnan(v) ? "" : format_double(v); }

std::ofstream open_csv(const fs::path& path, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << header << "\n";
  return out;
}

void require_matching_dims(const Dataset& ds, const KruskalFactors& factors,
                           const std::string& factors_dir) {
  if (factors.U.rows() != ds.users.size() || factors.T.rows() != ds.n_versions ||
      factors.F.rows() != ds.n_champions) {
    throw std::runtime_error(
        "factors in " + factors_dir + " were fitted on a corpus with " +
        std::to_string(factors.U.rows()) + " users / " + std::to_string(factors.T.rows()) +
        " versions / " + std::to_string(factors.F.rows()) + " champions, but this corpus has " +
        std::to_string(ds.users.size()) + " / " + std::to_string(ds.n_versions) + " / " +
        std::to_string(ds.n_champions) +
        " (check --input and --min-matches match the factorize run)");
  }
}

std::pair<int, int> parse_sweep(const std::string& sweep) {
  const auto pos = sweep.find("..");
  if (pos == std::string::npos) {
    throw std::runtime_error("--rank-sweep expects LO..HI, e.g. 1..10");
  }
  const int lo = std::stoi(sweep.substr(0, pos));
  const int hi = std::stoi(sweep.substr(pos + 2));
  if (lo < 1 || hi < lo) throw std::runtime_error("--rank-sweep range is empty or negative");
  return {lo, hi};
}

int required_metadata_int(const DecoderModel& model, const std::string& key) {
  const auto it = model.metadata.find(key);
  if (it == model.metadata.end()) {
    throw std::runtime_error("model file lacks \"" + key + "\" metadata; retrain with this tool");
  }
  return std::stoi(it->second);
}

double required_metadata_double(const DecoderModel& model, const std::string& key) {
  const auto it = model.metadata.find(key);
  if (it == model.metadata.end()) {
    throw std::runtime_error("model file lacks \"" + key + "\" metadata; retrain with this tool");
  }
  return std::stod(it->second);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string output_dir, config;
  std::uint64_t seed = 0;
  GeneratorConfig gen;
};

void run_synth(CLI::App* cmd, SynthArgs& a) {
  const json cfg = load_config(a.config);
  merge(cmd, cfg, "seed", a.seed);
  merge(cmd, cfg, "users", a.gen.n_users);
  merge(cmd, cfg, "versions", a.gen.n_versions);
  merge(cmd, cfg, "champions", a.gen.n_champions);
  merge(cmd, cfg, "rank", a.gen.rank);
  merge(cmd, cfg, "activity-prob", a.gen.activity_prob);
  merge(cmd, cfg, "slice-matches-min", a.gen.min_matches_per_active_slice);
  merge(cmd, cfg, "slice-matches-max", a.gen.max_matches_per_active_slice);
  merge(cmd, cfg, "min-matches-per-user", a.gen.min_matches_per_user);
  merge(cmd, cfg, "interaction-strength", a.gen.interaction_strength);
  merge(cmd, cfg, "skill-weight", a.gen.skill_weight);
  merge(cmd, cfg, "fraction-specialists", a.gen.fraction_specialists);
  merge(cmd, cfg, "fraction-generalists", a.gen.fraction_generalists);
  // The long tail of generator knobs is config-file only.
  config_only(cfg, "user-offcluster-weight", a.gen.user_offcluster_weight);
  config_only(cfg, "champion-offcluster-weight", a.gen.champion_offcluster_weight);
  config_only(cfg, "gamma-sharpen", a.gen.gamma_sharpen);
  config_only(cfg, "gamma-flatten", a.gen.gamma_flatten);
  config_only(cfg, "continue-gap-min", a.gen.continue_gap_min);
  config_only(cfg, "continue-gap-max", a.gen.continue_gap_max);
  config_only(cfg, "break-gap-min", a.gen.break_gap_min);
  config_only(cfg, "break-gap-max", a.gen.break_gap_max);
  config_only(cfg, "session-break-prob", a.gen.session_break_prob);
  config_only(cfg, "match-duration-min", a.gen.match_duration_min);
  config_only(cfg, "match-duration-max", a.gen.match_duration_max);
  config_only(cfg, "version-window-seconds", a.gen.version_window_seconds);
  config_only(cfg, "base-timestamp", a.gen.base_timestamp);
  config_only(cfg, "archetype-noise-sd", a.gen.archetype_noise_sd);
  config_only(cfg, "user-skill-spread", a.gen.user_skill_spread);
  if (cfg.contains("archetypes")) {
    const auto rows = cfg.at("archetypes").get<std::vector<std::vector<double>>>();
    a.gen.archetypes.clear();
    for (const auto& row : rows) {
      if (row.size() != 3) throw std::runtime_error("config archetypes rows must be [k, d, a]");
      a.gen.archetypes.push_back({row[0], row[1], row[2]});
    }
  }
  a.gen.seed = a.seed;

  Outputs outputs(a.output_dir);
  try {
    const SynthResult result = generate(a.gen);
    const Dataset ds = dataset_from_records(result.records);
    write_csv_file(ds, outputs.file("corpus.csv").string());
    save_ground_truth(result.truth, outputs.file("ground_truth.json").string());

    json eff;
    eff["seed"] = a.gen.seed;
    eff["users"] = a.gen.n_users;
    eff["versions"] = a.gen.n_versions;
    eff["champions"] = a.gen.n_champions;
    eff["rank"] = a.gen.rank;
    eff["activity-prob"] = a.gen.activity_prob;
    eff["slice-matches-min"] = a.gen.min_matches_per_active_slice;
    eff["slice-matches-max"] = a.gen.max_matches_per_active_slice;
    eff["min-matches-per-user"] = a.gen.min_matches_per_user;
    eff["interaction-strength"] = a.gen.interaction_strength;
    eff["skill-weight"] = a.gen.skill_weight;
    eff["fraction-specialists"] = a.gen.fraction_specialists;
    eff["fraction-generalists"] = a.gen.fraction_generalists;
    eff["user-offcluster-weight"] = a.gen.user_offcluster_weight;
    eff["champion-offcluster-weight"] = a.gen.champion_offcluster_weight;
    eff["gamma-sharpen"] = a.gen.gamma_sharpen;
    eff["gamma-flatten"] = a.gen.gamma_flatten;
    eff["continue-gap-min"] = a.gen.continue_gap_min;
    eff["continue-gap-max"] = a.gen.continue_gap_max;
    eff["break-gap-min"] = a.gen.break_gap_min;
    eff["break-gap-max"] = a.gen.break_gap_max;
    eff["session-break-prob"] = a.gen.session_break_prob;
    eff["match-duration-min"] = a.gen.match_duration_min;
    eff["match-duration-max"] = a.gen.match_duration_max;
    eff["version-window-seconds"] = a.gen.version_window_seconds;
    eff["base-timestamp"] = a.gen.base_timestamp;
    eff["archetype-noise-sd"] = a.gen.archetype_noise_sd;
    eff["user-skill-spread"] = a.gen.user_skill_spread;
    json arch = json::array();
    for (const auto& row : a.gen.archetypes) arch.push_back({row.kills, row.deaths, row.assists});
    eff["archetypes"] = std::move(arch);
    write_run_config(outputs, "synth", std::move(eff));

    std::cout << "wrote " << result.records.size() << " records for " << a.gen.n_users
              << " users to " << outputs.dir().string() << "\n";
  } catch (...) {
    outputs.discard();
    throw;
  }
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string input, output_dir;
};

void run_ingest(CLI::App*, IngestArgs& a) {
  const Dataset ds = ingest_file(a.input);
  const SparseMaskedTensor tensor = build_tensor(ds);

  json summary;
  summary["records"] = ds.records.size();
  summary["users"] = ds.users.size();
  summary["versions"] = ds.n_versions;
  summary["champions"] = ds.n_champions;
  summary["observed_slices"] = tensor.observed_slices().size();
  summary["tensor_density"] = density(tensor);
  summary["tensor_nonzeros"] = tensor.entries().size();
  std::int64_t lo = 0, hi = 0;
  if (!ds.records.empty()) {
    lo = hi = ds.records.front().timestamp;
    for (const MatchRecord& r : ds.records) {
      lo = std::min(lo, r.timestamp);
      hi = std::max(hi, r.timestamp);
    }
  }
  summary["first_timestamp"] = lo;
  summary["last_timestamp"] = hi;
  std::cout << summary.dump(2) << "\n";

  if (!a.output_dir.empty()) {
    Outputs outputs(a.output_dir);
    try {
      write_json(outputs.file("ingest_summary.json"), summary);
      write_run_config(outputs, "ingest", json{{"input", a.input}});
    } catch (...) {
      outputs.discard();
      throw;
    }
  }
}

// ---------------------------------------------------------------------------

struct FactorizeArgs {
  std::string input, output_dir, config, sweep, optimizer = "lbfgs";
  int rank = 6;
  int min_matches = 15;
  int restarts = 3;
  int max_iterations = 500;
  double tolerance = 1e-8;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
  bool verbose = false;
};

void run_factorize(CLI::App* cmd, FactorizeArgs& a) {
  const json cfg = load_config(a.config);
  merge(cmd, cfg, "rank", a.rank);
  merge(cmd, cfg, "rank-sweep", a.sweep);
  merge(cmd, cfg, "seed", a.seed);
  merge(cmd, cfg, "min-matches", a.min_matches);
  merge(cmd, cfg, "restarts", a.restarts);
  merge(cmd, cfg, "max-iterations", a.max_iterations);
  merge(cmd, cfg, "tolerance", a.tolerance);
  merge(cmd, cfg, "holdout-fraction", a.holdout_fraction);
  merge(cmd, cfg, "optimizer", a.optimizer);

  FitOptions options;
  options.rank = a.rank;
  options.max_iterations = a.max_iterations;
  options.tolerance = a.tolerance;
  options.restarts = a.restarts;
  options.seed = a.seed;
  options.verbose = a.verbose;
  if (a.optimizer == "lbfgs") {
    options.optimizer = Optimizer::kQuasiNewtonBounded;
  } else if (a.optimizer == "pg") {
    options.optimizer = Optimizer::kProjectedGradient;
  } else {
    throw std::runtime_error("--optimizer must be lbfgs or pg");
  }

  Outputs outputs(a.output_dir);
  try {
    const Dataset ds = load_corpus(a.input, a.min_matches);
    const SparseMaskedTensor tensor = build_tensor(ds);

    RankSelection selection;
    if (!a.sweep.empty()) {
      const auto [lo, hi] = parse_sweep(a.sweep);
      std::vector<int> candidates;
      for (int r = lo; r <= hi; ++r) candidates.push_back(r);
      const auto [fit_part, holdout] =
          split_slices_holdout(tensor, a.holdout_fraction, Rng::mix(a.seed, 0x5eed));
      selection = select_rank(fit_part, candidates, options, [&](const KruskalFactors& f) {
        return relative_error_on(holdout, f);
      });
      options.rank = selection.chosen_rank;
      auto sweep_csv = open_csv(outputs.file("rank_sweep.csv"), "rank,holdout_error,ok,note");
      for (const RankScore& s : selection.scores) {
        sweep_csv << s.rank << "," << (s.ok ? format_double(s.score) : "") << ","
                  << (s.ok ? 1 : 0) << "," << s.note << "\n";
      }
      std::cout << "rank sweep chose R=" << selection.chosen_rank << "\n";
    }

    FitReport report;
    const KruskalFactors factors = factorize(tensor, options, &report);
    outputs.file("U.csv");
    outputs.file("T.csv");
    outputs.file("F.csv");
    outputs.file("metadata.json");
    FitMeta meta;
    meta.seed = a.seed;
    meta.final_loss = report.final_loss;
    meta.iterations = report.iterations;
    meta.converged = report.converged;
    save_factors(factors, outputs.dir().string(), meta, ds.users.values());

    json rep;
    rep["rank"] = factors.rank;
    rep["final_loss"] = report.final_loss;
    rep["iterations"] = report.iterations;
    rep["converged"] = report.converged;
    rep["restarts_used"] = report.restarts_used;
    rep["best_restart"] = report.best_restart;
    rep["observed_slices"] = tensor.observed_slices().size();
    rep["tensor_density"] = density(tensor);
    rep["relative_error_observed"] = relative_error_on(tensor, factors);
    rep["run_id"] = factors_run_id(factors);
    if (!a.sweep.empty()) {
      rep["chosen_rank"] = selection.chosen_rank;
      json scores = json::array();
      for (const RankScore& s : selection.scores) {
        scores.push_back({{"rank", s.rank},
                          {"holdout_error", s.ok ? json(s.score) : json()},
                          {"ok", s.ok},
                          {"note", s.note}});
      }
      rep["sweep"] = std::move(scores);
    }
    write_json(outputs.file("fit_report.json"), rep);

    json eff;
    eff["input"] = a.input;
    eff["rank"] = options.rank;
    eff["rank-sweep"] = a.sweep;
    eff["seed"] = a.seed;
    eff["min-matches"] = a.min_matches;
    eff["restarts"] = a.restarts;
    eff["max-iterations"] = a.max_iterations;
    eff["tolerance"] = a.tolerance;
    eff["holdout-fraction"] = a.holdout_fraction;
    eff["optimizer"] = a.optimizer;
    write_run_config(outputs, "factorize", std::move(eff));

    std::cout << "fitted rank " << factors.rank << ", final loss " << report.final_loss
              << (report.converged ? " (converged)" : " (hit iteration cap)") << ", factors in "
              << outputs.dir().string() << "\n";
  } catch (...) {
    outputs.discard();
    throw;
  }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string input, factors_dir, output_dir, config, target = "win";
  bool baseline = false;
  bool exclude_performance = false;
  double dropout = 0.1;
  double test_fraction = 0.2;
  double validation_fraction = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 2048;
  int max_epochs = 200;
  int patience = 10;
  int min_matches = 15;
  std::int64_t session_gap = kDefaultSessionGapSeconds;
  std::uint64_t seed = 0;
  bool verbose = false;
};

void run_train(CLI::App* cmd, TrainArgs& a) {
  const json cfg = load_config(a.config);
  merge(cmd, cfg, "target", a.target);
  merge(cmd, cfg, "baseline", a.baseline);
  merge(cmd, cfg, "exclude-performance", a.exclude_performance);
  merge(cmd, cfg, "dropout", a.dropout);
  merge(cmd, cfg, "test-fraction", a.test_fraction);
  merge(cmd, cfg, "validation-fraction", a.validation_fraction);
  merge(cmd, cfg, "learning-rate", a.learning_rate);
  merge(cmd, cfg, "batch-size", a.batch_size);
  merge(cmd, cfg, "max-epochs", a.max_epochs);
  merge(cmd, cfg, "patience", a.patience);
  merge(cmd, cfg, "min-matches", a.min_matches);
  merge(cmd, cfg, "session-gap", a.session_gap);
  merge(cmd, cfg, "seed", a.seed);
  if (!a.baseline && a.factors_dir.empty()) {
    throw std::runtime_error("--factors is required unless --baseline is set");
  }

  Outputs outputs(a.output_dir);
  try {
    const Dataset ds = load_corpus(a.input, a.min_matches);
    const std::vector<LabeledInstance> instances = label_all_users(ds, a.session_gap);
    SplitSpec spec;
    spec.test_fraction = a.test_fraction;
    spec.seed = a.seed;
    const SplitResult sp = split(instances, spec);

    KruskalFactors factors;
    if (!a.baseline) {
      factors = load_factors(a.factors_dir);
      require_matching_dims(ds, factors, a.factors_dir);
    }

    FeatureOptions fopts;
    fopts.target = target_from_string(a.target);
    fopts.baseline = a.baseline;
    fopts.exclude_performance = a.exclude_performance;
    TrainOptions topts;
    topts.learning_rate = a.learning_rate;
    topts.batch_size = a.batch_size;
    topts.dropout = a.dropout;
    topts.max_epochs = a.max_epochs;
    topts.patience = a.patience;
    topts.validation_fraction = a.validation_fraction;
    topts.seed = a.seed;
    topts.verbose = a.verbose;

    DecoderModel model =
        train_decoder(ds, sp.train, a.baseline ? nullptr : &factors, fopts, topts);
    model.metadata["split_seed"] = std::to_string(a.seed);
    model.metadata["test_fraction"] = format_double(a.test_fraction);
    model.metadata["session_gap"] = std::to_string(a.session_gap);
    model.metadata["min_matches"] = std::to_string(a.min_matches);
    save_model(model, outputs.file("model.json").string());

    auto log_csv = open_csv(outputs.file("training_log.csv"), "epoch,train_loss,validation_loss");
    for (std::size_t e = 0; e < model.log.train_loss_per_epoch.size(); ++e) {
      log_csv << (e + 1) << "," << format_double(model.log.train_loss_per_epoch[e]) << ","
              << format_double(model.log.validation_loss_per_epoch[e]) << "\n";
    }

    json eff;
    eff["input"] = a.input;
    eff["factors"] = a.factors_dir;
    eff["target"] = a.target;
    eff["baseline"] = a.baseline;
    eff["exclude-performance"] = a.exclude_performance;
    eff["dropout"] = a.dropout;
    eff["test-fraction"] = a.test_fraction;
    eff["validation-fraction"] = a.validation_fraction;
    eff["learning-rate"] = a.learning_rate;
    eff["batch-size"] = a.batch_size;
    eff["max-epochs"] = a.max_epochs;
    eff["patience"] = a.patience;
    eff["min-matches"] = a.min_matches;
    eff["session-gap"] = a.session_gap;
    eff["seed"] = a.seed;
    write_run_config(outputs, "train", std::move(eff));

    std::cout << "trained " << (a.baseline ? "one-hot baseline" : "embedding") << " decoder for "
              << a.target << ": " << model.log.epochs_run << " epochs, best validation loss "
              << model.log.best_validation_loss << " at epoch " << model.log.best_epoch
              << "; train instances " << sp.train.size() << ", test instances "
              << sp.test.size() << "\n";
  } catch (...) {
    outputs.discard();
    throw;
  }
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string input, model_path, baseline_model_path, factors_dir, output_dir;
};

json evaluate_one(const DecoderModel& model, const std::vector<LabeledInstance>& test,
                  const KruskalFactors* factors, double y_min, double y_max) {
  const std::vector<double> preds = predict(model, test, factors);
  EvalBatch batch;
  batch.predictions = preds;
  batch.truths.reserve(test.size());
  for (const LabeledInstance& inst : test) {
    batch.truths.push_back(model.space.target_value(inst));
  }
  batch.y_min = y_min;
  batch.y_max = y_max;

  json row;
  row["model"] = model.space.options.baseline ? "one_hot_baseline" : "embedding";
  row["n_test"] = test.size();
  if (model.mlp.binary) {
    row["auc"] = auc(batch);
  } else {
    row["rmse"] = rmse(batch);
    row["nrmse"] = nrmse(batch);
  }
  return row;
}

void run_evaluate(CLI::App*, EvaluateArgs& a) {
  const DecoderModel model = load_model(a.model_path);
  const int min_matches = required_metadata_int(model, "min_matches");
  const std::int64_t session_gap = required_metadata_int(model, "session_gap");
  const double test_fraction = required_metadata_double(model, "test_fraction");
  const std::uint64_t split_seed =
      static_cast<std::uint64_t>(std::stoull(model.metadata.at("split_seed")));

  const Dataset ds = load_corpus(a.input, min_matches);
  const std::vector<LabeledInstance> instances = label_all_users(ds, session_gap);
  SplitSpec spec;
  spec.test_fraction = test_fraction;
  spec.seed = split_seed;
  const SplitResult sp = split(instances, spec);

  // NRMSE normalizes by the target range over the full corpus, not the
  // test subset.
  double y_min = 0.0, y_max = 0.0;
  if (!instances.empty()) {
    y_min = y_max = model.space.target_value(instances.front());
    for (const LabeledInstance& inst : instances) {
      const double y = model.space.target_value(inst);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }

  KruskalFactors factors;
  bool have_factors = false;
  if (!a.factors_dir.empty()) {
    factors = load_factors(a.factors_dir);
    require_matching_dims(ds, factors, a.factors_dir);
    have_factors = true;
  }
  if (!model.space.options.baseline && !have_factors) {
    throw std::runtime_error("--factors is required to evaluate an embedding model");
  }

  json report;
  report["target"] = std::string(to_string(model.space.options.target));
  report["task"] = model.mlp.binary ? "binary" : "regression";
  report["n_train"] = sp.train.size();
  report["n_test"] = sp.test.size();
  json rows = json::array();
  rows.push_back(evaluate_one(model, sp.test,
                              model.space.options.baseline ? nullptr : &factors, y_min, y_max));

  if (!a.baseline_model_path.empty()) {
    const DecoderModel second = load_model(a.baseline_model_path);
    if (!second.space.options.baseline && !have_factors) {
      throw std::runtime_error("--factors is required to evaluate an embedding model");
    }
    if (second.space.options.target != model.space.options.target) {
      throw std::runtime_error("the two models were trained for different targets");
    }
    for (const char* key : {"split_seed", "test_fraction", "session_gap", "min_matches"}) {
      if (second.metadata.at(key) != model.metadata.at(key)) {
        throw std::runtime_error(std::string("the two models used different splits (") + key +
                                 " differs), so their scores are not comparable");
      }
    }
    rows.push_back(evaluate_one(second, sp.test,
                                second.space.options.baseline ? nullptr : &factors, y_min, y_max));
  }
  report["rows"] = std::move(rows);

  std::cout << report.dump(2) << "\n";
  if (!a.output_dir.empty()) {
    Outputs outputs(a.output_dir);
    try {
      write_json(outputs.file("eval_report.json"), report);
      write_run_config(outputs, "evaluate",
                       json{{"input", a.input},
                            {"model", a.model_path},
                            {"baseline-model", a.baseline_model_path},
                            {"factors", a.factors_dir}});
    } catch (...) {
      outputs.discard();
      throw;
    }
  }
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string input, factors_dir, output_dir, config;
  int min_matches = 15;
  double label_threshold = 0.4;
  double coverage = 0.95;
  bool squared_activation = false;
  int histogram_bins = 20;
};

void run_analyze(CLI::App* cmd, AnalyzeArgs& a) {
  const json cfg = load_config(a.config);
  merge(cmd, cfg, "min-matches", a.min_matches);
  merge(cmd, cfg, "label-threshold", a.label_threshold);
  merge(cmd, cfg, "coverage", a.coverage);
  merge(cmd, cfg, "squared-activation", a.squared_activation);
  merge(cmd, cfg, "histogram-bins", a.histogram_bins);
  if (a.histogram_bins < 1) throw std::runtime_error("--histogram-bins must be >= 1");

  Outputs outputs(a.output_dir);
  try {
    const Dataset ds = load_corpus(a.input, a.min_matches);
    const KruskalFactors factors = load_factors(a.factors_dir);
    require_matching_dims(ds, factors, a.factors_dir);

    std::vector<UserProfile> profiles = build_profiles(ds);
    if (profiles.size() >= 10) {
      classify_generalists_specialists(profiles);
    } else {
      std::cerr << "warning: fewer than 10 users; skipping generalist/specialist deciles\n";
    }
    assign_component_labels(profiles, factors.U, a.label_threshold);
    const std::vector<int> champion_labels = component_labels(factors.F, a.label_threshold);

    {
      std::string header = "user_id,n_matches,days_online,entropy,class,component_label";
      for (int t = 0; t < kNumChampionTypes; ++t) {
        header += ",p_" + std::string(to_string(static_cast<ChampionType>(t)));
      }
      auto out = open_csv(outputs.file("user_profiles.csv"), header);
      for (const UserProfile& p : profiles) {
        out << p.user_id << "," << p.n_matches << "," << p.days_online << ","
            << format_double(p.entropy) << "," << to_string(p.player_class) << ","
            << p.component_label;
        for (int t = 0; t < kNumChampionTypes; ++t) {
          out << "," << format_double(p.champion_type_distribution[t]);
        }
        out << "\n";
      }
    }

    {
      const double h_max = std::log(static_cast<double>(kNumChampionTypes));
      std::vector<int> counts(static_cast<std::size_t>(a.histogram_bins), 0);
      for (const UserProfile& p : profiles) {
        int bin = static_cast<int>(p.entropy / h_max * a.histogram_bins);
        bin = std::clamp(bin, 0, a.histogram_bins - 1);
        ++counts[static_cast<std::size_t>(bin)];
      }
      auto out = open_csv(outputs.file("entropy_histogram.csv"), "bin_low,bin_high,users");
      for (int b = 0; b < a.histogram_bins; ++b) {
        out << format_double(h_max * b / a.histogram_bins) << ","
            << format_double(h_max * (b + 1) / a.histogram_bins) << ","
            << counts[static_cast<std::size_t>(b)] << "\n";
      }
    }

    {
      std::vector<int> user_counts(static_cast<std::size_t>(factors.rank) + 1, 0);
      std::vector<int> champion_counts(static_cast<std::size_t>(factors.rank) + 1, 0);
      for (const UserProfile& p : profiles) {
        ++user_counts[static_cast<std::size_t>(p.component_label < 0 ? factors.rank
                                                                     : p.component_label)];
      }
      for (int l : champion_labels) {
        ++champion_counts[static_cast<std::size_t>(l < 0 ? factors.rank : l)];
      }
      auto out = open_csv(outputs.file("label_counts.csv"), "component,users,champions");
      for (int c = 0; c < factors.rank; ++c) {
        out << c << "," << user_counts[static_cast<std::size_t>(c)] << ","
            << champion_counts[static_cast<std::size_t>(c)] << "\n";
      }
      out << "unlabeled," << user_counts[static_cast<std::size_t>(factors.rank)] << ","
          << champion_counts[static_cast<std::size_t>(factors.rank)] << "\n";
    }

    {
      const ActivationTable table =
          champion_type_activation(factors.F, ds.champion_types, a.coverage, a.squared_activation);
      std::string header = "champion_type";
      for (int c = 0; c < factors.rank; ++c) header += ",c" + std::to_string(c);
      auto masked = open_csv(outputs.file("activation_masked.csv"), header);
      auto normalized = open_csv(outputs.file("activation_normalized.csv"), header);
      for (int t = 0; t < kNumChampionTypes; ++t) {
        masked << to_string(static_cast<ChampionType>(t));
        normalized << to_string(static_cast<ChampionType>(t));
        for (int c = 0; c < factors.rank; ++c) {
          masked << "," << format_double(table.masked(t, c));
          normalized << "," << format_double(table.normalized(t, c));
        }
        masked << "\n";
        normalized << "\n";
      }
    }

    const PickRateTable picks = pick_rates(ds);
    {
      auto out = open_csv(outputs.file("pick_rates.csv"), "version,champion,rate");
      for (std::size_t j = 0; j < picks.versions.size(); ++j) {
        for (int k = 0; k < ds.n_champions; ++k) {
          out << picks.versions[j] << "," << k << ","
              << format_double(picks.rates(k, static_cast<Eigen::Index>(j))) << "\n";
        }
      }
    }

    {
      const EngagementSummary eng = engagement_summary(ds, profiles);
      auto out = open_csv(outputs.file("engagement_by_version.csv"),
                          "component_label,version,matches_per_active_user");
      for (std::size_t l = 0; l < eng.labels.size(); ++l) {
        for (std::size_t v = 0; v < eng.versions.size(); ++v) {
          const double value =
              eng.matches_per_active_user(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(v));
          out << (eng.labels[l] < 0 ? std::string("unlabeled") : std::to_string(eng.labels[l]))
              << "," << eng.versions[v] << "," << csv_cell(value) << "\n";
        }
      }
      auto days = open_csv(outputs.file("days_online_by_label.csv"), "component_label,days_online");
      for (const auto& [label, values] : eng.days_online_by_label) {
        for (int d : values) {
          days << (label < 0 ? std::string("unlabeled") : std::to_string(label)) << "," << d
               << "\n";
        }
      }
    }

    {
      const PerformanceByType perf = performance_by_type(ds);
      auto out = open_csv(outputs.file("performance_by_type.csv"),
                          "champion_type,version,kills,deaths,assists,kda");
      for (int t = 0; t < kNumChampionTypes; ++t) {
        for (std::size_t v = 0; v < perf.versions.size(); ++v) {
          const Eigen::Index vi = static_cast<Eigen::Index>(v);
          out << to_string(static_cast<ChampionType>(t)) << "," << perf.versions[v] << ","
              << csv_cell(perf.kills(t, vi)) << "," << csv_cell(perf.deaths(t, vi)) << ","
              << csv_cell(perf.assists(t, vi)) << "," << csv_cell(perf.kda(t, vi)) << "\n";
        }
      }
    }

    {
      std::string header = "version";
      for (int c = 0; c < factors.rank; ++c) header += ",c" + std::to_string(c);
      for (int c = 0; c < factors.rank; ++c) header += ",ma3_c" + std::to_string(c);
      auto out = open_csv(outputs.file("temporal_activation.csv"), header);
      std::vector<std::vector<double>> smoothed;
      for (int c = 0; c < factors.rank; ++c) {
        std::vector<double> series;
        for (Eigen::Index j = 0; j < factors.T.rows(); ++j) series.push_back(factors.T(j, c));
        smoothed.push_back(moving_average(series, 3));
      }
      for (Eigen::Index j = 0; j < factors.T.rows(); ++j) {
        out << j;
        for (int c = 0; c < factors.rank; ++c) out << "," << format_double(factors.T(j, c));
        for (int c = 0; c < factors.rank; ++c) {
          out << "," << format_double(smoothed[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)]);
        }
        out << "\n";
      }
    }

    {
      const std::vector<double> corr =
          pickrate_activation_correlation(factors.T, picks, champion_labels);
      auto out = open_csv(outputs.file("pickrate_correlation.csv"),
                          "component,pearson_pickrate_vs_activation");
      for (int c = 0; c < factors.rank; ++c) {
        out << c << "," << csv_cell(corr[static_cast<std::size_t>(c)]) << "\n";
      }
    }

    json eff;
    eff["input"] = a.input;
    eff["factors"] = a.factors_dir;
    eff["min-matches"] = a.min_matches;
    eff["label-threshold"] = a.label_threshold;
    eff["coverage"] = a.coverage;
    eff["squared-activation"] = a.squared_activation;
    eff["histogram-bins"] = a.histogram_bins;
    write_run_config(outputs, "analyze", std::move(eff));

    std::cout << "wrote analysis tables for " << profiles.size() << " users to "
              << outputs.dir().string() << "\n";
  } catch (...) {
    outputs.discard();
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-factorization embeddings and decoders for match-log analytics"};
  app.set_version_flag("--version", std::string("ctxfactor ") + CTXFACTOR_VERSION);
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
  synth_cmd->add_option("--output-dir", synth_args.output_dir, "Directory for corpus files")
      ->required();
  synth_cmd->add_option("--config", synth_args.config, "JSON config file (flags override it)");
  synth_cmd->add_option("--seed", synth_args.seed, "Generator seed");
  synth_cmd->add_option("--users", synth_args.gen.n_users, "Number of users");
  synth_cmd->add_option("--versions", synth_args.gen.n_versions, "Number of game versions");
  synth_cmd->add_option("--champions", synth_args.gen.n_champions, "Number of champions");
  synth_cmd->add_option("--rank", synth_args.gen.rank, "Planted component count");
  synth_cmd->add_option("--activity-prob", synth_args.gen.activity_prob,
                        "Per-(user,version) activity probability");
  synth_cmd->add_option("--slice-matches-min", synth_args.gen.min_matches_per_active_slice,
                        "Min matches per active slice");
  synth_cmd->add_option("--slice-matches-max", synth_args.gen.max_matches_per_active_slice,
                        "Max matches per active slice");
  synth_cmd->add_option("--min-matches-per-user", synth_args.gen.min_matches_per_user,
                        "Top-up floor on matches per user");
  synth_cmd->add_option("--interaction-strength", synth_args.gen.interaction_strength,
                        "Weight of user-champion affinity in the win logit");
  synth_cmd->add_option("--skill-weight", synth_args.gen.skill_weight,
                        "Weight of user skill in the win logit");
  synth_cmd->add_option("--fraction-specialists", synth_args.gen.fraction_specialists,
                        "Planted specialist share");
  synth_cmd->add_option("--fraction-generalists", synth_args.gen.fraction_generalists,
                        "Planted generalist share");
  synth_cmd->callback([&] { run_synth(synth_cmd, synth_args); });

  IngestArgs ingest_args;
  CLI::App* ingest_cmd = app.add_subcommand("ingest", "Validate a corpus and print a summary");
  ingest_cmd->add_option("--input", ingest_args.input, "Corpus CSV")->required();
  ingest_cmd->add_option("--output-dir", ingest_args.output_dir,
                         "Also write the summary JSON here");
  ingest_cmd->callback([&] { run_ingest(ingest_cmd, ingest_args); });

  FactorizeArgs fact_args;
  CLI::App* fact_cmd = app.add_subcommand("factorize", "Fit non-negative CP factors to a corpus");
  fact_cmd->add_option("--input", fact_args.input, "Corpus CSV")->required();
  fact_cmd->add_option("--output-dir", fact_args.output_dir, "Directory for factor files")
      ->required();
  fact_cmd->add_option("--config", fact_args.config, "JSON config file (flags override it)");
  fact_cmd->add_option("--rank", fact_args.rank, "Component count");
  fact_cmd->add_option("--rank-sweep", fact_args.sweep,
                       "Candidate range LO..HI scored on held-out slices");
  fact_cmd->add_option("--seed", fact_args.seed, "Fit seed");
  fact_cmd->add_option("--min-matches", fact_args.min_matches,
                       "Drop users with fewer matches than this");
  fact_cmd->add_option("--restarts", fact_args.restarts, "Random restarts");
  fact_cmd->add_option("--max-iterations", fact_args.max_iterations, "Iteration cap per restart");
  fact_cmd->add_option("--tolerance", fact_args.tolerance, "Relative objective-change stop");
  fact_cmd->add_option("--holdout-fraction", fact_args.holdout_fraction,
                       "Held-out slice share for the rank sweep");
  fact_cmd->add_option("--optimizer", fact_args.optimizer, "lbfgs or pg");
  fact_cmd->add_flag("--verbose", fact_args.verbose, "Per-iteration progress");
  fact_cmd->callback([&] { run_factorize(fact_cmd, fact_args); });

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the MLP decoder on a corpus");
  train_cmd->add_option("--input", train_args.input, "Corpus CSV")->required();
  train_cmd->add_option("--factors", train_args.factors_dir,
                        "Factor directory from `factorize` (embedding mode)");
  train_cmd->add_option("--output-dir", train_args.output_dir, "Directory for the model")
      ->required();
  train_cmd->add_option("--config", train_args.config, "JSON config file (flags override it)");
  train_cmd->add_option("--target", train_args.target,
                        "win, end_of_session, kda, kills, deaths or assists");
  train_cmd->add_flag("--baseline", train_args.baseline,
                      "One-hot ids instead of embeddings (DNN baseline)");
  train_cmd->add_flag("--exclude-performance", train_args.exclude_performance,
                      "Drop kills/deaths/assists/kda from the features");
  train_cmd->add_option("--dropout", train_args.dropout, "Dropout rate after hidden layers");
  train_cmd->add_option("--test-fraction", train_args.test_fraction, "Per-user test share");
  train_cmd->add_option("--validation-fraction", train_args.validation_fraction,
                        "Early-stopping carve-out from the training split");
  train_cmd->add_option("--learning-rate", train_args.learning_rate, "Adam learning rate");
  train_cmd->add_option("--batch-size", train_args.batch_size, "Minibatch size");
  train_cmd->add_option("--max-epochs", train_args.max_epochs, "Epoch cap");
  train_cmd->add_option("--patience", train_args.patience, "Early-stopping patience (epochs)");
  train_cmd->add_option("--min-matches", train_args.min_matches,
                        "Drop users with fewer matches than this");
  train_cmd->add_option("--session-gap", train_args.session_gap,
                        "Session break threshold in seconds");
  train_cmd->add_option("--seed", train_args.seed, "Split/init/shuffle seed");
  train_cmd->add_flag("--verbose", train_args.verbose, "Per-epoch progress");
  train_cmd->callback([&] { run_train(train_cmd, train_args); });

  EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score a trained model on its test split");
  eval_cmd->add_option("--input", eval_args.input, "Corpus CSV")->required();
  eval_cmd->add_option("--model", eval_args.model_path, "Model file from `train`")->required();
  eval_cmd->add_option("--baseline-model", eval_args.baseline_model_path,
                       "Second model for a side-by-side report");
  eval_cmd->add_option("--factors", eval_args.factors_dir,
                       "Factor directory (required for embedding models)");
  eval_cmd->add_option("--output-dir", eval_args.output_dir, "Also write eval_report.json here");
  eval_cmd->callback([&] { run_evaluate(eval_cmd, eval_args); });

  AnalyzeArgs an_args;
  CLI::App* an_cmd = app.add_subcommand("analyze", "Behavioral analysis tables from factors");
  an_cmd->add_option("--input", an_args.input, "Corpus CSV")->required();
  an_cmd->add_option("--factors", an_args.factors_dir, "Factor directory from `factorize`")
      ->required();
  an_cmd->add_option("--output-dir", an_args.output_dir, "Directory for the CSV tables")
      ->required();
  an_cmd->add_option("--config", an_args.config, "JSON config file (flags override it)");
  an_cmd->add_option("--min-matches", an_args.min_matches,
                     "Drop users with fewer matches than this");
  an_cmd->add_option("--label-threshold", an_args.label_threshold,
                     "Dominant-share cut for component labels");
  an_cmd->add_option("--coverage", an_args.coverage, "Cumulative mass kept per activation row");
  an_cmd->add_flag("--squared-activation", an_args.squared_activation,
                   "Rank activation rows by squared entries");
  an_cmd->add_option("--histogram-bins", an_args.histogram_bins, "Entropy histogram bins");
  an_cmd->callback([&] { run_analyze(an_cmd, an_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
