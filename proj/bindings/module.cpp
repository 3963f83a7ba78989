// Python bindings for the core operations: corpus handling, tensor
// construction, factorization, decoder training and the headline metrics.
// Matrices cross the boundary as numpy arrays via pybind11's Eigen casters.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctxfactor/behavior.hpp"
#include "ctxfactor/data_model.hpp"
#include "ctxfactor/decoder.hpp"
#include "ctxfactor/factorization.hpp"
#include "ctxfactor/metrics.hpp"
#include "ctxfactor/synth.hpp"
#include "ctxfactor/tensor.hpp"

namespace py = pybind11;
using namespace ctxfactor;

namespace {

EvalBatch make_batch(std::vector<double> predictions, std::vector<double> truths, double y_min,
                     double y_max) {
  EvalBatch batch;
  batch.predictions = std::move(predictions);
  batch.truths = std::move(truths);
  batch.y_min = y_min;
  batch.y_max = y_max;
  return batch;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Masked non-negative tensor factorization of match logs, with an MLP decoder";

  // ---- data model ---------------------------------------------------------
  py::class_<MatchRecord>(m, "MatchRecord")
      .def(py::init<>())
      .def_readwrite("user_id", &MatchRecord::user_id)
      .def_readwrite("match_id", &MatchRecord::match_id)
      .def_readwrite("timestamp", &MatchRecord::timestamp)
      .def_readwrite("duration", &MatchRecord::duration)
      .def_readwrite("version_index", &MatchRecord::version_index)
      .def_readwrite("season", &MatchRecord::season)
      .def_readwrite("queue_type", &MatchRecord::queue_type)
      .def_readwrite("map_id", &MatchRecord::map_id)
      .def_readwrite("champion_id", &MatchRecord::champion_id)
      .def_property(
          "champion_type",
          [](const MatchRecord& r) { return std::string(to_string(r.champion_type)); },
          [](MatchRecord& r, const std::string& s) {
            const auto t = champion_type_from_string(s);
            if (!t) throw py::value_error("unknown champion type: " + s);
            r.champion_type = *t;
          })
      .def_readwrite("role", &MatchRecord::role)
      .def_readwrite("lane", &MatchRecord::lane)
      .def_readwrite("kills", &MatchRecord::kills)
      .def_readwrite("deaths", &MatchRecord::deaths)
      .def_readwrite("assists", &MatchRecord::assists)
      .def_readwrite("gold_earned", &MatchRecord::gold_earned)
      .def_readwrite("gold_spent", &MatchRecord::gold_spent)
      .def_readwrite("champion_level", &MatchRecord::champion_level)
      .def_readwrite("win", &MatchRecord::win)
      .def("__repr__", [](const MatchRecord& r) {
        return "<MatchRecord user=" + r.user_id + " match=" + r.match_id + ">";
      });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_records",
                             [](const Dataset& d) { return d.records.size(); })
      .def_property_readonly("n_users", [](const Dataset& d) { return d.users.size(); })
      .def_readonly("n_versions", &Dataset::n_versions)
      .def_readonly("n_champions", &Dataset::n_champions)
      .def_readonly("champion_types", &Dataset::champion_types)
      .def_property_readonly("records", [](const Dataset& d) { return d.records; })
      .def_property_readonly("user_ids", [](const Dataset& d) { return d.users.values(); })
      .def("user_index", &Dataset::user_index)
      .def("__repr__", [](const Dataset& d) {
        return "<Dataset " + std::to_string(d.records.size()) + " records, " +
               std::to_string(d.users.size()) + " users, " + std::to_string(d.n_versions) +
               " versions, " + std::to_string(d.n_champions) + " champions>";
      });

  m.def("ingest_file", &ingest_file, py::arg("path"),
        "Parse and validate a corpus CSV file.");
  m.def("dataset_from_records", &dataset_from_records, py::arg("records"));
  m.def("write_csv_file", &write_csv_file, py::arg("dataset"), py::arg("path"));
  m.def("filter_min_matches", &filter_min_matches, py::arg("records"),
        py::arg("min_matches") = 15);
  m.def("compute_kda", &compute_kda, py::arg("kills"), py::arg("deaths"), py::arg("assists"));

  py::class_<LabeledInstance>(m, "LabeledInstance")
      .def_readonly("record", &LabeledInstance::record)
      .def_readonly("kda", &LabeledInstance::kda)
      .def_readonly("end_of_session", &LabeledInstance::end_of_session);

  m.def("label_all_users", &label_all_users, py::arg("dataset"),
        py::arg("gap_threshold_seconds") = kDefaultSessionGapSeconds,
        "Sessionize every user's timeline into labeled instances.");

  py::class_<SplitResult>(m, "SplitResult")
      .def_readonly("train", &SplitResult::train)
      .def_readonly("test", &SplitResult::test)
      .def_readonly("single_instance_users", &SplitResult::single_instance_users);

  m.def(
      "split",
      [](const std::vector<LabeledInstance>& instances, double test_fraction,
         std::uint64_t seed) {
        SplitSpec spec;
        spec.test_fraction = test_fraction;
        spec.seed = seed;
        return split(instances, spec);
      },
      py::arg("instances"), py::arg("test_fraction") = 0.2, py::arg("seed") = 0,
      "Deterministic per-user train/test partition.");

  // ---- tensor -------------------------------------------------------------
  py::class_<SparseMaskedTensor>(m, "SparseMaskedTensor")
      .def_property_readonly("dim_i", &SparseMaskedTensor::dim_i)
      .def_property_readonly("dim_j", &SparseMaskedTensor::dim_j)
      .def_property_readonly("dim_k", &SparseMaskedTensor::dim_k)
      .def_property_readonly("n_observed_slices",
                             [](const SparseMaskedTensor& t) { return t.observed_slices().size(); })
      .def_property_readonly("observed_slices", &SparseMaskedTensor::observed_slices)
      .def("is_observed", &SparseMaskedTensor::is_observed, py::arg("i"), py::arg("j"))
      .def("value_at", &SparseMaskedTensor::value_at, py::arg("i"), py::arg("j"), py::arg("k"))
      .def("norm_observed", &SparseMaskedTensor::norm_observed)
      .def("validate", &SparseMaskedTensor::validate);

  m.def("build_tensor", py::overload_cast<const Dataset&>(&build_tensor), py::arg("dataset"),
        "User x version x champion pick-proportion tensor with a slice mask.");
  m.def("density", &density, py::arg("tensor"), "Fraction of cells in observed slices.");

  // ---- factorization ------------------------------------------------------
  py::class_<KruskalFactors>(m, "KruskalFactors")
      .def(py::init([](Eigen::MatrixXd U, Eigen::MatrixXd T, Eigen::MatrixXd F) {
             KruskalFactors f;
             f.rank = static_cast<int>(U.cols());
             f.U = std::move(U);
             f.T = std::move(T);
             f.F = std::move(F);
             if (f.T.cols() != f.rank || f.F.cols() != f.rank) {
               throw py::value_error("U, T, F must share a column count");
             }
             return f;
           }),
           py::arg("U"), py::arg("T"), py::arg("F"))
      .def_readwrite("U", &KruskalFactors::U)
      .def_readwrite("T", &KruskalFactors::T)
      .def_readwrite("F", &KruskalFactors::F)
      .def_readonly("rank", &KruskalFactors::rank);

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("rank", &FitOptions::rank)
      .def_readwrite("max_iterations", &FitOptions::max_iterations)
      .def_readwrite("tolerance", &FitOptions::tolerance)
      .def_readwrite("restarts", &FitOptions::restarts)
      .def_readwrite("seed", &FitOptions::seed)
      .def_readwrite("lbfgs_memory", &FitOptions::lbfgs_memory)
      .def_readwrite("verbose", &FitOptions::verbose)
      .def_property(
          "optimizer",
          [](const FitOptions& o) {
            return o.optimizer == Optimizer::kProjectedGradient ? "pg" : "lbfgs";
          },
          [](FitOptions& o, const std::string& name) {
            if (name == "lbfgs") {
              o.optimizer = Optimizer::kQuasiNewtonBounded;
            } else if (name == "pg") {
              o.optimizer = Optimizer::kProjectedGradient;
            } else {
              throw py::value_error("optimizer must be 'lbfgs' or 'pg'");
            }
          });

  py::class_<FitReport>(m, "FitReport")
      .def_readonly("final_loss", &FitReport::final_loss)
      .def_readonly("iterations", &FitReport::iterations)
      .def_readonly("converged", &FitReport::converged)
      .def_readonly("restarts_used", &FitReport::restarts_used)
      .def_readonly("best_restart", &FitReport::best_restart);

  m.def(
      "factorize",
      [](const SparseMaskedTensor& tensor, const FitOptions& options) {
        FitReport report;
        KruskalFactors factors = factorize(tensor, options, &report);
        return py::make_tuple(std::move(factors), report);
      },
      py::arg("tensor"), py::arg("options") = FitOptions{},
      "Fit non-negative CP factors; returns (factors, report).");

  m.def("reconstruct", &reconstruct, py::arg("factors"), py::arg("i"), py::arg("j"),
        py::arg("k"), "Model value at one cell.");
  m.def("masked_loss", &masked_loss, py::arg("factors"), py::arg("tensor"),
        "Half squared error over observed cells.");
  m.def("relative_error_on", &relative_error_on, py::arg("tensor"), py::arg("factors"));
  m.def("factors_run_id", &factors_run_id, py::arg("factors"));
  m.def(
      "save_factors",
      [](const KruskalFactors& factors, const std::string& dir,
         const std::vector<std::string>& user_labels) {
        save_factors(factors, dir, FitMeta{}, user_labels);
      },
      py::arg("factors"), py::arg("dir"), py::arg("user_labels") = std::vector<std::string>{});
  m.def(
      "load_factors", [](const std::string& dir) { return load_factors(dir); }, py::arg("dir"));

  // ---- metrics ------------------------------------------------------------
  m.def(
      "auc",
      [](std::vector<double> predictions, std::vector<double> truths) {
        return auc(make_batch(std::move(predictions), std::move(truths), 0.0, 0.0));
      },
      py::arg("predictions"), py::arg("truths"),
      "Mann-Whitney AUC with ties credited half.");
  m.def(
      "rmse",
      [](std::vector<double> predictions, std::vector<double> truths) {
        return rmse(make_batch(std::move(predictions), std::move(truths), 0.0, 0.0));
      },
      py::arg("predictions"), py::arg("truths"));
  m.def(
      "nrmse",
      [](std::vector<double> predictions, std::vector<double> truths, double y_min, double y_max) {
        return nrmse(make_batch(std::move(predictions), std::move(truths), y_min, y_max));
      },
      py::arg("predictions"), py::arg("truths"), py::arg("y_min"), py::arg("y_max"),
      "RMSE scaled by the target range.");

  // ---- behavior -----------------------------------------------------------
  py::class_<UserProfile>(m, "UserProfile")
      .def_readonly("user_id", &UserProfile::user_id)
      .def_readonly("champion_type_distribution", &UserProfile::champion_type_distribution)
      .def_readonly("entropy", &UserProfile::entropy)
      .def_property_readonly(
          "player_class",
          [](const UserProfile& p) { return std::string(to_string(p.player_class)); })
      .def_readonly("component_label", &UserProfile::component_label)
      .def_readonly("days_online", &UserProfile::days_online)
      .def_readonly("n_matches", &UserProfile::n_matches);

  m.def("champion_entropy", &champion_entropy, py::arg("distribution"),
        "Shannon entropy (nats) of a probability vector.");
  m.def("build_profiles", &build_profiles, py::arg("dataset"));
  m.def(
      "classify_generalists_specialists",
      [](std::vector<UserProfile> profiles) {
        classify_generalists_specialists(profiles);
        return profiles;
      },
      py::arg("profiles"), "Returns profiles with decile-based classes filled in.");
  m.def("component_labels", &component_labels, py::arg("factor"), py::arg("threshold") = 0.4);
  m.def("champion_type_activation", &champion_type_activation, py::arg("F"),
        py::arg("champion_types"), py::arg("coverage") = 0.95,
        py::arg("squared_variant") = false,
        "Returns (normalized, masked) type x component tables.");

  py::class_<ActivationTable>(m, "ActivationTable")
      .def_readonly("normalized", &ActivationTable::normalized)
      .def_readonly("masked", &ActivationTable::masked);

  py::class_<PickRateTable>(m, "PickRateTable")
      .def_readonly("versions", &PickRateTable::versions)
      .def_readonly("rates", &PickRateTable::rates);
  m.def("pick_rates", &pick_rates, py::arg("dataset"));
  m.def("moving_average", &moving_average, py::arg("series"), py::arg("window") = 3);
  m.def("pearson", &pearson, py::arg("x"), py::arg("y"));

  // ---- synth --------------------------------------------------------------
  py::class_<GeneratorConfig>(m, "GeneratorConfig")
      .def(py::init<>())
      .def_readwrite("n_users", &GeneratorConfig::n_users)
      .def_readwrite("n_versions", &GeneratorConfig::n_versions)
      .def_readwrite("n_champions", &GeneratorConfig::n_champions)
      .def_readwrite("rank", &GeneratorConfig::rank)
      .def_readwrite("activity_prob", &GeneratorConfig::activity_prob)
      .def_readwrite("min_matches_per_active_slice", &GeneratorConfig::min_matches_per_active_slice)
      .def_readwrite("max_matches_per_active_slice", &GeneratorConfig::max_matches_per_active_slice)
      .def_readwrite("min_matches_per_user", &GeneratorConfig::min_matches_per_user)
      .def_readwrite("user_offcluster_weight", &GeneratorConfig::user_offcluster_weight)
      .def_readwrite("champion_offcluster_weight", &GeneratorConfig::champion_offcluster_weight)
      .def_readwrite("fraction_specialists", &GeneratorConfig::fraction_specialists)
      .def_readwrite("fraction_generalists", &GeneratorConfig::fraction_generalists)
      .def_readwrite("gamma_sharpen", &GeneratorConfig::gamma_sharpen)
      .def_readwrite("gamma_flatten", &GeneratorConfig::gamma_flatten)
      .def_readwrite("session_break_prob", &GeneratorConfig::session_break_prob)
      .def_readwrite("user_skill_spread", &GeneratorConfig::user_skill_spread)
      .def_readwrite("skill_weight", &GeneratorConfig::skill_weight)
      .def_readwrite("interaction_strength", &GeneratorConfig::interaction_strength)
      .def_readwrite("seed", &GeneratorConfig::seed);

  py::class_<GroundTruth>(m, "GroundTruth")
      .def_readonly("factors", &GroundTruth::factors)
      .def_readonly("affinity", &GroundTruth::affinity)
      .def_readonly("user_skill", &GroundTruth::user_skill)
      .def_readonly("user_gamma", &GroundTruth::user_gamma)
      .def_readonly("user_cluster", &GroundTruth::user_cluster)
      .def_readonly("champion_cluster", &GroundTruth::champion_cluster)
      .def_readonly("planted_specialists", &GroundTruth::planted_specialists)
      .def_readonly("planted_generalists", &GroundTruth::planted_generalists)
      .def_readonly("end_of_session", &GroundTruth::end_of_session);

  py::class_<SynthResult>(m, "SynthResult")
      .def_readonly("records", &SynthResult::records)
      .def_readonly("truth", &SynthResult::truth);

  m.def("generate", &generate, py::arg("config") = GeneratorConfig{},
        "Synthesize a low-rank corpus with ground truth.");
  m.def("slice_pick_distribution", &slice_pick_distribution, py::arg("truth"), py::arg("user"),
        py::arg("version"));
  m.def("save_ground_truth", &save_ground_truth, py::arg("truth"), py::arg("path"));

  // ---- decoder ------------------------------------------------------------
  py::class_<TrainLog>(m, "TrainLog")
      .def_readonly("epochs_run", &TrainLog::epochs_run)
      .def_readonly("best_epoch", &TrainLog::best_epoch)
      .def_readonly("best_validation_loss", &TrainLog::best_validation_loss)
      .def_readonly("final_train_loss", &TrainLog::final_train_loss)
      .def_readonly("train_loss_per_epoch", &TrainLog::train_loss_per_epoch)
      .def_readonly("validation_loss_per_epoch", &TrainLog::validation_loss_per_epoch);

  py::class_<DecoderModel>(m, "DecoderModel")
      .def_property_readonly(
          "target",
          [](const DecoderModel& mdl) { return std::string(to_string(mdl.space.options.target)); })
      .def_property_readonly(
          "baseline", [](const DecoderModel& mdl) { return mdl.space.options.baseline; })
      .def_property_readonly("binary", [](const DecoderModel& mdl) { return mdl.mlp.binary; })
      .def_property_readonly("dimension",
                             [](const DecoderModel& mdl) { return mdl.space.dimension; })
      .def_readonly("factor_run_id", &DecoderModel::factor_run_id)
      .def_readonly("log", &DecoderModel::log)
      .def_readonly("metadata", &DecoderModel::metadata);

  m.def(
      "train_decoder",
      [](const Dataset& dataset, const std::vector<LabeledInstance>& train,
         const KruskalFactors* factors, const std::string& target, bool baseline,
         bool exclude_performance, double learning_rate, int batch_size, double dropout,
         int max_epochs, int patience, double validation_fraction, std::uint64_t seed,
         bool verbose) {
        FeatureOptions fopts;
        fopts.target = target_from_string(target);
        fopts.baseline = baseline;
        fopts.exclude_performance = exclude_performance;
        TrainOptions topts;
        topts.learning_rate = learning_rate;
        topts.batch_size = batch_size;
        topts.dropout = dropout;
        topts.max_epochs = max_epochs;
        topts.patience = patience;
        topts.validation_fraction = validation_fraction;
        topts.seed = seed;
        topts.verbose = verbose;
        return train_decoder(dataset, train, factors, fopts, topts);
      },
      py::arg("dataset"), py::arg("train"), py::arg("factors") = nullptr,
      py::arg("target") = "win", py::arg("baseline") = false,
      py::arg("exclude_performance") = false, py::arg("learning_rate") = 1e-3,
      py::arg("batch_size") = 2048, py::arg("dropout") = 0.1, py::arg("max_epochs") = 200,
      py::arg("patience") = 10, py::arg("validation_fraction") = 0.1, py::arg("seed") = 0,
      py::arg("verbose") = false,
      "Train the MLP decoder; factors=None selects one-hot baseline features.");

  m.def(
      "predict",
      [](const DecoderModel& model, const std::vector<LabeledInstance>& instances,
         const KruskalFactors* factors) { return predict(model, instances, factors); },
      py::arg("model"), py::arg("instances"), py::arg("factors") = nullptr);
  m.def(
      "target_values",
      [](const DecoderModel& model, const std::vector<LabeledInstance>& instances) {
        std::vector<double> out;
        out.reserve(instances.size());
        for (const LabeledInstance& inst : instances) {
          out.push_back(model.space.target_value(inst));
        }
        return out;
      },
      py::arg("model"), py::arg("instances"),
      "Ground-truth target values in the model's encoding.");
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));
}
