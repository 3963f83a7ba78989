#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "ctxfactor/data_model.hpp"

namespace ctxfactor {

enum class PlayerClass : int { kNeither = 0, kGeneralist, kSpecialist };
std::string_view to_string(PlayerClass c);

// Per-user behavioral summary. `champion_type_distribution` has one entry
// per ChampionType and sums to 1 over the user's matches.
struct UserProfile {
  std::string user_id;
  Eigen::VectorXd champion_type_distribution;
  double entropy = 0.0;
  PlayerClass player_class = PlayerClass::kNeither;
  int component_label = -1;  // -1 = unlabeled
  int days_online = 0;       // distinct UTC calendar days with >= 1 match
  int n_matches = 0;
};

// Shannon entropy (natural log) of a probability vector. 0*ln(0) == 0.
// Throws if any entry is negative or the sum strays from 1 by more than 1e-6.
double champion_entropy(const Eigen::VectorXd& distribution);

// One profile per dictionary user, in dictionary order (matching tensor and
// factor row indices). Throws if any played champion has no known type.
std::vector<UserProfile> build_profiles(const Dataset& dataset);

// Marks the bottom entropy decile as specialists and the top decile as
// generalists (nearest-rank marks, counted from each end, boundary
// inclusive). Users on both marks at once are left as neither. Needs >= 10
// profiles for the deciles to mean anything.
void classify_generalists_specialists(std::vector<UserProfile>& profiles);

// Row-wise dominant-component labels: normalize each row to sum 1 and label
// it with the argmax component if that share reaches `threshold` (lowest
// index wins ties). -1 = unlabeled (including all-zero rows).
std::vector<int> component_labels(const Eigen::MatrixXd& factor, double threshold = 0.4);

// Writes component_labels(U) into the profiles. Row count must match.
void assign_component_labels(std::vector<UserProfile>& profiles, const Eigen::MatrixXd& U,
                             double threshold = 0.4);

struct ActivationTable {
  Eigen::MatrixXd normalized;  // type x component, each nonzero column sums to 1
  Eigen::MatrixXd masked;      // normalized with each row's low-mass tail zeroed
};

// Averages champion embedding rows by champion type, normalizes each
// component column to sum 1, then per row keeps the largest entries until
// their cumulative sum first reaches `coverage` of the row total and zeroes
// the rest. `squared_variant` ranks by squared entries against `coverage`
// of the row's sum of squares instead. Throws if any champion that appears
// in `F` has no type (-1).
ActivationTable champion_type_activation(const Eigen::MatrixXd& F,
                                         const std::vector<int>& champion_types,
                                         double coverage = 0.95, bool squared_variant = false);

struct PickRateTable {
  std::vector<int> versions;  // populated versions, ascending
  Eigen::MatrixXd rates;      // champion x version; each column sums to 1
};

// Share of each version's matches played on each champion. Versions with no
// matches are omitted rather than emitted as 0/0.
PickRateTable pick_rates(const Dataset& dataset);

struct EngagementSummary {
  std::vector<int> versions;  // populated versions, ascending
  std::vector<int> labels;    // distinct component labels present, ascending (-1 first)
  // label x version: mean matches per active user; NaN where the label has
  // no active user in that version.
  Eigen::MatrixXd matches_per_active_user;
  std::map<int, std::vector<int>> days_online_by_label;
};

// Aggregates engagement by component label. Profiles must be in dictionary
// order (as produced by build_profiles) and already carry labels.
EngagementSummary engagement_summary(const Dataset& dataset,
                                     const std::vector<UserProfile>& profiles);

struct PerformanceByType {
  std::vector<int> versions;  // populated versions, ascending
  // type x version per-match means; NaN where the type has no match.
  Eigen::MatrixXd kills;
  Eigen::MatrixXd deaths;
  Eigen::MatrixXd assists;
  Eigen::MatrixXd kda;
};

PerformanceByType performance_by_type(const Dataset& dataset);

// Centered moving average with shrinking windows at the edges. `window`
// must be odd and >= 1.
std::vector<double> moving_average(const std::vector<double>& series, int window = 3);

// Pearson correlation; throws on size mismatch, fewer than two points, or a
// zero-variance side.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Per-component pick-rate mass: row c, column j = summed pick rate in
// version j of the champions labeled c. Unlabeled champions contribute to
// no row.
Eigen::MatrixXd labeled_pick_rate_series(const PickRateTable& table,
                                         const std::vector<int>& champion_labels, int rank);

// Pearson correlation, per component, between the temporal activation
// T(version, c) and the pick-rate mass of champions labeled c, over the
// populated versions. NaN where either side has zero variance.
std::vector<double> pickrate_activation_correlation(const Eigen::MatrixXd& T,
                                                    const PickRateTable& table,
                                                    const std::vector<int>& champion_labels);

}  // namespace ctxfactor
