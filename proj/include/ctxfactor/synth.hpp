#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxfactor/data_model.hpp"
#include "ctxfactor/factorization.hpp"

namespace ctxfactor {

struct ArchetypeMeans {
  double kills = 0.0;
  double deaths = 0.0;
  double assists = 0.0;
};

// Per-champion-type performance means, ordered like ChampionType. The
// defaults give each type a distinct, stably ordered profile (a low-kill
// high-assist support type, a high-kill aggressive type, ...).
std::vector<ArchetypeMeans> default_archetypes();

// Knobs for the synthetic corpus. The planted world is a low-rank one:
// every user and champion has a dominant component (champion cluster c is
// the residue k % rank), picks are drawn from the CP slice distribution,
// and win probability mixes a per-user skill with a user-champion affinity
// term whose weight is `interaction_strength`.
struct GeneratorConfig {
  int n_users = 100;
  int n_versions = 12;
  int n_champions = 21;
  int rank = 4;

  // Slice activity and volume.
  double activity_prob = 0.35;  // per-(user, version) Bernoulli
  int min_matches_per_active_slice = 3;
  int max_matches_per_active_slice = 12;
  // Every user is topped up to at least this many matches (>= 0; users that
  // would end up with zero matches are an error so record/user indices stay
  // aligned with the ground truth).
  int min_matches_per_user = 15;

  // Factor shape. Off-cluster weights of 1.0 give flat (uniform) factors.
  double user_offcluster_weight = 0.05;
  double champion_offcluster_weight = 0.02;

  // Planted pick-concentration archetypes: a specialist samples champions
  // from the slice distribution raised to gamma_sharpen (more peaked), a
  // generalist from gamma_flatten (< 1, flatter).
  double fraction_specialists = 0.1;
  double fraction_generalists = 0.1;
  double gamma_sharpen = 3.0;
  double gamma_flatten = 0.25;

  // Session timing, in seconds. Gaps are measured end-of-match to start of
  // the next; the defaults straddle the 900 s session threshold.
  std::int64_t continue_gap_min = 60;
  std::int64_t continue_gap_max = 600;
  std::int64_t break_gap_min = 3600;
  std::int64_t break_gap_max = 28800;
  double session_break_prob = 0.3;
  std::int64_t match_duration_min = 900;
  std::int64_t match_duration_max = 2700;
  std::int64_t version_window_seconds = 14LL * 86400;
  std::int64_t base_timestamp = 1420070400;  // 2015-01-01T00:00:00Z

  // Outcomes.
  std::vector<ArchetypeMeans> archetypes = default_archetypes();
  double archetype_noise_sd = 2.0;
  double user_skill_spread = 1.0;
  double skill_weight = 1.0;
  double interaction_strength = 1.0;

  std::uint64_t seed = 0;
};

// Everything the generator knows that the pipeline is supposed to recover.
struct GroundTruth {
  KruskalFactors factors;             // planted U (users x R), T, F
  Eigen::MatrixXd affinity;           // z-scored cosine(U row, F row), users x champions
  Eigen::VectorXd user_skill;
  Eigen::VectorXd user_gamma;         // pick-distribution exponent per user
  std::vector<int> user_cluster;      // dominant component per user
  std::vector<int> champion_cluster;  // k % rank
  std::vector<int> planted_specialists;  // user indices
  std::vector<int> planted_generalists;
  // Parallel to the emitted records; true where a >= 900 s break (or the
  // end of the user's history) follows the match.
  std::vector<std::uint8_t> end_of_session;
};

struct SynthResult {
  // Users ascending (ids are zero-padded so dictionary order matches),
  // versions ascending within a user, match time ascending within a slice.
  std::vector<MatchRecord> records;
  GroundTruth truth;
};

// Deterministic under config.seed: equal configs give byte-identical
// corpora. Throws std::invalid_argument on bad config or when some user
// would end up with zero active slices.
SynthResult generate(const GeneratorConfig& config);

// The planted per-slice champion distribution (CP slice raised to the
// user's gamma, normalized) that `generate` sampled picks from.
Eigen::VectorXd slice_pick_distribution(const GroundTruth& truth, int user, int version);

void save_ground_truth(const GroundTruth& truth, const std::string& path);

}  // namespace ctxfactor
