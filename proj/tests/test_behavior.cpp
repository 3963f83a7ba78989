#include <doctest.h>

#include <stdexcept>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ctxfactor/behavior.hpp"
#include "ctxfactor/data_model.hpp"

using namespace ctxfactor;

namespace {

MatchRecord record(const std::string& user, const std::string& match, std::int64_t ts, int version,
                   int champion, ChampionType type, int kills = 2, int deaths = 1,
                   int assists = 4) {
  MatchRecord r;
  r.user_id = user;
  r.match_id = match;
  r.timestamp = ts;
  r.duration = 1800;
  r.version_index = version;
  r.season = "s";
  r.queue_type = "q";
  r.map_id = "m";
  r.champion_id = champion;
  r.champion_type = type;
  r.role = "mid";
  r.lane = "mid";
  r.kills = kills;
  r.deaths = deaths;
  r.assists = assists;
  r.win = true;
  return r;
}

std::vector<UserProfile> synthetic_profiles(const std::vector<double>& entropies) {
  std::vector<UserProfile> out;
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    UserProfile p;
    p.user_id = "u" + std::to_string(i);
    p.entropy = entropies[i];
    out.push_back(p);
  }
  return out;
}

std::map<PlayerClass, int> class_counts(const std::vector<UserProfile>& profiles) {
  std::map<PlayerClass, int> counts;
  for (const auto& p : profiles) ++counts[p.player_class];
  return counts;
}

}  // namespace

TEST_SUITE("behavior") {

TEST_CASE("entropy anchors") {
  Eigen::VectorXd uniform7 = Eigen::VectorXd::Constant(7, 1.0 / 7.0);
  CHECK(champion_entropy(uniform7) == doctest::Approx(1.9459).epsilon(1e-3));
  CHECK(champion_entropy(uniform7) == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  Eigen::VectorXd point(7);
  point << 1, 0, 0, 0, 0, 0, 0;
  CHECK(champion_entropy(point) == 0.0);

  Eigen::VectorXd half(2);
  half << 0.5, 0.5;
  CHECK(champion_entropy(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("entropy rejects malformed distributions") {
  Eigen::VectorXd negative(2);
  negative << 1.5, -0.5;
  CHECK_THROWS_AS(champion_entropy(negative), std::invalid_argument);
  Eigen::VectorXd leaky(2);
  leaky << 0.5, 0.4;
  CHECK_THROWS_AS(champion_entropy(leaky), std::invalid_argument);
}

TEST_CASE("build_profiles aggregates type shares, days and match counts") {
  const std::int64_t day = 86'400;
  std::vector<MatchRecord> rs;
  // alice: 3 mage picks + 1 tank pick across two calendar days.
  rs.push_back(record("alice", "a1", 10 * day + 100, 0, 0, ChampionType::kMage));
  rs.push_back(record("alice", "a2", 10 * day + 5'000, 0, 0, ChampionType::kMage));
  rs.push_back(record("alice", "a3", 12 * day + 100, 1, 1, ChampionType::kTank));
  rs.push_back(record("alice", "a4", 12 * day + 9'000, 1, 0, ChampionType::kMage));
  // bob: single fighter pick.
  rs.push_back(record("bob", "b1", 11 * day, 0, 2, ChampionType::kFighter));
  const Dataset ds = dataset_from_records(rs);

  const auto profiles = build_profiles(ds);
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[0].user_id == "alice");  // dictionary order
  CHECK(profiles[0].n_matches == 4);
  CHECK(profiles[0].days_online == 2);
  CHECK(profiles[0].champion_type_distribution[static_cast<int>(ChampionType::kMage)] ==
        doctest::Approx(0.75));
  CHECK(profiles[0].champion_type_distribution[static_cast<int>(ChampionType::kTank)] ==
        doctest::Approx(0.25));
  CHECK(profiles[0].entropy ==
        doctest::Approx(-(0.75 * std::log(0.75) + 0.25 * std::log(0.25))));
  CHECK(profiles[1].user_id == "bob");
  CHECK(profiles[1].entropy == 0.0);
  CHECK(profiles[1].days_online == 1);
}

TEST_CASE("decile classification marks one of each on ten distinct entropies") {
  auto profiles = synthetic_profiles({0.9, 0.3, 0.7, 0.1, 0.5, 0.6, 0.2, 0.8, 0.4, 1.0});
  classify_generalists_specialists(profiles);
  const auto counts = class_counts(profiles);
  CHECK(counts.at(PlayerClass::kSpecialist) == 1);
  CHECK(counts.at(PlayerClass::kGeneralist) == 1);
  for (const auto& p : profiles) {
    if (p.entropy == 0.1) CHECK(p.player_class == PlayerClass::kSpecialist);
    if (p.entropy == 1.0) CHECK(p.player_class == PlayerClass::kGeneralist);
  }
}

TEST_CASE("decile classification takes nearest-rank tails of larger pools") {
  std::vector<double> entropies;
  for (int i = 0; i < 25; ++i) entropies.push_back(0.01 * (i + 1));
  auto profiles = synthetic_profiles(entropies);
  classify_generalists_specialists(profiles);
  // ceil(25/10) = 3 from each end.
  const auto counts = class_counts(profiles);
  CHECK(counts.at(PlayerClass::kSpecialist) == 3);
  CHECK(counts.at(PlayerClass::kGeneralist) == 3);
  for (const auto& p : profiles) {
    if (p.entropy <= 0.03 + 1e-12) {
      CHECK(p.player_class == PlayerClass::kSpecialist);
    } else if (p.entropy >= 0.23 - 1e-12) {
      CHECK(p.player_class == PlayerClass::kGeneralist);
    } else {
      CHECK(p.player_class == PlayerClass::kNeither);
    }
  }
}

TEST_CASE("boundary ties go to both sides; double-qualification goes to neither") {
  // All identical entropies: both marks coincide, so everyone qualifies for
  // both deciles and must be left unclassified.
  auto profiles = synthetic_profiles(std::vector<double>(12, 0.5));
  classify_generalists_specialists(profiles);
  for (const auto& p : profiles) CHECK(p.player_class == PlayerClass::kNeither);

  // Ties at the specialist mark sweep in every tied user.
  auto tied = synthetic_profiles({0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.9, 0.9});
  classify_generalists_specialists(tied);
  const auto counts = class_counts(tied);
  CHECK(counts.at(PlayerClass::kSpecialist) == 3);
  CHECK(counts.at(PlayerClass::kGeneralist) == 2);
}

TEST_CASE("decile classification requires ten profiles") {
  auto tiny = synthetic_profiles({0.1, 0.2, 0.3});
  CHECK_THROWS_AS(classify_generalists_specialists(tiny), std::invalid_argument);
}

TEST_CASE("component labels follow the dominant share") {
  Eigen::MatrixXd M(5, 3);
  M << 8, 1, 1,    // 0.8 share -> component 0
       1, 1, 1,    // uniform 1/3 < 0.4 -> unlabeled
       0, 0, 5,    // pure -> component 2
       2, 2, 1,    // tie at 0.4: lowest index wins
       0, 0, 0;    // zero row -> unlabeled
  const std::vector<int> labels = component_labels(M, 0.4);
  CHECK(labels == std::vector<int>{0, -1, 2, 0, -1});

  SUBCASE("threshold 1.0 labels only pure rows") {
    CHECK(component_labels(M, 1.0) == std::vector<int>{-1, -1, 2, -1, -1});
  }
}

TEST_CASE("activation table normalizes columns and masks row tails") {
  // 7 champions, one per type, rank 2; column c of F sums to 10*(c+1).
  Eigen::MatrixXd F(7, 2);
  F << 5.0, 0.2,
       2.0, 0.2,
       1.5, 0.2,
       0.8, 0.2,
       0.4, 0.2,
       0.2, 9.0,
       0.1, 10.0;
  std::vector<int> types = {0, 1, 2, 3, 4, 5, 6};
  const ActivationTable table = champion_type_activation(F, types, 0.95);

  // Each type is a single champion, so normalized(t, c) = F(t, c) / colsum.
  for (int c = 0; c < 2; ++c) {
    CHECK(table.normalized.col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int t = 0; t < 7; ++t) {
      CHECK(table.normalized(t, c) == doctest::Approx(F(t, c) / F.col(c).sum()));
    }
  }
  // Masking is per row: a row keeps its largest entries until 95% of its own
  // mass is covered. Row 0 is (0.5, 0.01): the first entry alone covers
  // 98% >= 95%, so the second is zeroed.
  CHECK(table.masked(0, 0) == doctest::Approx(table.normalized(0, 0)));
  CHECK(table.masked(0, 1) == 0.0);
  // A perfectly even row must keep both entries (tie at the boundary).
  // Row 1: (0.2, 0.01) -> normalized shares ~0.95/0.05; boundary case.
  for (int t = 0; t < 7; ++t) {
    double kept = 0.0, total = 0.0;
    for (int c = 0; c < 2; ++c) {
      kept += table.masked(t, c);
      total += table.normalized(t, c);
      // Masked entries are either zero or the normalized value.
      const bool zero_or_copy =
          table.masked(t, c) == 0.0 || table.masked(t, c) == table.normalized(t, c);
      CHECK(zero_or_copy);
    }
    CHECK(kept >= 0.95 * total - 1e-9);
  }
}

TEST_CASE("activation table keeps every entry of a uniform row") {
  Eigen::MatrixXd F = Eigen::MatrixXd::Ones(7, 4);
  std::vector<int> types = {0, 1, 2, 3, 4, 5, 6};
  const ActivationTable table = champion_type_activation(F, types, 0.95);
  // Uniform rows: ceil(0.95 * 4) = 4 entries needed, nothing masked.
  for (int t = 0; t < 7; ++t) {
    for (int c = 0; c < 4; ++c) CHECK(table.masked(t, c) > 0.0);
  }
}

TEST_CASE("squared-variant masking concentrates harder") {
  // Columns are built to sum to 1, so row 0 normalizes to exactly
  // 0.6/0.25/0.15. Plain cumulative needs two entries for 0.8 coverage
  // (0.6+0.25); squared shares are 0.36/0.0625/0.0225 of 0.445, so the
  // first entry alone covers 81% >= 80%.
  Eigen::MatrixXd F(7, 3);
  F.row(0) << 0.6, 0.25, 0.15;
  for (int t = 1; t < 7; ++t) F.row(t) << 0.4 / 6, 0.75 / 6, 0.85 / 6;
  std::vector<int> types = {0, 1, 2, 3, 4, 5, 6};
  const ActivationTable plain = champion_type_activation(F, types, 0.80, false);
  const ActivationTable squared = champion_type_activation(F, types, 0.80, true);
  CHECK(plain.masked(0, 1) > 0.0);     // plain keeps the second entry
  CHECK(squared.masked(0, 1) == 0.0);  // squared does not
  CHECK(squared.masked(0, 0) > 0.0);
}

TEST_CASE("activation table input validation") {
  Eigen::MatrixXd F = Eigen::MatrixXd::Ones(3, 2);
  CHECK_THROWS_AS(champion_type_activation(F, {0, 1}, 0.95), std::invalid_argument);
  CHECK_THROWS_AS(champion_type_activation(F, {0, 1, -1}, 0.95), std::invalid_argument);
  CHECK_THROWS_AS(champion_type_activation(F, {0, 1, 9}, 0.95), std::invalid_argument);
  CHECK_THROWS_AS(champion_type_activation(F, {0, 1, 2}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(champion_type_activation(F, {0, 1, 2}, 1.5), std::invalid_argument);
}

TEST_CASE("pick rates are per-version champion shares") {
  std::vector<MatchRecord> rs;
  rs.push_back(record("a", "1", 1000, 0, 0, ChampionType::kMage));
  rs.push_back(record("a", "2", 2000, 0, 0, ChampionType::kMage));
  rs.push_back(record("a", "3", 3000, 0, 1, ChampionType::kTank));
  rs.push_back(record("b", "1", 4000, 0, 2, ChampionType::kFighter));
  rs.push_back(record("b", "2", 5000, 2, 2, ChampionType::kFighter));
  const Dataset ds = dataset_from_records(rs);
  const PickRateTable table = pick_rates(ds);

  CHECK(table.versions == std::vector<int>{0, 2});  // version 1 empty, omitted
  REQUIRE(table.rates.rows() == ds.n_champions);
  REQUIRE(table.rates.cols() == 2);
  CHECK(table.rates(0, 0) == doctest::Approx(0.5));
  CHECK(table.rates(1, 0) == doctest::Approx(0.25));
  CHECK(table.rates(2, 0) == doctest::Approx(0.25));
  CHECK(table.rates(2, 1) == doctest::Approx(1.0));
  for (int j = 0; j < 2; ++j) {
    CHECK(table.rates.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("engagement summary averages matches per active user by label") {
  std::vector<MatchRecord> rs;
  // u0, u1 labeled 0; u2 labeled 1. Version 0: u0 plays 2, u1 plays 4.
  rs.push_back(record("u0", "a", 1000, 0, 0, ChampionType::kMage));
  rs.push_back(record("u0", "b", 2000, 0, 0, ChampionType::kMage));
  rs.push_back(record("u1", "a", 3000, 0, 0, ChampionType::kMage));
  rs.push_back(record("u1", "b", 4000, 0, 0, ChampionType::kMage));
  rs.push_back(record("u1", "c", 5000, 0, 0, ChampionType::kMage));
  rs.push_back(record("u1", "d", 6000, 0, 0, ChampionType::kMage));
  // Version 1: only u2.
  rs.push_back(record("u2", "a", 7000, 1, 0, ChampionType::kMage));
  const Dataset ds = dataset_from_records(rs);
  auto profiles = build_profiles(ds);
  profiles[0].component_label = 0;
  profiles[1].component_label = 0;
  profiles[2].component_label = 1;

  const EngagementSummary summary = engagement_summary(ds, profiles);
  CHECK(summary.versions == std::vector<int>{0, 1});
  CHECK(summary.labels == std::vector<int>{0, 1});
  // Label 0 in version 0: (2 + 4) / 2 users = 3.
  CHECK(summary.matches_per_active_user(0, 0) == doctest::Approx(3.0));
  // Label 0 has nobody in version 1.
  CHECK(std::isnan(summary.matches_per_active_user(0, 1)));
  CHECK(std::isnan(summary.matches_per_active_user(1, 0)));
  CHECK(summary.matches_per_active_user(1, 1) == doctest::Approx(1.0));
  CHECK(summary.days_online_by_label.at(0).size() == 2);
}

TEST_CASE("performance by type averages per-match statistics") {
  std::vector<MatchRecord> rs;
  rs.push_back(record("a", "1", 1000, 0, 0, ChampionType::kMage, 2, 1, 4));
  rs.push_back(record("a", "2", 2000, 0, 0, ChampionType::kMage, 4, 3, 6));
  rs.push_back(record("b", "1", 3000, 0, 1, ChampionType::kTank, 0, 2, 10));
  const Dataset ds = dataset_from_records(rs);
  const PerformanceByType perf = performance_by_type(ds);

  const int mage = static_cast<int>(ChampionType::kMage);
  const int tank = static_cast<int>(ChampionType::kTank);
  const int slayer = static_cast<int>(ChampionType::kSlayer);
  REQUIRE(perf.versions == std::vector<int>{0});
  CHECK(perf.kills(mage, 0) == doctest::Approx(3.0));
  CHECK(perf.deaths(mage, 0) == doctest::Approx(2.0));
  CHECK(perf.assists(mage, 0) == doctest::Approx(5.0));
  CHECK(perf.kda(mage, 0) ==
        doctest::Approx(0.5 * (compute_kda(2, 1, 4) + compute_kda(4, 3, 6))));
  CHECK(perf.kills(tank, 0) == doctest::Approx(0.0));
  CHECK(std::isnan(perf.kills(slayer, 0)));  // type never played
}

TEST_CASE("moving average shrinks its window at the edges") {
  const std::vector<double> series = {1, 2, 3, 4};
  const std::vector<double> smoothed = moving_average(series, 3);
  REQUIRE(smoothed.size() == 4);
  CHECK(smoothed[0] == doctest::Approx(1.5));   // mean of {1,2}
  CHECK(smoothed[1] == doctest::Approx(2.0));   // mean of {1,2,3}
  CHECK(smoothed[2] == doctest::Approx(3.0));
  CHECK(smoothed[3] == doctest::Approx(3.5));
  CHECK(moving_average(series, 1) == series);
  CHECK_THROWS_AS(moving_average(series, 2), std::invalid_argument);
  CHECK_THROWS_AS(moving_average(series, -3), std::invalid_argument);
}

TEST_CASE("pearson correlation") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(pearson({1}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {5, 5, 5}), std::invalid_argument);
}

TEST_CASE("pick-rate mass correlates with temporal activation per component") {
  // Two components, four versions. Champions 0,1 labeled 0; champion 2
  // labeled 1. Pick-rate mass of component-0 champions rises exactly with
  // T column 0.
  std::vector<MatchRecord> rs;
  int match = 0;
  auto add = [&](const std::string& user, int version, int champion, int copies) {
    for (int c = 0; c < copies; ++c) {
      rs.push_back(record(user, "m" + std::to_string(match++), 1000 * match, version, champion,
                          static_cast<ChampionType>(champion % 7)));
    }
  };
  // Version 0: comp0 champions get 8 of 10 picks; fading to 2 of 10 by v3.
  add("u", 0, 0, 4); add("u", 0, 1, 4); add("u", 0, 2, 2);
  add("u", 1, 0, 3); add("u", 1, 1, 3); add("u", 1, 2, 4);
  add("u", 2, 0, 2); add("u", 2, 1, 2); add("u", 2, 2, 6);
  add("u", 3, 0, 1); add("u", 3, 1, 1); add("u", 3, 2, 8);
  const Dataset ds = dataset_from_records(rs);
  const PickRateTable table = pick_rates(ds);
  const std::vector<int> labels = {0, 0, 1};

  const Eigen::MatrixXd series = labeled_pick_rate_series(table, labels, 2);
  REQUIRE(series.rows() == 2);
  REQUIRE(series.cols() == 4);
  CHECK(series(0, 0) == doctest::Approx(0.8));
  CHECK(series(1, 3) == doctest::Approx(0.8));

  Eigen::MatrixXd T(4, 2);
  T << 0.8, 0.2,
       0.6, 0.4,
       0.4, 0.6,
       0.2, 0.8;  // component 0 decays exactly like its pick share
  const std::vector<double> corr = pickrate_activation_correlation(T, table, labels);
  REQUIRE(corr.size() == 2);
  CHECK(corr[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(corr[1] == doctest::Approx(1.0).epsilon(1e-9));

  SUBCASE("flat activation yields NaN instead of a fake correlation") {
    Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(4, 2);
    const std::vector<double> c2 = pickrate_activation_correlation(flat, table, labels);
    CHECK(std::isnan(c2[0]));
    CHECK(std::isnan(c2[1]));
  }
}

TEST_CASE("unlabeled champions contribute to no component series") {
  PickRateTable table;
  table.versions = {0, 1};
  table.rates.resize(2, 2);
  table.rates << 0.5, 0.3,
                 0.5, 0.7;
  const Eigen::MatrixXd series = labeled_pick_rate_series(table, {0, -1}, 2);
  CHECK(series(0, 0) == doctest::Approx(0.5));
  CHECK(series(0, 1) == doctest::Approx(0.3));
  CHECK(series(1, 0) == 0.0);
  CHECK(series(1, 1) == 0.0);
}

}  // TEST_SUITE
