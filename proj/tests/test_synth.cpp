#include <doctest.h>

#include <stdexcept>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ctxfactor/behavior.hpp"
#include "ctxfactor/data_model.hpp"
#include "ctxfactor/synth.hpp"

using namespace ctxfactor;

TEST_SUITE("synth") {

TEST_CASE("reruns with the same seed are byte-identical") {
  GeneratorConfig cfg;
  cfg.n_users = 25;
  cfg.n_versions = 6;
  cfg.n_champions = 10;
  cfg.rank = 3;
  cfg.seed = 77;

  const SynthResult a = generate(cfg);
  const SynthResult b = generate(cfg);
  std::ostringstream csv_a, csv_b;
  write_csv(dataset_from_records(a.records), csv_a);
  write_csv(dataset_from_records(b.records), csv_b);
  CHECK(csv_a.str() == csv_b.str());
  CHECK(a.truth.factors.U == b.truth.factors.U);
  CHECK(a.truth.user_skill == b.truth.user_skill);
  CHECK(a.truth.end_of_session == b.truth.end_of_session);

  cfg.seed = 78;
  const SynthResult c = generate(cfg);
  std::ostringstream csv_c;
  write_csv(dataset_from_records(c.records), csv_c);
  CHECK(csv_a.str() != csv_c.str());
}

TEST_CASE("generated corpora pass ingestion and carry coherent indices") {
  GeneratorConfig cfg;
  cfg.n_users = 20;
  cfg.n_versions = 5;
  cfg.n_champions = 9;
  cfg.rank = 2;
  cfg.seed = 8;
  const SynthResult result = generate(cfg);
  const Dataset ds = dataset_from_records(result.records);  // full validation

  CHECK(ds.users.size() == cfg.n_users);
  CHECK(ds.n_versions <= cfg.n_versions);
  CHECK(ds.n_champions <= cfg.n_champions);
  for (const MatchRecord& r : ds.records) {
    // Champion type is the fixed residue of the champion id.
    CHECK(static_cast<int>(r.champion_type) == r.champion_id % kNumChampionTypes);
    CHECK(r.duration >= 900);
    CHECK(r.duration <= 2700);
  }
  // Zero-padded user ids keep dictionary order equal to generation order.
  for (int i = 0; i + 1 < ds.users.size(); ++i) {
    CHECK(ds.users.value_at(i) < ds.users.value_at(i + 1));
  }
}

TEST_CASE("every user reaches the match floor") {
  GeneratorConfig cfg;
  cfg.n_users = 30;
  cfg.n_versions = 8;
  cfg.n_champions = 12;
  cfg.rank = 3;
  cfg.seed = 5;
  cfg.activity_prob = 0.1;  // sparse enough that top-ups must kick in
  cfg.min_matches_per_user = 15;
  const SynthResult result = generate(cfg);
  std::map<std::string, int> counts;
  for (const MatchRecord& r : result.records) ++counts[r.user_id];
  REQUIRE(counts.size() == 30);
  for (const auto& [user, n] : counts) CHECK(n >= 15);
}

TEST_CASE("ground truth shapes line up with the config") {
  GeneratorConfig cfg;
  cfg.n_users = 18;
  cfg.n_versions = 4;
  cfg.n_champions = 11;
  cfg.rank = 3;
  cfg.seed = 2;
  cfg.fraction_specialists = 0.2;
  cfg.fraction_generalists = 0.2;
  const SynthResult result = generate(cfg);
  const GroundTruth& truth = result.truth;

  CHECK(truth.factors.U.rows() == 18);
  CHECK(truth.factors.T.rows() == 4);
  CHECK(truth.factors.F.rows() == 11);
  CHECK(truth.factors.rank == 3);
  CHECK(truth.factors.U.minCoeff() >= 0.0);
  CHECK(truth.affinity.rows() == 18);
  CHECK(truth.affinity.cols() == 11);
  CHECK(truth.user_skill.size() == 18);
  CHECK(truth.end_of_session.size() == result.records.size());
  for (int k = 0; k < 11; ++k) CHECK(truth.champion_cluster[k] == k % 3);
  for (int u = 0; u < 18; ++u) {
    CHECK(truth.user_cluster[u] >= 0);
    CHECK(truth.user_cluster[u] < 3);
  }
  // llround(18 * 0.2) = 4 of each, disjoint.
  CHECK(truth.planted_specialists.size() == 4);
  CHECK(truth.planted_generalists.size() == 4);
  for (int s : truth.planted_specialists) {
    for (int g : truth.planted_generalists) CHECK(s != g);
  }
}

TEST_CASE("end-of-session ground truth agrees with the sessionizer") {
  GeneratorConfig cfg;
  cfg.n_users = 15;
  cfg.n_versions = 5;
  cfg.n_champions = 8;
  cfg.rank = 2;
  cfg.seed = 31;
  const SynthResult result = generate(cfg);
  const Dataset ds = dataset_from_records(result.records);
  const auto labeled = label_all_users(ds);

  std::map<std::pair<std::string, std::string>, bool> oracle;
  for (const LabeledInstance& inst : labeled) {
    oracle[{inst.record.user_id, inst.record.match_id}] = inst.end_of_session;
  }
  REQUIRE(result.truth.end_of_session.size() == result.records.size());
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const MatchRecord& r = result.records[i];
    CHECK(static_cast<bool>(result.truth.end_of_session[i]) ==
          oracle.at({r.user_id, r.match_id}));
  }
}

TEST_CASE("session gaps straddle the break threshold") {
  GeneratorConfig cfg;
  cfg.n_users = 10;
  cfg.n_versions = 4;
  cfg.n_champions = 8;
  cfg.rank = 2;
  cfg.seed = 12;
  cfg.min_matches_per_active_slice = 8;
  cfg.max_matches_per_active_slice = 14;
  const SynthResult result = generate(cfg);
  const Dataset ds = dataset_from_records(result.records);
  const auto labeled = label_all_users(ds);
  int ends = 0;
  for (const auto& inst : labeled) ends += inst.end_of_session ? 1 : 0;
  // Both kinds of gaps must occur: some matches end sessions, most do not.
  CHECK(ends > 0);
  CHECK(ends < static_cast<int>(labeled.size()));
}

TEST_CASE("empirical pick distributions track the planted slice distributions") {
  // Concentrated planted factors and many draws per slice push the mean
  // total-variation distance well under 0.1.
  GeneratorConfig cfg;
  cfg.n_users = 40;
  cfg.n_versions = 6;
  cfg.n_champions = 12;
  cfg.rank = 4;
  cfg.seed = 9;
  cfg.activity_prob = 0.5;
  cfg.min_matches_per_active_slice = 200;
  cfg.max_matches_per_active_slice = 200;
  cfg.fraction_specialists = 0.0;
  cfg.fraction_generalists = 0.0;
  const SynthResult result = generate(cfg);
  const Dataset ds = dataset_from_records(result.records);

  std::map<std::pair<int, int>, Eigen::VectorXd> counts;
  for (const MatchRecord& r : ds.records) {
    auto [it, fresh] = counts.try_emplace({ds.user_index(r.user_id), r.version_index},
                                          Eigen::VectorXd::Zero(cfg.n_champions));
    it->second[r.champion_id] += 1.0;
  }
  double tv_sum = 0.0;
  for (const auto& [slice, c] : counts) {
    const Eigen::VectorXd empirical = c / c.sum();
    const Eigen::VectorXd planted =
        slice_pick_distribution(result.truth, slice.first, slice.second);
    tv_sum += 0.5 * (empirical - planted).cwiseAbs().sum();
  }
  const double mean_tv = tv_sum / static_cast<double>(counts.size());
  CHECK(mean_tv < 0.1);
}

TEST_CASE("planted specialists play narrower type mixes than generalists") {
  // rank == number of champion types makes champion cluster and champion
  // type coincide, so pick concentration maps straight onto type entropy.
  GeneratorConfig cfg;
  cfg.n_users = 50;
  cfg.n_versions = 6;
  cfg.n_champions = 21;
  cfg.rank = 7;
  cfg.seed = 14;
  cfg.fraction_specialists = 0.2;
  cfg.fraction_generalists = 0.2;
  cfg.min_matches_per_user = 30;
  const SynthResult result = generate(cfg);
  const Dataset ds = dataset_from_records(result.records);
  const auto profiles = build_profiles(ds);

  auto mean_entropy = [&](const std::vector<int>& users) {
    double sum = 0.0;
    for (int u : users) sum += profiles[static_cast<std::size_t>(u)].entropy;
    return sum / static_cast<double>(users.size());
  };
  const double spec = mean_entropy(result.truth.planted_specialists);
  const double gen = mean_entropy(result.truth.planted_generalists);
  CHECK(spec + 0.3 < gen);
  CHECK(gen > 1.0);  // flattened picks over 7 types approach ln 7
}

TEST_CASE("skill drives wins when the interaction term is off") {
  GeneratorConfig cfg;
  cfg.n_users = 60;
  cfg.n_versions = 6;
  cfg.n_champions = 10;
  cfg.rank = 2;
  cfg.seed = 4;
  cfg.interaction_strength = 0.0;
  cfg.skill_weight = 2.0;
  cfg.min_matches_per_user = 20;
  const SynthResult result = generate(cfg);

  std::map<std::string, std::pair<int, int>> wins;  // user -> (wins, games)
  for (const MatchRecord& r : result.records) {
    auto& [w, g] = wins[r.user_id];
    w += r.win ? 1 : 0;
    ++g;
  }
  const Dataset ds = dataset_from_records(result.records);
  std::vector<double> skill, rate;
  for (const auto& [user, wg] : wins) {
    skill.push_back(result.truth.user_skill[ds.user_index(user)]);
    rate.push_back(static_cast<double>(wg.first) / wg.second);
  }
  CHECK(pearson(skill, rate) > 0.5);
}

TEST_CASE("config validation rejects nonsense") {
  GeneratorConfig cfg;
  cfg.n_users = 0;
  CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
  cfg = {};
  cfg.rank = 0;
  CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
  cfg = {};
  cfg.activity_prob = 1.5;
  CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
  cfg = {};
  cfg.fraction_specialists = 0.7;
  cfg.fraction_generalists = 0.7;
  CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
  cfg = {};
  cfg.min_matches_per_active_slice = 10;
  cfg.max_matches_per_active_slice = 5;
  CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
  cfg = {};
  cfg.continue_gap_min = 500;
  cfg.continue_gap_max = 100;
  CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
  cfg = {};
  cfg.match_duration_min = 0;
  CHECK_THROWS_AS(generate(cfg), std::invalid_argument);
}

TEST_CASE("slice_pick_distribution bounds its arguments") {
  GeneratorConfig cfg;
  cfg.n_users = 8;
  cfg.n_versions = 3;
  cfg.n_champions = 7;
  cfg.rank = 2;
  cfg.seed = 1;
  const SynthResult result = generate(cfg);
  const Eigen::VectorXd d = slice_pick_distribution(result.truth, 0, 0);
  CHECK(d.size() == 7);
  CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(d.minCoeff() >= 0.0);
  CHECK_THROWS_AS(slice_pick_distribution(result.truth, 8, 0), std::out_of_range);
  CHECK_THROWS_AS(slice_pick_distribution(result.truth, 0, 3), std::out_of_range);
}

}  // TEST_SUITE
