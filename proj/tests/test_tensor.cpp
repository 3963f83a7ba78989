#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "ctxfactor/data_model.hpp"
#include "ctxfactor/rng.hpp"
#include "ctxfactor/tensor.hpp"

using namespace ctxfactor;

namespace {

std::vector<MatchRecord> random_corpus(int n_users, int n_versions, int n_champions, int n_records,
                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MatchRecord> rs;
  std::int64_t t = 1'500'000'000;
  for (int i = 0; i < n_records; ++i) {
    MatchRecord r;
    r.user_id = "u" + std::to_string(rng.uniform_int(0, n_users - 1));
    r.match_id = "m" + std::to_string(i);
    r.timestamp = t;
    t += 4'000;
    r.duration = 1800;
    r.version_index = static_cast<int>(rng.uniform_int(0, n_versions - 1));
    r.season = "s1";
    r.queue_type = "q";
    r.map_id = "map";
    r.champion_id = static_cast<int>(rng.uniform_int(0, n_champions - 1));
    r.champion_type = static_cast<ChampionType>(r.champion_id % kNumChampionTypes);
    r.role = "mid";
    r.lane = "mid";
    r.win = rng.bernoulli(0.5);
    rs.push_back(r);
  }
  return rs;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("observed slices are pick distributions") {
  const Dataset ds = dataset_from_records(random_corpus(6, 4, 9, 120, 1));
  const SparseMaskedTensor tensor = build_tensor(ds);

  // Oracle: count picks per (user, version, champion) directly.
  std::map<std::pair<int, int>, std::map<int, int>> counts;
  for (const MatchRecord& r : ds.records) {
    ++counts[{ds.user_index(r.user_id), r.version_index}][r.champion_id];
  }
  REQUIRE(tensor.observed_slices().size() == counts.size());

  for (const auto& [slice, picks] : counts) {
    REQUIRE(tensor.is_observed(slice.first, slice.second));
    int slice_total = 0;
    for (const auto& [k, c] : picks) slice_total += c;
    double sum = 0.0;
    for (int k = 0; k < ds.n_champions; ++k) {
      const double v = tensor.value_at(slice.first, slice.second, k);
      const auto it = picks.find(k);
      const double expect = it == picks.end() ? 0.0 : static_cast<double>(it->second) / slice_total;
      CHECK(v == doctest::Approx(expect).epsilon(1e-12));
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));  // slice stochasticity
  }
  CHECK_NOTHROW(tensor.validate());
}

TEST_CASE("unobserved slices have no values") {
  std::vector<MatchRecord> rs = random_corpus(4, 4, 5, 20, 2);
  const Dataset ds = dataset_from_records(rs);
  const SparseMaskedTensor tensor = build_tensor(ds);
  std::set<std::pair<int, int>> observed(tensor.observed_slices().begin(),
                                         tensor.observed_slices().end());
  for (int i = 0; i < tensor.dim_i(); ++i) {
    for (int j = 0; j < tensor.dim_j(); ++j) {
      if (observed.count({i, j})) continue;
      CHECK_FALSE(tensor.is_observed(i, j));
      CHECK_THROWS_AS(tensor.value_at(i, j, 0), std::invalid_argument);
    }
  }
}

TEST_CASE("density is the observed-slice fraction") {
  const Dataset ds = dataset_from_records(random_corpus(5, 6, 4, 40, 3));
  const SparseMaskedTensor tensor = build_tensor(ds);
  const double expected = static_cast<double>(tensor.observed_slices().size()) /
                          (static_cast<double>(tensor.dim_i()) * tensor.dim_j());
  CHECK(density(tensor) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("norm_observed matches direct summation") {
  const Dataset ds = dataset_from_records(random_corpus(5, 3, 6, 60, 4));
  const SparseMaskedTensor tensor = build_tensor(ds);
  double ss = 0.0;
  for (const auto& [i, j] : tensor.observed_slices()) {
    for (int k = 0; k < tensor.dim_k(); ++k) {
      const double v = tensor.value_at(i, j, k);
      ss += v * v;
    }
  }
  CHECK(tensor.norm_observed() == doctest::Approx(std::sqrt(ss)).epsilon(1e-12));
}

TEST_CASE("build_tensor on a record subset masks the rest") {
  const Dataset ds = dataset_from_records(random_corpus(6, 5, 7, 80, 5));
  // Keep only version-0 records.
  std::vector<MatchRecord> subset;
  for (const MatchRecord& r : ds.records) {
    if (r.version_index == 0) subset.push_back(r);
  }
  const SparseMaskedTensor partial = build_tensor(ds, subset);
  CHECK(partial.dim_i() == ds.users.size());   // dimensions follow the dataset
  CHECK(partial.dim_j() == ds.n_versions);
  for (const auto& [i, j] : partial.observed_slices()) CHECK(j == 0);
}

TEST_CASE("constructor tolerates out-of-slice entries but validate rejects them") {
  // One observed slice (0,0) holding a proper distribution, plus a stray
  // entry in unobserved slice (1,1).
  std::vector<TensorEntry> entries = {
      {0, 0, 0, 0.5}, {0, 0, 1, 0.5}, {1, 1, 0, 99.0}};
  const SparseMaskedTensor t(2, 2, 2, entries, {{0, 0}});
  CHECK(t.is_observed(0, 0));
  CHECK_FALSE(t.is_observed(1, 1));
  CHECK(t.value_at(0, 0, 0) == 0.5);
  CHECK_THROWS_AS(t.validate(), std::runtime_error);

  // The stray value is invisible to every masked computation.
  CHECK(t.norm_observed() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("validate rejects non-stochastic observed slices") {
  std::vector<TensorEntry> entries = {{0, 0, 0, 0.5}, {0, 0, 1, 0.3}};
  const SparseMaskedTensor t(1, 1, 2, entries, {{0, 0}});
  CHECK_THROWS_AS(t.validate(), std::runtime_error);
}

TEST_CASE("constructor rejects out-of-range coordinates and duplicates") {
  CHECK_THROWS_AS(SparseMaskedTensor(2, 2, 2, {{2, 0, 0, 1.0}}, {{0, 0}}), std::out_of_range);
  CHECK_THROWS_AS(SparseMaskedTensor(2, 2, 2, {}, {{0, 5}}), std::out_of_range);
  CHECK_THROWS_AS(
      SparseMaskedTensor(2, 2, 2, {{0, 0, 0, 0.5}, {0, 0, 0, 0.5}}, {{0, 0}}),
      std::invalid_argument);
  CHECK_THROWS_AS(SparseMaskedTensor(0, 2, 2, {}, {}), std::invalid_argument);
}

}  // TEST_SUITE
