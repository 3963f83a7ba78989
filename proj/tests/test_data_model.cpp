#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctxfactor/data_model.hpp"
#include "ctxfactor/rng.hpp"

using namespace ctxfactor;

namespace {

MatchRecord record(const std::string& user, const std::string& match, std::int64_t ts,
                   std::int64_t duration = 1800, int version = 0, int champion = 0,
                   ChampionType type = ChampionType::kMage) {
  MatchRecord r;
  r.user_id = user;
  r.match_id = match;
  r.timestamp = ts;
  r.duration = duration;
  r.version_index = version;
  r.season = "s1";
  r.queue_type = "ranked";
  r.map_id = "m1";
  r.champion_id = champion;
  r.champion_type = type;
  r.role = "mid";
  r.lane = "mid";
  r.kills = 3;
  r.deaths = 2;
  r.assists = 5;
  r.win = true;
  return r;
}

// A small multi-user corpus with irregular timing.
std::vector<MatchRecord> sample_records() {
  std::vector<MatchRecord> rs;
  std::int64_t t = 1'500'000'000;
  rs.push_back(record("alice", "m1", t));
  rs.push_back(record("alice", "m2", t + 2000, 1800, 0, 1, ChampionType::kTank));
  rs.push_back(record("alice", "m3", t + 100'000, 1800, 1, 0));
  rs.push_back(record("bob", "m1", t + 50, 900, 0, 2, ChampionType::kFighter));
  rs.push_back(record("bob", "m4", t + 40'000, 900, 1, 2, ChampionType::kFighter));
  return rs;
}

}  // namespace

TEST_SUITE("data_model") {

TEST_CASE("csv write/ingest round trip preserves every field") {
  const Dataset original = dataset_from_records(sample_records());
  std::ostringstream out;
  write_csv(original, out);
  std::istringstream in(out.str());
  const Dataset parsed = ingest(in);

  REQUIRE(parsed.records.size() == original.records.size());
  for (std::size_t i = 0; i < parsed.records.size(); ++i) {
    const MatchRecord& a = original.records[i];
    const MatchRecord& b = parsed.records[i];
    CHECK(a.user_id == b.user_id);
    CHECK(a.match_id == b.match_id);
    CHECK(a.timestamp == b.timestamp);
    CHECK(a.duration == b.duration);
    CHECK(a.version_index == b.version_index);
    CHECK(a.champion_id == b.champion_id);
    CHECK(a.champion_type == b.champion_type);
    CHECK(a.kills == b.kills);
    CHECK(a.win == b.win);
  }
  CHECK(parsed.users.size() == 2);
  CHECK(parsed.n_versions == 2);
  CHECK(parsed.n_champions == 3);
}

TEST_CASE("ingest rejects malformed rows") {
  const std::string header(kCsvHeader);
  auto parse = [&](const std::string& row) {
    std::istringstream in(header + "\n" + row + "\n");
    return ingest(in);
  };
  // 19 well-formed fields as a template.
  const std::string good =
      "u1,m1,1500000000,1800,0,s1,ranked,m1,0,Mage,mid,mid,1,2,3,100,90,5,1";
  CHECK_NOTHROW(parse(good));
  CHECK_THROWS_AS(parse("u1,m1,1500000000"), std::runtime_error);  // field count
  CHECK_THROWS_AS(parse("u1,m1,1500000000,0,0,s1,ranked,m1,0,Mage,mid,mid,1,2,3,100,90,5,1"),
                  std::runtime_error);  // zero duration
  CHECK_THROWS_AS(parse("u1,m1,1500000000,1800,-1,s1,ranked,m1,0,Mage,mid,mid,1,2,3,100,90,5,1"),
                  std::runtime_error);  // negative version
  CHECK_THROWS_AS(parse("u1,m1,1500000000,1800,0,s1,ranked,m1,0,wizard,mid,mid,1,2,3,100,90,5,1"),
                  std::runtime_error);  // unknown champion type
  CHECK_THROWS_AS(parse("u1,m1,1500000000,1800,0,s1,ranked,m1,0,Mage,mid,mid,1,2,3,100,90,5,2"),
                  std::runtime_error);  // win flag out of domain
  CHECK_THROWS_AS(parse(good + "\n" + good), std::runtime_error);  // duplicate (user, match)
}

TEST_CASE("ingest rejects champions with conflicting types") {
  std::vector<MatchRecord> rs = sample_records();
  rs.push_back(record("carol", "m9", 1'500'500'000, 1800, 0, 0, ChampionType::kSlayer));
  CHECK_THROWS_AS(dataset_from_records(rs), std::runtime_error);
}

TEST_CASE("dictionary indices are sorted and stable across permutations") {
  std::vector<MatchRecord> rs = sample_records();
  const Dataset a = dataset_from_records(rs);
  std::reverse(rs.begin(), rs.end());
  const Dataset b = dataset_from_records(rs);
  CHECK(a.users.values() == b.users.values());
  CHECK(a.user_index("alice") == 0);
  CHECK(a.user_index("bob") == 1);
  CHECK(a.user_index("nobody") == -1);
}

TEST_CASE("filter_min_matches keeps exactly the users at or above the floor") {
  const auto rs = sample_records();  // alice 3 matches, bob 2
  const auto kept = filter_min_matches(rs, 3);
  for (const MatchRecord& r : kept) CHECK(r.user_id == "alice");
  CHECK(kept.size() == 3);

  SUBCASE("idempotent") {
    const auto twice = filter_min_matches(kept, 3);
    REQUIRE(twice.size() == kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      CHECK(twice[i].match_id == kept[i].match_id);
    }
  }
  SUBCASE("floor of 1 keeps everything") {
    CHECK(filter_min_matches(rs, 1).size() == rs.size());
  }
  SUBCASE("rejects nonpositive floor") {
    CHECK_THROWS_AS(filter_min_matches(rs, 0), std::invalid_argument);
  }
}

TEST_CASE("kda formula and monotonicity") {
  CHECK(compute_kda(0, 0, 0) == 0.0);
  CHECK(compute_kda(3, 2, 6) == doctest::Approx(3.0));
  CHECK(compute_kda(5, 0, 0) == doctest::Approx(5.0));  // deaths+1 guards /0
  // More kills or assists never lowers KDA; more deaths never raises it.
  for (int k = 0; k < 4; ++k) {
    for (int d = 0; d < 4; ++d) {
      for (int a = 0; a < 4; ++a) {
        CHECK(compute_kda(k + 1, d, a) >= compute_kda(k, d, a));
        CHECK(compute_kda(k, d, a + 1) >= compute_kda(k, d, a));
        CHECK(compute_kda(k, d + 1, a) <= compute_kda(k, d, a));
      }
    }
  }
  CHECK_THROWS_AS(compute_kda(-1, 0, 0), std::invalid_argument);
}

TEST_CASE("sessionize marks exactly the pre-break and final matches") {
  // Gaps are end-of-match to next start: 1800s matches back to back with
  // 100s breathing room stay in one session; a 900s+ gap splits.
  std::vector<MatchRecord> rs;
  std::int64_t t = 1'600'000'000;
  rs.push_back(record("u", "a", t));                 // ends t+1800
  rs.push_back(record("u", "b", t + 1900));          // gap 100  -> same session
  rs.push_back(record("u", "c", t + 1900 + 2700));   // gap 900  -> new session
  rs.push_back(record("u", "d", t + 1900 + 2700 + 1800 + 100));  // gap 100
  const auto labeled = sessionize(rs);
  REQUIRE(labeled.size() == 4);
  CHECK_FALSE(labeled[0].end_of_session);
  CHECK(labeled[1].end_of_session);   // break after b
  CHECK_FALSE(labeled[2].end_of_session);
  CHECK(labeled[3].end_of_session);   // final match always ends a session
}

TEST_CASE("sessionize partition property on random timelines") {
  // Oracle: walk the timeline; each end_of_session=true match must be
  // followed by a gap >= threshold (or nothing), each false by a gap <
  // threshold. Sessions partition the matches.
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<MatchRecord> rs;
    std::int64_t t = 1'600'000'000;
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 14));
    for (int i = 0; i < n; ++i) {
      rs.push_back(record("u", "m" + std::to_string(i), t, 600 + rng.uniform_int(0, 1200)));
      t = rs.back().timestamp + rs.back().duration + rng.uniform_int(0, 2000);
    }
    const auto labeled = sessionize(rs, 900);
    REQUIRE(labeled.size() == rs.size());
    int sessions = 0;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const bool last = i + 1 == labeled.size();
      const std::int64_t gap =
          last ? -1
               : labeled[i + 1].record.timestamp -
                     (labeled[i].record.timestamp + labeled[i].record.duration);
      if (labeled[i].end_of_session) {
        ++sessions;
        CHECK((last || gap >= 900));
      } else {
        REQUIRE_FALSE(last);
        CHECK(gap < 900);
      }
      CHECK(labeled[i].kda ==
            doctest::Approx(compute_kda(labeled[i].record.kills, labeled[i].record.deaths,
                                        labeled[i].record.assists)));
    }
    CHECK(sessions >= 1);  // the timeline always ends a session
  }
}

TEST_CASE("sessionize rejects unsorted input") {
  std::vector<MatchRecord> rs;
  rs.push_back(record("u", "a", 2'000));
  rs.push_back(record("u", "b", 1'000));
  CHECK_THROWS_AS(sessionize(rs), std::runtime_error);
}

TEST_CASE("label_all_users covers every record exactly once") {
  const Dataset ds = dataset_from_records(sample_records());
  const auto labeled = label_all_users(ds);
  REQUIRE(labeled.size() == ds.records.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& inst : labeled) {
    seen.insert({inst.record.user_id, inst.record.match_id});
  }
  CHECK(seen.size() == ds.records.size());
}

TEST_CASE("split is a deterministic per-user partition") {
  std::vector<MatchRecord> rs;
  std::int64_t t = 1'600'000'000;
  for (int u = 0; u < 8; ++u) {
    for (int m = 0; m < 10; ++m) {
      rs.push_back(record("user" + std::to_string(u), "m" + std::to_string(m), t));
      t += 5'000;
    }
  }
  const Dataset ds = dataset_from_records(rs);
  const auto instances = label_all_users(ds);
  SplitSpec spec;
  spec.test_fraction = 0.3;
  spec.seed = 42;
  const SplitResult a = split(instances, spec);
  const SplitResult b = split(instances, spec);

  CHECK(a.train.size() + a.test.size() == instances.size());
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].record.match_id == b.train[i].record.match_id);
    CHECK(a.train[i].record.user_id == b.train[i].record.user_id);
  }

  // Per-user: every user appears in both halves, with ~30% in test.
  std::map<std::string, int> train_count, test_count;
  for (const auto& inst : a.train) ++train_count[inst.record.user_id];
  for (const auto& inst : a.test) ++test_count[inst.record.user_id];
  for (int u = 0; u < 8; ++u) {
    const std::string id = "user" + std::to_string(u);
    CHECK(train_count[id] == 7);
    CHECK(test_count[id] == 3);
  }

  SUBCASE("different seeds move instances") {
    spec.seed = 43;
    const SplitResult c = split(instances, spec);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.test.size() && !any_diff; ++i) {
      any_diff = a.test[i].record.match_id != c.test[i].record.match_id ||
                 a.test[i].record.user_id != c.test[i].record.user_id;
    }
    CHECK(any_diff);
  }
}

TEST_CASE("split sends single-instance users to train") {
  std::vector<MatchRecord> rs;
  rs.push_back(record("solo", "only", 1'600'000'000));
  rs.push_back(record("duo", "a", 1'600'000'000));
  rs.push_back(record("duo", "b", 1'600'010'000));
  const auto instances = label_all_users(dataset_from_records(rs));
  SplitSpec spec;
  spec.test_fraction = 0.5;
  const SplitResult sp = split(instances, spec);
  CHECK(sp.single_instance_users == 1);
  bool solo_in_train = false;
  for (const auto& inst : sp.train) solo_in_train |= inst.record.user_id == "solo";
  CHECK(solo_in_train);
  for (const auto& inst : sp.test) CHECK(inst.record.user_id != "solo");
}

TEST_CASE("target plumbing") {
  CHECK(target_from_string("win") == Target::kWin);
  CHECK(target_from_string("end_of_session") == Target::kEndOfSession);
  CHECK(target_from_string("kda") == Target::kKda);
  CHECK_THROWS_AS(target_from_string("elo"), std::invalid_argument);
  CHECK(to_string(Target::kDeaths) == "deaths");
  CHECK(is_binary_target(Target::kWin));
  CHECK(is_binary_target(Target::kEndOfSession));
  CHECK_FALSE(is_binary_target(Target::kKda));

  // Leakage guards: a performance target excludes the features that encode it.
  CHECK(feature_exclusions(Target::kKda) == std::set<std::string>{"kills", "deaths", "assists"});
  CHECK(feature_exclusions(Target::kKills) == std::set<std::string>{"kda"});
  CHECK(feature_exclusions(Target::kWin).empty());
  CHECK(feature_exclusions(Target::kWin, true) ==
        std::set<std::string>{"kills", "deaths", "assists", "kda"});
}

}  // TEST_SUITE
