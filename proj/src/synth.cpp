#include "ctxfactor/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ctxfactor/rng.hpp"

namespace ctxfactor {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

int digits(int n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

std::string padded_id(char prefix, int value, int width) {
  std::string body = std::to_string(value);
  std::string out(1, prefix);
  out.append(static_cast<std::size_t>(std::max(0, width - static_cast<int>(body.size()))), '0');
  out += body;
  return out;
}

void validate(const GeneratorConfig& c) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("generate: " + what);
  };
  if (c.n_users < 1 || c.n_versions < 1 || c.n_champions < 1) fail("dimensions must be >= 1");
  if (c.rank < 1) fail("rank must be >= 1");
  if (!(c.activity_prob >= 0.0 && c.activity_prob <= 1.0)) fail("activity_prob outside [0,1]");
  if (!(c.session_break_prob >= 0.0 && c.session_break_prob <= 1.0)) {
    fail("session_break_prob outside [0,1]");
  }
  if (c.min_matches_per_active_slice < 1 ||
      c.max_matches_per_active_slice < c.min_matches_per_active_slice) {
    fail("bad matches_per_active_slice range");
  }
  if (c.min_matches_per_user < 0) fail("min_matches_per_user must be >= 0");
  if (c.user_offcluster_weight < 0.0 || c.champion_offcluster_weight < 0.0) {
    fail("off-cluster weights must be >= 0");
  }
  if (!(c.fraction_specialists >= 0.0 && c.fraction_generalists >= 0.0 &&
        c.fraction_specialists + c.fraction_generalists <= 1.0)) {
    fail("specialist/generalist fractions must be >= 0 and sum to <= 1");
  }
  if (!(c.gamma_sharpen > 0.0) || !(c.gamma_flatten > 0.0)) fail("gammas must be > 0");
  if (c.continue_gap_min < 0 || c.continue_gap_max < c.continue_gap_min) fail("bad continue gap range");
  if (c.break_gap_min < 0 || c.break_gap_max < c.break_gap_min) fail("bad break gap range");
  if (c.match_duration_min < 1 || c.match_duration_max < c.match_duration_min) {
    fail("bad match duration range");
  }
  if (c.version_window_seconds < 1) fail("version_window_seconds must be >= 1");
  if (c.archetypes.size() != static_cast<std::size_t>(kNumChampionTypes)) {
    fail("archetypes must list all " + std::to_string(kNumChampionTypes) + " champion types");
  }
  for (const ArchetypeMeans& a : c.archetypes) {
    if (a.kills < 0.0 || a.deaths < 0.0 || a.assists < 0.0) fail("archetype means must be >= 0");
  }
  if (c.archetype_noise_sd < 0.0 || c.user_skill_spread < 0.0) fail("spreads must be >= 0");
}

Eigen::VectorXd raw_slice(const KruskalFactors& f, int user, int version) {
  // CP slice: q_k = sum_r U(u,r) T(j,r) F(k,r).
  return f.F * (f.U.row(user).cwiseProduct(f.T.row(version))).transpose();
}

}  // namespace

std::vector<ArchetypeMeans> default_archetypes() {
  // Ordered like ChampionType: Controller, Fighter, Mage, Marksman, Slayer,
  // Tank, UniquePlaystyle. Distinct means keep per-type performance series
  // strictly ordered (Slayer kills > ... > Controller kills).
  return {
      {3.0, 5.0, 13.0},  // Controller: enables kills, dies for the team
      {6.0, 6.0, 7.0},   // Fighter
      {7.0, 6.0, 8.0},   // Mage
      {8.0, 5.0, 7.0},   // Marksman
      {9.0, 6.0, 5.0},   // Slayer: the high-kill archetype
      {4.0, 6.0, 10.0},  // Tank
      {6.0, 6.0, 6.0},   // UniquePlaystyle
  };
}

Eigen::VectorXd slice_pick_distribution(const GroundTruth& truth, int user, int version) {
  if (user < 0 || user >= truth.factors.U.rows() || version < 0 ||
      version >= truth.factors.T.rows()) {
    throw std::out_of_range("slice_pick_distribution: user or version out of range");
  }
  Eigen::VectorXd q = raw_slice(truth.factors, user, version);
  const double gamma = truth.user_gamma[user];
  if (gamma != 1.0) q = q.array().pow(gamma).matrix();
  const double total = q.sum();
  if (!(total > 0.0)) throw std::runtime_error("slice_pick_distribution: degenerate slice");
  return q / total;
}

SynthResult generate(const GeneratorConfig& config) {
  validate(config);
  Rng rng(config.seed);
  const int n = config.n_users, J = config.n_versions, K = config.n_champions, R = config.rank;

  SynthResult out;
  GroundTruth& truth = out.truth;
  truth.factors.rank = R;
  truth.factors.U.resize(n, R);
  truth.factors.T.resize(J, R);
  truth.factors.F.resize(K, R);
  truth.user_cluster.resize(static_cast<std::size_t>(n));
  truth.champion_cluster.resize(static_cast<std::size_t>(K));

  // Planted factors: one dominant component per user and per champion, with
  // entrywise jitter so nothing is exactly degenerate. Temporal loadings are
  // smooth positive waves, phase-shifted per component.
  for (int u = 0; u < n; ++u) {
    const int cluster = static_cast<int>(rng.uniform_int(0, R - 1));
    truth.user_cluster[static_cast<std::size_t>(u)] = cluster;
    for (int r = 0; r < R; ++r) {
      const double base = r == cluster ? 1.0 : config.user_offcluster_weight;
      truth.factors.U(u, r) = base * rng.uniform(0.85, 1.15);
    }
  }
  for (int j = 0; j < J; ++j) {
    for (int r = 0; r < R; ++r) {
      const double phase = std::sin(kPi * (static_cast<double>(j) / static_cast<double>(J) +
                                           static_cast<double>(r) / static_cast<double>(R)));
      truth.factors.T(j, r) = (0.55 + 0.45 * phase * phase) * rng.uniform(0.95, 1.05);
    }
  }
  for (int k = 0; k < K; ++k) {
    const int cluster = k % R;
    truth.champion_cluster[static_cast<std::size_t>(k)] = cluster;
    for (int r = 0; r < R; ++r) {
      const double base = r == cluster ? 1.0 : config.champion_offcluster_weight;
      truth.factors.F(k, r) = base * rng.uniform(0.85, 1.15);
    }
  }

  truth.user_skill.resize(n);
  for (int u = 0; u < n; ++u) truth.user_skill[u] = rng.normal(0.0, config.user_skill_spread);

  // Pick-concentration archetypes.
  truth.user_gamma = Eigen::VectorXd::Ones(n);
  {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int n_spec = static_cast<int>(std::llround(config.fraction_specialists * n));
    const int n_gen = static_cast<int>(std::llround(config.fraction_generalists * n));
    for (int i = 0; i < n_spec; ++i) {
      const int u = order[static_cast<std::size_t>(i)];
      truth.user_gamma[u] = config.gamma_sharpen;
      truth.planted_specialists.push_back(u);
    }
    for (int i = n_spec; i < std::min(n, n_spec + n_gen); ++i) {
      const int u = order[static_cast<std::size_t>(i)];
      truth.user_gamma[u] = config.gamma_flatten;
      truth.planted_generalists.push_back(u);
    }
    std::sort(truth.planted_specialists.begin(), truth.planted_specialists.end());
    std::sort(truth.planted_generalists.begin(), truth.planted_generalists.end());
  }

  // Affinity: z-scored cosine similarity between planted user and champion
  // rows. This is the interaction signal behind the win labels.
  truth.affinity.resize(n, K);
  for (int u = 0; u < n; ++u) {
    const double nu = truth.factors.U.row(u).norm();
    for (int k = 0; k < K; ++k) {
      const double nk = truth.factors.F.row(k).norm();
      truth.affinity(u, k) = truth.factors.U.row(u).dot(truth.factors.F.row(k)) / (nu * nk);
    }
  }
  {
    const double mean = truth.affinity.mean();
    const double var = (truth.affinity.array() - mean).square().mean();
    const double sd = std::sqrt(var);
    if (sd > 1e-12) {
      truth.affinity = ((truth.affinity.array() - mean) / sd).matrix();
    } else {
      truth.affinity.setZero();
    }
  }

  // Decide slice activity and match counts first so per-user top-ups stay
  // separate from match materialization.
  std::vector<std::vector<int>> slice_matches(static_cast<std::size_t>(n),
                                              std::vector<int>(static_cast<std::size_t>(J), 0));
  for (int u = 0; u < n; ++u) {
    for (int j = 0; j < J; ++j) {
      if (rng.bernoulli(config.activity_prob)) {
        slice_matches[u][j] = static_cast<int>(rng.uniform_int(
            config.min_matches_per_active_slice, config.max_matches_per_active_slice));
      }
    }
  }
  for (int u = 0; u < n; ++u) {
    auto& row = slice_matches[static_cast<std::size_t>(u)];
    int total = std::accumulate(row.begin(), row.end(), 0);
    if (total == 0 && config.min_matches_per_user > 0) {
      row[static_cast<std::size_t>(rng.uniform_int(0, J - 1))] = 1;
      total = 1;
    }
    if (total == 0) {
      throw std::invalid_argument(
          "generate: user " + std::to_string(u) +
          " has zero active slices; raise activity_prob or min_matches_per_user");
    }
    if (total < config.min_matches_per_user) {
      std::vector<int> active;
      for (int j = 0; j < J; ++j) {
        if (row[static_cast<std::size_t>(j)] > 0) active.push_back(j);
      }
      while (total < config.min_matches_per_user) {
        const int j = active[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(active.size()) - 1))];
        ++row[static_cast<std::size_t>(j)];
        ++total;
      }
    }
  }

  const int user_width = std::max(4, digits(n - 1));
  const int champ_width = std::max(3, digits(K - 1));
  int total_matches = 0;
  for (int u = 0; u < n; ++u) {
    total_matches += std::accumulate(slice_matches[u].begin(), slice_matches[u].end(), 0);
  }
  const int match_width = std::max(6, digits(std::max(0, total_matches - 1)));

  static const char* kRoles[] = {"bottom_carry", "support", "jungler", "mid", "top"};
  static const char* kLanes[] = {"bottom", "mid", "jungle", "top"};

  out.records.reserve(static_cast<std::size_t>(total_matches));
  int match_counter = 0;
  for (int u = 0; u < n; ++u) {
    for (int j = 0; j < J; ++j) {
      const int count = slice_matches[u][j];
      if (count == 0) continue;
      const Eigen::VectorXd q = slice_pick_distribution(truth, u, j);
      std::int64_t ts = config.base_timestamp +
                        static_cast<std::int64_t>(j) * config.version_window_seconds +
                        rng.uniform_int(0, config.version_window_seconds / 4);
      for (int m = 0; m < count; ++m) {
        // Champion from the planted slice distribution.
        double pick = rng.uniform01();
        int champion = K - 1;
        for (int k = 0; k < K; ++k) {
          pick -= q[k];
          if (pick < 0.0) {
            champion = k;
            break;
          }
        }
        const int type = champion % kNumChampionTypes;
        const ArchetypeMeans& arch = config.archetypes[static_cast<std::size_t>(type)];
        const double skill = truth.user_skill[u];

        MatchRecord r;
        r.user_id = padded_id('u', u, user_width);
        r.match_id = padded_id('m', match_counter++, match_width);
        r.timestamp = ts;
        r.duration = rng.uniform_int(config.match_duration_min, config.match_duration_max);
        r.version_index = j;
        r.season = "season_" + std::to_string(2015 + j / 20);
        r.queue_type = rng.bernoulli(0.7) ? "ranked_solo" : "normal_draft";
        r.map_id = rng.bernoulli(0.9) ? "map_11" : "map_12";
        r.champion_id = champion;
        r.champion_type = static_cast<ChampionType>(type);
        r.role = rng.bernoulli(0.2) ? kRoles[rng.uniform_int(0, 4)] : kRoles[type % 5];
        r.lane = rng.bernoulli(0.2) ? kLanes[rng.uniform_int(0, 3)] : kLanes[type % 4];
        r.kills = static_cast<int>(
            std::max(0LL, std::llround(rng.normal(arch.kills + skill, config.archetype_noise_sd))));
        r.deaths = static_cast<int>(std::max(
            0LL, std::llround(rng.normal(arch.deaths - 0.5 * skill, config.archetype_noise_sd))));
        r.assists = static_cast<int>(std::max(
            0LL, std::llround(rng.normal(arch.assists + 0.5 * skill, config.archetype_noise_sd))));
        r.gold_earned = std::max(
            0.0, 8000.0 + 250.0 * (r.kills + r.assists) + rng.normal(0.0, 800.0));
        r.gold_spent = r.gold_earned * rng.uniform(0.75, 1.0);
        r.champion_level = static_cast<double>(rng.uniform_int(9, 18));
        const double logit = config.skill_weight * skill +
                             config.interaction_strength * truth.affinity(u, champion);
        r.win = rng.bernoulli(sigmoid(logit));
        out.records.push_back(std::move(r));

        if (m + 1 < count) {
          const std::int64_t gap = rng.bernoulli(config.session_break_prob)
                                       ? rng.uniform_int(config.break_gap_min, config.break_gap_max)
                                       : rng.uniform_int(config.continue_gap_min,
                                                         config.continue_gap_max);
          ts += out.records.back().duration + gap;
        }
      }
    }
  }

  // Ground-truth end-of-session labels, from the actual timeline with the
  // same end-to-start rule the pipeline uses. Records are contiguous per
  // user; cross-version placement can interleave, so sort per user by time.
  truth.end_of_session.assign(out.records.size(), 0);
  std::size_t lo = 0;
  while (lo < out.records.size()) {
    std::size_t hi = lo;
    while (hi + 1 < out.records.size() &&
           out.records[hi + 1].user_id == out.records[lo].user_id) {
      ++hi;
    }
    std::vector<std::size_t> idx(hi - lo + 1);
    std::iota(idx.begin(), idx.end(), lo);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return out.records[a].timestamp < out.records[b].timestamp;
    });
    for (std::size_t p = 0; p + 1 < idx.size(); ++p) {
      const MatchRecord& cur = out.records[idx[p]];
      const MatchRecord& next = out.records[idx[p + 1]];
      const std::int64_t break_len = next.timestamp - (cur.timestamp + cur.duration);
      truth.end_of_session[idx[p]] = break_len >= kDefaultSessionGapSeconds ? 1 : 0;
    }
    truth.end_of_session[idx.back()] = 1;
    lo = hi + 1;
  }
  return out;
}

void save_ground_truth(const GroundTruth& truth, const std::string& path) {
  auto matrix_json = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  nlohmann::json doc;
  doc["rank"] = truth.factors.rank;
  doc["factors"]["U"] = matrix_json(truth.factors.U);
  doc["factors"]["T"] = matrix_json(truth.factors.T);
  doc["factors"]["F"] = matrix_json(truth.factors.F);
  doc["affinity"] = matrix_json(truth.affinity);
  doc["user_skill"] = std::vector<double>(truth.user_skill.data(),
                                          truth.user_skill.data() + truth.user_skill.size());
  doc["user_gamma"] = std::vector<double>(truth.user_gamma.data(),
                                          truth.user_gamma.data() + truth.user_gamma.size());
  doc["user_cluster"] = truth.user_cluster;
  doc["champion_cluster"] = truth.champion_cluster;
  doc["planted_specialists"] = truth.planted_specialists;
  doc["planted_generalists"] = truth.planted_generalists;
  doc["end_of_session"] = truth.end_of_session;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_ground_truth: cannot open " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace ctxfactor
