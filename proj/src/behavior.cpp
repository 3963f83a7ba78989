#include "ctxfactor/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ctxfactor {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string_view to_string(PlayerClass c) {
  switch (c) {
    case PlayerClass::kNeither: return "neither";
    case PlayerClass::kGeneralist: return "generalist";
    case PlayerClass::kSpecialist: return "specialist";
  }
  return "neither";
}

double champion_entropy(const Eigen::VectorXd& distribution) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < distribution.size(); ++i) {
    const double p = distribution[i];
    if (p < 0.0) throw std::invalid_argument("champion_entropy: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("champion_entropy: distribution sums to " + std::to_string(sum) +
                                ", expected 1");
  }
  double h = 0.0;
  for (Eigen::Index i = 0; i < distribution.size(); ++i) {
    const double p = distribution[i];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::vector<UserProfile> build_profiles(const Dataset& dataset) {
  const int n_users = dataset.users.size();
  std::vector<UserProfile> profiles(n_users);
  std::vector<std::set<std::int64_t>> days(n_users);
  Eigen::MatrixXd type_counts = Eigen::MatrixXd::Zero(n_users, kNumChampionTypes);

  for (const MatchRecord& r : dataset.records) {
    const int i = dataset.user_index(r.user_id);
    const int type = dataset.champion_types.at(static_cast<std::size_t>(r.champion_id));
    if (type < 0 || type >= kNumChampionTypes) {
      throw std::runtime_error("build_profiles: champion " + std::to_string(r.champion_id) +
                               " has no known type");
    }
    type_counts(i, type) += 1.0;
    // Calendar day in UTC; timestamps are epoch seconds.
    std::int64_t day = r.timestamp / 86400;
    if (r.timestamp < 0 && r.timestamp % 86400 != 0) --day;
    days[static_cast<std::size_t>(i)].insert(day);
    ++profiles[static_cast<std::size_t>(i)].n_matches;
  }

  for (int i = 0; i < n_users; ++i) {
    UserProfile& p = profiles[static_cast<std::size_t>(i)];
    p.user_id = dataset.users.value_at(i);
    p.days_online = static_cast<int>(days[static_cast<std::size_t>(i)].size());
    const double total = type_counts.row(i).sum();
    if (total > 0.0) {
      p.champion_type_distribution = type_counts.row(i).transpose() / total;
    } else {
      // Dictionary users always have at least one record, but keep the
      // degenerate case well-defined.
      p.champion_type_distribution = Eigen::VectorXd::Zero(kNumChampionTypes);
      p.champion_type_distribution[0] = 1.0;
    }
    p.entropy = champion_entropy(p.champion_type_distribution);
  }
  return profiles;
}

void classify_generalists_specialists(std::vector<UserProfile>& profiles) {
  const std::size_t n = profiles.size();
  if (n < 10) {
    throw std::invalid_argument("classify_generalists_specialists: need at least 10 profiles, got " +
                                std::to_string(n));
  }
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = profiles[i].entropy;
  std::sort(sorted.begin(), sorted.end());

  // Nearest-rank decile marks, counted inward from each end so a corpus of
  // 10 distinct values yields exactly one user per tail.
  const std::size_t tail = (n + 9) / 10;  // ceil(n/10)
  const double bottom_mark = sorted[tail - 1];
  const double top_mark = sorted[n - tail];

  for (UserProfile& p : profiles) {
    const bool specialist = p.entropy <= bottom_mark;
    const bool generalist = p.entropy >= top_mark;
    if (specialist == generalist) {
      p.player_class = PlayerClass::kNeither;  // both or neither
    } else {
      p.player_class = specialist ? PlayerClass::kSpecialist : PlayerClass::kGeneralist;
    }
  }
}

std::vector<int> component_labels(const Eigen::MatrixXd& factor, double threshold) {
  std::vector<int> labels(static_cast<std::size_t>(factor.rows()), -1);
  for (Eigen::Index i = 0; i < factor.rows(); ++i) {
    const double total = factor.row(i).sum();
    if (!(total > 0.0)) continue;
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < factor.cols(); ++c) {
      if (factor(i, c) > factor(i, best)) best = c;  // lowest index wins ties
    }
    if (factor(i, best) / total >= threshold) labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

void assign_component_labels(std::vector<UserProfile>& profiles, const Eigen::MatrixXd& U,
                             double threshold) {
  if (static_cast<Eigen::Index>(profiles.size()) != U.rows()) {
    throw std::invalid_argument("assign_component_labels: profile count != factor rows");
  }
  const std::vector<int> labels = component_labels(U, threshold);
  for (std::size_t i = 0; i < profiles.size(); ++i) profiles[i].component_label = labels[i];
}

ActivationTable champion_type_activation(const Eigen::MatrixXd& F,
                                         const std::vector<int>& champion_types,
                                         double coverage, bool squared_variant) {
  if (static_cast<Eigen::Index>(champion_types.size()) != F.rows()) {
    throw std::invalid_argument("champion_type_activation: type list length != champion rows");
  }
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    throw std::invalid_argument("champion_type_activation: coverage must be in (0, 1]");
  }
  const Eigen::Index rank = F.cols();
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(kNumChampionTypes, rank);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(kNumChampionTypes);
  for (Eigen::Index k = 0; k < F.rows(); ++k) {
    const int type = champion_types[static_cast<std::size_t>(k)];
    if (type < 0 || type >= kNumChampionTypes) {
      throw std::invalid_argument("champion_type_activation: champion " + std::to_string(k) +
                                  " has no known type");
    }
    table.row(type) += F.row(k);
    counts[type] += 1.0;
  }
  for (int t = 0; t < kNumChampionTypes; ++t) {
    if (counts[t] > 0.0) table.row(t) /= counts[t];
  }
  for (Eigen::Index c = 0; c < rank; ++c) {
    const double s = table.col(c).sum();
    if (s > 0.0) table.col(c) /= s;
  }

  ActivationTable out;
  out.normalized = table;
  out.masked = Eigen::MatrixXd::Zero(kNumChampionTypes, rank);
  for (int t = 0; t < kNumChampionTypes; ++t) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rank));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return table(t, a) > table(t, b); });
    double total = 0.0;
    for (Eigen::Index c = 0; c < rank; ++c) {
      const double v = table(t, c);
      total += squared_variant ? v * v : v;
    }
    if (!(total > 0.0)) continue;
    // Keep the sorted prefix whose mass first reaches `coverage` of the row
    // (tiny slack so an exact boundary is not lost to rounding).
    const double needed = total * coverage - 1e-12 * total;
    double cum = 0.0;
    for (Eigen::Index pos = 0; pos < rank; ++pos) {
      const double v = table(t, order[static_cast<std::size_t>(pos)]);
      out.masked(t, order[static_cast<std::size_t>(pos)]) = v;
      cum += squared_variant ? v * v : v;
      if (cum >= needed) break;
    }
  }
  return out;
}

PickRateTable pick_rates(const Dataset& dataset) {
  std::map<int, Eigen::VectorXd> counts;  // version -> per-champion counts
  for (const MatchRecord& r : dataset.records) {
    auto [it, fresh] = counts.try_emplace(r.version_index,
                                          Eigen::VectorXd::Zero(dataset.n_champions));
    it->second[r.champion_id] += 1.0;
  }
  PickRateTable out;
  out.versions.reserve(counts.size());
  out.rates.resize(dataset.n_champions, static_cast<Eigen::Index>(counts.size()));
  Eigen::Index col = 0;
  for (const auto& [version, vec] : counts) {
    out.versions.push_back(version);
    out.rates.col(col++) = vec / vec.sum();
  }
  return out;
}

EngagementSummary engagement_summary(const Dataset& dataset,
                                     const std::vector<UserProfile>& profiles) {
  if (static_cast<int>(profiles.size()) != dataset.users.size()) {
    throw std::invalid_argument("engagement_summary: profile count != dataset users");
  }
  std::set<int> label_set;
  for (const UserProfile& p : profiles) label_set.insert(p.component_label);
  std::set<int> version_set;
  for (const MatchRecord& r : dataset.records) version_set.insert(r.version_index);

  EngagementSummary out;
  out.labels.assign(label_set.begin(), label_set.end());
  out.versions.assign(version_set.begin(), version_set.end());

  std::map<int, int> label_row, version_col;
  for (std::size_t i = 0; i < out.labels.size(); ++i) label_row[out.labels[i]] = static_cast<int>(i);
  for (std::size_t j = 0; j < out.versions.size(); ++j) version_col[out.versions[j]] = static_cast<int>(j);

  const Eigen::Index L = static_cast<Eigen::Index>(out.labels.size());
  const Eigen::Index V = static_cast<Eigen::Index>(out.versions.size());
  Eigen::MatrixXd matches = Eigen::MatrixXd::Zero(L, V);
  // Active users per (label, version) counted via per-user version sets.
  std::vector<std::set<int>> user_versions(profiles.size());
  for (const MatchRecord& r : dataset.records) {
    const int i = dataset.user_index(r.user_id);
    const int row = label_row.at(profiles[static_cast<std::size_t>(i)].component_label);
    matches(row, version_col.at(r.version_index)) += 1.0;
    user_versions[static_cast<std::size_t>(i)].insert(r.version_index);
  }
  Eigen::MatrixXd active = Eigen::MatrixXd::Zero(L, V);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const int row = label_row.at(profiles[i].component_label);
    for (int v : user_versions[i]) active(row, version_col.at(v)) += 1.0;
  }
  out.matches_per_active_user = Eigen::MatrixXd::Constant(L, V, kNaN);
  for (Eigen::Index l = 0; l < L; ++l) {
    for (Eigen::Index v = 0; v < V; ++v) {
      if (active(l, v) > 0.0) out.matches_per_active_user(l, v) = matches(l, v) / active(l, v);
    }
  }
  for (const UserProfile& p : profiles) {
    out.days_online_by_label[p.component_label].push_back(p.days_online);
  }
  return out;
}

PerformanceByType performance_by_type(const Dataset& dataset) {
  std::set<int> version_set;
  for (const MatchRecord& r : dataset.records) version_set.insert(r.version_index);
  PerformanceByType out;
  out.versions.assign(version_set.begin(), version_set.end());
  std::map<int, int> version_col;
  for (std::size_t j = 0; j < out.versions.size(); ++j) version_col[out.versions[j]] = static_cast<int>(j);

  const Eigen::Index V = static_cast<Eigen::Index>(out.versions.size());
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(kNumChampionTypes, V);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(kNumChampionTypes, V);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(kNumChampionTypes, V);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(kNumChampionTypes, V);
  Eigen::MatrixXd r_ = Eigen::MatrixXd::Zero(kNumChampionTypes, V);
  for (const MatchRecord& rec : dataset.records) {
    const int t = static_cast<int>(rec.champion_type);
    const int v = version_col.at(rec.version_index);
    n(t, v) += 1.0;
    k(t, v) += rec.kills;
    d(t, v) += rec.deaths;
    a(t, v) += rec.assists;
    r_(t, v) += compute_kda(rec.kills, rec.deaths, rec.assists);
  }
  auto mean_or_nan = [&](const Eigen::MatrixXd& sum) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(kNumChampionTypes, V, kNaN);
    for (Eigen::Index t = 0; t < kNumChampionTypes; ++t) {
      for (Eigen::Index v = 0; v < V; ++v) {
        if (n(t, v) > 0.0) m(t, v) = sum(t, v) / n(t, v);
      }
    }
    return m;
  };
  out.kills = mean_or_nan(k);
  out.deaths = mean_or_nan(d);
  out.assists = mean_or_nan(a);
  out.kda = mean_or_nan(r_);
  return out;
}

std::vector<double> moving_average(const std::vector<double>& series, int window) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("moving_average: window must be odd and >= 1");
  }
  const int n = static_cast<int>(series.size());
  const int half = window / 2;
  std::vector<double> out(series.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += series[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("pearson: need at least two points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

Eigen::MatrixXd labeled_pick_rate_series(const PickRateTable& table,
                                         const std::vector<int>& champion_labels, int rank) {
  if (static_cast<Eigen::Index>(champion_labels.size()) != table.rates.rows()) {
    throw std::invalid_argument("labeled_pick_rate_series: label count != champion rows");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rank, table.rates.cols());
  for (Eigen::Index k = 0; k < table.rates.rows(); ++k) {
    const int c = champion_labels[static_cast<std::size_t>(k)];
    if (c >= 0 && c < rank) out.row(c) += table.rates.row(k);
  }
  return out;
}

std::vector<double> pickrate_activation_correlation(const Eigen::MatrixXd& T,
                                                    const PickRateTable& table,
                                                    const std::vector<int>& champion_labels) {
  const int rank = static_cast<int>(T.cols());
  const Eigen::MatrixXd series = labeled_pick_rate_series(table, champion_labels, rank);
  std::vector<double> out(static_cast<std::size_t>(rank), kNaN);
  for (int c = 0; c < rank; ++c) {
    std::vector<double> activation, rate;
    activation.reserve(table.versions.size());
    rate.reserve(table.versions.size());
    for (std::size_t j = 0; j < table.versions.size(); ++j) {
      const int v = table.versions[j];
      if (v < 0 || v >= T.rows()) {
        throw std::invalid_argument("pickrate_activation_correlation: version out of range of T");
      }
      activation.push_back(T(v, c));
      rate.push_back(series(c, static_cast<Eigen::Index>(j)));
    }
    try {
      out[static_cast<std::size_t>(c)] = pearson(activation, rate);
    } catch (const std::invalid_argument&) {
      // zero variance (e.g. no champion carries this label) -> NaN
    }
  }
  return out;
}

}  // namespace ctxfactor
