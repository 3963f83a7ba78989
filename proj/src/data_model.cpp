#include "ctxfactor/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "ctxfactor/csv.hpp"
#include "ctxfactor/rng.hpp"

namespace ctxfactor {

namespace {

const std::string_view kChampionTypeNames[kNumChampionTypes] = {
    "Controller", "Fighter", "Mage", "Marksman", "Slayer", "Tank", "UniquePlaystyle",
};

}  // namespace

std::string_view to_string(ChampionType t) { return kChampionTypeNames[static_cast<int>(t)]; }

std::optional<ChampionType> champion_type_from_string(std::string_view s) {
  for (int i = 0; i < kNumChampionTypes; ++i) {
    if (s == kChampionTypeNames[i]) return static_cast<ChampionType>(i);
  }
  return std::nullopt;
}

std::string legal_champion_types() {
  std::string out;
  for (int i = 0; i < kNumChampionTypes; ++i) {
    if (i) out += ", ";
    out += kChampionTypeNames[i];
  }
  return out;
}

CategoricalDict CategoricalDict::from_observed(std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  CategoricalDict dict;
  dict.values_ = std::move(values);
  for (int i = 0; i < static_cast<int>(dict.values_.size()); ++i) {
    dict.index_.emplace(dict.values_[i], i);
  }
  return dict;
}

int CategoricalDict::index_of(const std::string& value) const {
  auto it = index_.find(value);
  return it == index_.end() ? -1 : it->second;
}

const std::string& CategoricalDict::value_at(int index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("CategoricalDict: index out of range");
  return values_[static_cast<std::size_t>(index)];
}

const char* const kCsvHeader =
    "user_id,match_id,timestamp,duration,version_index,season,queue_type,map_id,"
    "champion_id,champion_type,role,lane,kills,deaths,assists,gold_earned,gold_spent,"
    "champion_level,win";

namespace {

MatchRecord parse_record(const std::vector<std::string>& f, std::size_t line_no) {
  const std::string at = "line " + std::to_string(line_no);
  if (f.size() != 19) {
    throw std::runtime_error(at + ": expected 19 fields, got " + std::to_string(f.size()));
  }
  MatchRecord r;
  r.user_id = f[0];
  r.match_id = f[1];
  if (r.user_id.empty()) throw std::runtime_error(at + ": empty user_id");
  if (r.match_id.empty()) throw std::runtime_error(at + ": empty match_id");
  r.timestamp = parse_int64(f[2], at + ", timestamp");
  r.duration = parse_int64(f[3], at + ", duration");
  if (r.duration <= 0) throw std::runtime_error(at + ": duration must be > 0");
  r.version_index = static_cast<int>(parse_int64(f[4], at + ", version_index"));
  if (r.version_index < 0) throw std::runtime_error(at + ": version_index must be >= 0");
  r.season = f[5];
  r.queue_type = f[6];
  r.map_id = f[7];
  r.champion_id = static_cast<int>(parse_int64(f[8], at + ", champion_id"));
  if (r.champion_id < 0) throw std::runtime_error(at + ": champion_id must be >= 0");
  const auto type = champion_type_from_string(f[9]);
  if (!type) {
    throw std::runtime_error(at + ": unknown champion_type \"" + f[9] + "\"; legal values: " +
                             legal_champion_types());
  }
  r.champion_type = *type;
  r.role = f[10];
  r.lane = f[11];
  r.kills = static_cast<int>(parse_int64(f[12], at + ", kills"));
  r.deaths = static_cast<int>(parse_int64(f[13], at + ", deaths"));
  r.assists = static_cast<int>(parse_int64(f[14], at + ", assists"));
  if (r.kills < 0 || r.deaths < 0 || r.assists < 0) {
    throw std::runtime_error(at + ": kills, deaths and assists must be >= 0");
  }
  r.gold_earned = parse_double(f[15], at + ", gold_earned");
  r.gold_spent = parse_double(f[16], at + ", gold_spent");
  r.champion_level = parse_double(f[17], at + ", champion_level");
  if (r.gold_earned < 0 || r.gold_spent < 0 || r.champion_level < 0) {
    throw std::runtime_error(at + ": gold and champion_level must be >= 0");
  }
  const std::int64_t win = parse_int64(f[18], at + ", win");
  if (win != 0 && win != 1) throw std::runtime_error(at + ": win must be 0 or 1");
  r.win = win == 1;
  return r;
}

Dataset finalize_dataset(std::vector<MatchRecord> records) {
  Dataset ds;
  std::vector<std::string> users, seasons, queues, maps, roles, lanes;
  std::unordered_set<std::string> seen_pairs;
  seen_pairs.reserve(records.size());
  int max_version = -1, max_champion = -1;
  for (const auto& r : records) {
    if (!seen_pairs.insert(r.user_id + '\x1f' + r.match_id).second) {
      throw std::runtime_error("duplicate (user_id, match_id) pair: (" + r.user_id + ", " +
                               r.match_id + ")");
    }
    users.push_back(r.user_id);
    seasons.push_back(r.season);
    queues.push_back(r.queue_type);
    maps.push_back(r.map_id);
    roles.push_back(r.role);
    lanes.push_back(r.lane);
    max_version = std::max(max_version, r.version_index);
    max_champion = std::max(max_champion, r.champion_id);
  }
  ds.users = CategoricalDict::from_observed(std::move(users));
  ds.seasons = CategoricalDict::from_observed(std::move(seasons));
  ds.queue_types = CategoricalDict::from_observed(std::move(queues));
  ds.map_ids = CategoricalDict::from_observed(std::move(maps));
  ds.roles = CategoricalDict::from_observed(std::move(roles));
  ds.lanes = CategoricalDict::from_observed(std::move(lanes));
  ds.n_versions = max_version + 1;
  ds.n_champions = max_champion + 1;
  ds.champion_types.assign(static_cast<std::size_t>(ds.n_champions), -1);
  for (const auto& r : records) {
    int& t = ds.champion_types[static_cast<std::size_t>(r.champion_id)];
    const int seen = static_cast<int>(r.champion_type);
    if (t == -1) {
      t = seen;
    } else if (t != seen) {
      throw std::runtime_error("champion " + std::to_string(r.champion_id) +
                               " appears with conflicting champion_type values");
    }
  }
  ds.records = std::move(records);
  return ds;
}

}  // namespace

Dataset ingest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty input: missing header row");
  {
    auto header = split_csv_line(line);
    auto expected = split_csv_line(kCsvHeader);
    if (header != expected) {
      throw std::runtime_error("bad header row; expected: " + std::string(kCsvHeader));
    }
  }
  std::vector<MatchRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    records.push_back(parse_record(split_csv_line(line), line_no));
  }
  return finalize_dataset(std::move(records));
}

Dataset ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return ingest(in);
}

Dataset dataset_from_records(std::vector<MatchRecord> records) {
  for (const auto& r : records) {
    if (r.duration <= 0 || r.kills < 0 || r.deaths < 0 || r.assists < 0 || r.version_index < 0 ||
        r.champion_id < 0) {
      throw std::runtime_error("invalid record for (" + r.user_id + ", " + r.match_id + ")");
    }
  }
  return finalize_dataset(std::move(records));
}

void write_csv(const Dataset& dataset, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : dataset.records) {
    out << r.user_id << ',' << r.match_id << ',' << r.timestamp << ',' << r.duration << ','
        << r.version_index << ',' << r.season << ',' << r.queue_type << ',' << r.map_id << ','
        << r.champion_id << ',' << to_string(r.champion_type) << ',' << r.role << ',' << r.lane
        << ',' << r.kills << ',' << r.deaths << ',' << r.assists << ','
        << format_double(r.gold_earned) << ',' << format_double(r.gold_spent) << ','
        << format_double(r.champion_level) << ',' << (r.win ? 1 : 0) << '\n';
  }
}

void write_csv_file(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_csv(dataset, out);
}

std::vector<MatchRecord> filter_min_matches(const std::vector<MatchRecord>& records, int min_matches) {
  if (min_matches < 1) throw std::invalid_argument("filter_min_matches: min_matches must be >= 1");
  std::unordered_map<std::string, int> counts;
  for (const auto& r : records) ++counts[r.user_id];
  std::vector<MatchRecord> kept;
  kept.reserve(records.size());
  for (const auto& r : records) {
    if (counts[r.user_id] >= min_matches) kept.push_back(r);
  }
  return kept;
}

double compute_kda(int kills, int deaths, int assists) {
  if (kills < 0 || deaths < 0 || assists < 0) {
    throw std::invalid_argument("compute_kda: inputs must be >= 0");
  }
  return static_cast<double>(kills + assists) / static_cast<double>(deaths + 1);
}

std::vector<LabeledInstance> sessionize(std::span<const MatchRecord> user_records,
                                        std::int64_t gap_threshold_seconds) {
  std::vector<LabeledInstance> out;
  out.reserve(user_records.size());
  for (std::size_t i = 0; i < user_records.size(); ++i) {
    if (i > 0 && user_records[i].timestamp < user_records[i - 1].timestamp) {
      throw std::runtime_error("sessionize: records must be sorted by timestamp");
    }
    LabeledInstance inst;
    inst.record = user_records[i];
    inst.kda = compute_kda(inst.record.kills, inst.record.deaths, inst.record.assists);
    inst.end_of_session = true;  // provisional: last match of the timeline
    out.push_back(std::move(inst));
    if (i > 0) {
      const auto& prev = user_records[i - 1];
      const std::int64_t break_len = user_records[i].timestamp - (prev.timestamp + prev.duration);
      // A break shorter than the threshold keeps the session alive.
      out[i - 1].end_of_session = break_len >= gap_threshold_seconds;
    }
  }
  return out;
}

std::vector<LabeledInstance> label_all_users(const Dataset& dataset,
                                             std::int64_t gap_threshold_seconds) {
  std::vector<std::vector<const MatchRecord*>> per_user(static_cast<std::size_t>(dataset.users.size()));
  for (const auto& r : dataset.records) {
    per_user[static_cast<std::size_t>(dataset.user_index(r.user_id))].push_back(&r);
  }
  std::vector<LabeledInstance> out;
  out.reserve(dataset.records.size());
  std::vector<MatchRecord> timeline;
  for (auto& ptrs : per_user) {
    std::stable_sort(ptrs.begin(), ptrs.end(),
                     [](const MatchRecord* a, const MatchRecord* b) { return a->timestamp < b->timestamp; });
    timeline.clear();
    for (const auto* p : ptrs) timeline.push_back(*p);
    auto labeled = sessionize(timeline, gap_threshold_seconds);
    out.insert(out.end(), std::make_move_iterator(labeled.begin()), std::make_move_iterator(labeled.end()));
  }
  return out;
}

SplitResult split(const std::vector<LabeledInstance>& instances, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw std::invalid_argument("split: test_fraction must be in (0, 1)");
  }
  // Group instance indices by user, in deterministic (sorted user_id) order.
  std::vector<std::string> user_ids;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto [it, fresh] = by_user.try_emplace(instances[i].record.user_id);
    if (fresh) user_ids.push_back(instances[i].record.user_id);
    it->second.push_back(i);
  }
  std::sort(user_ids.begin(), user_ids.end());

  SplitResult result;
  Rng rng(spec.seed);
  std::vector<char> is_test(instances.size(), 0);
  for (const auto& uid : user_ids) {
    auto& idx = by_user[uid];
    const std::size_t n = idx.size();
    if (n == 1) {
      ++result.single_instance_users;
      std::cerr << "split: user " << uid << " has a single instance; assigned to train\n";
      continue;
    }
    std::size_t n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
    n_test = std::max<std::size_t>(std::size_t{1}, std::min(n_test, n - 1));
    rng.shuffle(idx);
    for (std::size_t t = 0; t < n_test; ++t) is_test[idx[t]] = 1;
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    (is_test[i] ? result.test : result.train).push_back(instances[i]);
  }
  return result;
}

Target target_from_string(std::string_view s) {
  if (s == "win") return Target::kWin;
  if (s == "end_of_session") return Target::kEndOfSession;
  if (s == "kda") return Target::kKda;
  if (s == "kills") return Target::kKills;
  if (s == "deaths") return Target::kDeaths;
  if (s == "assists") return Target::kAssists;
  throw std::invalid_argument("unknown target \"" + std::string(s) +
                              "\"; expected one of win, end_of_session, kda, kills, deaths, assists");
}

std::string_view to_string(Target t) {
  switch (t) {
    case Target::kWin: return "win";
    case Target::kEndOfSession: return "end_of_session";
    case Target::kKda: return "kda";
    case Target::kKills: return "kills";
    case Target::kDeaths: return "deaths";
    case Target::kAssists: return "assists";
  }
  throw std::logic_error("unreachable");
}

bool is_binary_target(Target t) { return t == Target::kWin || t == Target::kEndOfSession; }

std::set<std::string> feature_exclusions(Target target, bool exclude_performance) {
  switch (target) {
    case Target::kKills:
    case Target::kDeaths:
    case Target::kAssists:
      return {"kda"};
    case Target::kKda:
      return {"kills", "deaths", "assists"};
    case Target::kWin:
    case Target::kEndOfSession:
      if (exclude_performance) return {"kills", "deaths", "assists", "kda"};
      return {};
  }
  throw std::logic_error("unreachable");
}

}  // namespace ctxfactor
