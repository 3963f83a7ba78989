#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxfactor {

// The seven playable-character categories. Fixed vocabulary; everything else
// categorical is an open dictionary built from the data.
enum class ChampionType : int {
  kController = 0,
  kFighter,
  kMage,
  kMarksman,
  kSlayer,
  kTank,
  kUniquePlaystyle,
};
inline constexpr int kNumChampionTypes = 7;

std::string_view to_string(ChampionType t);
std::optional<ChampionType> champion_type_from_string(std::string_view s);
std::string legal_champion_types();

// One user-match event.
struct MatchRecord {
  std::string user_id;
  std::string match_id;
  std::int64_t timestamp = 0;  // UTC seconds since epoch
  std::int64_t duration = 0;   // seconds, > 0
  int version_index = 0;       // 0-based chronological patch ordinal
  std::string season;
  std::string queue_type;
  std::string map_id;
  int champion_id = 0;  // 0-based
  ChampionType champion_type = ChampionType::kController;
  std::string role;
  std::string lane;
  int kills = 0;
  int deaths = 0;
  int assists = 0;
  double gold_earned = 0;
  double gold_spent = 0;
  double champion_level = 0;
  bool win = false;
};

// Maps category strings to dense indices. Values are kept sorted so the
// index assignment is a pure function of the observed value set.
class CategoricalDict {
 public:
  CategoricalDict() = default;
  static CategoricalDict from_observed(std::vector<std::string> values);

  int index_of(const std::string& value) const;  // -1 if unknown
  const std::string& value_at(int index) const;
  int size() const { return static_cast<int>(values_.size()); }
  const std::vector<std::string>& values() const { return values_; }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, int> index_;
};

// Parsed corpus plus the categorical dictionaries and declared index-space
// sizes derived from it.
struct Dataset {
  std::vector<MatchRecord> records;
  CategoricalDict users;
  CategoricalDict seasons;
  CategoricalDict queue_types;
  CategoricalDict map_ids;
  CategoricalDict roles;
  CategoricalDict lanes;
  int n_versions = 0;   // J = max version_index + 1
  int n_champions = 0;  // K = max champion_id + 1
  // champion_id -> type, taken from the records (consistent by invariant);
  // -1 for champions that never appear.
  std::vector<int> champion_types;

  int user_index(const std::string& user_id) const { return users.index_of(user_id); }
};

// The CSV header this project reads and writes.
extern const char* const kCsvHeader;

Dataset ingest(std::istream& in);
Dataset ingest_file(const std::string& path);
// Rebuilds dictionaries/dimensions from in-memory records (same validation
// as ingest, minus parsing).
Dataset dataset_from_records(std::vector<MatchRecord> records);
void write_csv(const Dataset& dataset, std::ostream& out);
void write_csv_file(const Dataset& dataset, const std::string& path);

std::vector<MatchRecord> filter_min_matches(const std::vector<MatchRecord>& records, int min_matches = 15);

double compute_kda(int kills, int deaths, int assists);

struct LabeledInstance {
  MatchRecord record;
  double kda = 0.0;
  bool end_of_session = false;
};

inline constexpr std::int64_t kDefaultSessionGapSeconds = 900;

// Labels one user's timeline. Records must be sorted by timestamp. A break
// is measured from the end of one match (timestamp + duration) to the start
// of the next; breaks shorter than the threshold keep the session alive.
std::vector<LabeledInstance> sessionize(std::span<const MatchRecord> user_records,
                                        std::int64_t gap_threshold_seconds = kDefaultSessionGapSeconds);

// Groups records by user, sorts each user's matches by time and sessionizes.
// Output order: users in dictionary order, matches in time order.
std::vector<LabeledInstance> label_all_users(const Dataset& dataset,
                                             std::int64_t gap_threshold_seconds = kDefaultSessionGapSeconds);

struct SplitSpec {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<LabeledInstance> train;
  std::vector<LabeledInstance> test;
  int single_instance_users = 0;  // users forced entirely into train
};

// Per-user random partition, deterministic under the seed. Every user with
// >= 2 instances lands in both halves; single-instance users go to train.
SplitResult split(const std::vector<LabeledInstance>& instances, const SplitSpec& spec);

enum class Target : int { kWin = 0, kEndOfSession, kKda, kKills, kDeaths, kAssists };

Target target_from_string(std::string_view s);
std::string_view to_string(Target t);
bool is_binary_target(Target t);

// Field names dropped from the decoder's raw-feature block for a target.
// `exclude_performance` additionally drops kills/deaths/assists/kda for the
// binary targets (off by default: they are legitimate features there).
std::set<std::string> feature_exclusions(Target target, bool exclude_performance = false);

}  // namespace ctxfactor
