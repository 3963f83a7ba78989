#include "ctxfactor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ctxfactor/csv.hpp"

namespace ctxfactor {

SparseMaskedTensor::SparseMaskedTensor(int dim_i, int dim_j, int dim_k,
                                       std::vector<TensorEntry> entries,
                                       std::vector<std::pair<int, int>> observed_slices)
    : dim_i_(dim_i), dim_j_(dim_j), dim_k_(dim_k), entries_(std::move(entries)),
      observed_slices_(std::move(observed_slices)) {
  if (dim_i_ <= 0 || dim_j_ <= 0 || dim_k_ <= 0) {
    throw std::invalid_argument("SparseMaskedTensor: dimensions must be positive");
  }
  for (const auto& [i, j] : observed_slices_) {
    if (i < 0 || i >= dim_i_ || j < 0 || j >= dim_j_) {
      throw std::out_of_range("SparseMaskedTensor: observed slice index out of range");
    }
  }
  std::sort(observed_slices_.begin(), observed_slices_.end());
  observed_slices_.erase(std::unique(observed_slices_.begin(), observed_slices_.end()),
                         observed_slices_.end());
  for (const auto& e : entries_) {
    if (e.i < 0 || e.i >= dim_i_ || e.j < 0 || e.j >= dim_j_ || e.k < 0 || e.k >= dim_k_) {
      throw std::out_of_range("SparseMaskedTensor: entry index out of range");
    }
  }
  std::sort(entries_.begin(), entries_.end(), [](const TensorEntry& a, const TensorEntry& b) {
    if (a.i != b.i) return a.i < b.i;
    if (a.j != b.j) return a.j < b.j;
    return a.k < b.k;
  });
  for (std::size_t n = 1; n < entries_.size(); ++n) {
    const auto& a = entries_[n - 1];
    const auto& b = entries_[n];
    if (a.i == b.i && a.j == b.j && a.k == b.k) {
      throw std::invalid_argument("SparseMaskedTensor: duplicate (i, j, k) entry");
    }
  }
  // Index entry ranges per observed slice; entries in unobserved slices are
  // left out of every range.
  slice_ranges_.resize(observed_slices_.size());
  std::size_t pos = 0;
  for (std::size_t s = 0; s < observed_slices_.size(); ++s) {
    const auto [si, sj] = observed_slices_[s];
    while (pos < entries_.size() &&
           (entries_[pos].i < si || (entries_[pos].i == si && entries_[pos].j < sj))) {
      ++pos;
    }
    const std::size_t begin = pos;
    while (pos < entries_.size() && entries_[pos].i == si && entries_[pos].j == sj) ++pos;
    slice_ranges_[s] = {begin, pos};
  }
}

bool SparseMaskedTensor::is_observed(int i, int j) const {
  return std::binary_search(observed_slices_.begin(), observed_slices_.end(), std::make_pair(i, j));
}

double SparseMaskedTensor::value_at(int i, int j, int k) const {
  if (i < 0 || i >= dim_i_ || j < 0 || j >= dim_j_ || k < 0 || k >= dim_k_) {
    throw std::out_of_range("value_at: index out of range");
  }
  if (!is_observed(i, j)) throw std::invalid_argument("value_at: slice is unobserved");
  TensorEntry probe{i, j, k, 0.0};
  auto it = std::lower_bound(entries_.begin(), entries_.end(), probe,
                             [](const TensorEntry& a, const TensorEntry& b) {
                               if (a.i != b.i) return a.i < b.i;
                               if (a.j != b.j) return a.j < b.j;
                               return a.k < b.k;
                             });
  if (it != entries_.end() && it->i == i && it->j == j && it->k == k) return it->value;
  return 0.0;
}

std::span<const TensorEntry> SparseMaskedTensor::slice_nonzeros(std::size_t s) const {
  const auto [begin, end] = slice_ranges_.at(s);
  return {entries_.data() + begin, end - begin};
}

double SparseMaskedTensor::norm_observed() const {
  double sum = 0.0;
  for (std::size_t s = 0; s < observed_slices_.size(); ++s) {
    for (const auto& e : slice_nonzeros(s)) sum += e.value * e.value;
  }
  return std::sqrt(sum);
}

void SparseMaskedTensor::validate() const {
  std::size_t in_range = 0;
  for (const auto& r : slice_ranges_) in_range += r.second - r.first;
  if (in_range != entries_.size()) {
    throw std::runtime_error("SparseMaskedTensor: entry outside every observed slice");
  }
  for (std::size_t s = 0; s < observed_slices_.size(); ++s) {
    double sum = 0.0;
    for (const auto& e : slice_nonzeros(s)) {
      if (e.value < 0.0 || e.value > 1.0) {
        throw std::runtime_error("SparseMaskedTensor: entry value outside [0, 1]");
      }
      sum += e.value;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::runtime_error("SparseMaskedTensor: observed slice does not sum to 1");
    }
  }
}

SparseMaskedTensor build_tensor(const Dataset& dataset, std::span<const MatchRecord> records) {
  if (records.empty()) throw std::invalid_argument("build_tensor: no records");
  const int I = dataset.users.size();
  const int J = dataset.n_versions;
  const int K = dataset.n_champions;
  // Count per cell and per slice; the ordered map fixes output order
  // independently of record order.
  std::map<std::tuple<int, int, int>, std::int64_t> cell_counts;
  std::map<std::pair<int, int>, std::int64_t> slice_counts;
  for (const auto& r : records) {
    const int i = dataset.user_index(r.user_id);
    if (i < 0) throw std::out_of_range("build_tensor: user not in dataset dictionary");
    if (r.version_index >= J || r.champion_id >= K) {
      throw std::out_of_range("build_tensor: version or champion index out of declared range");
    }
    ++cell_counts[{i, r.version_index, r.champion_id}];
    ++slice_counts[{i, r.version_index}];
  }
  std::vector<TensorEntry> entries;
  entries.reserve(cell_counts.size());
  for (const auto& [key, count] : cell_counts) {
    const auto [i, j, k] = key;
    entries.push_back({i, j, k, static_cast<double>(count) /
                                    static_cast<double>(slice_counts.at({i, j}))});
  }
  std::vector<std::pair<int, int>> slices;
  slices.reserve(slice_counts.size());
  for (const auto& [slice, count] : slice_counts) slices.push_back(slice);
  SparseMaskedTensor tensor(I, J, K, std::move(entries), std::move(slices));
  tensor.validate();
  return tensor;
}

SparseMaskedTensor build_tensor(const Dataset& dataset) {
  return build_tensor(dataset, dataset.records);
}

double density(const SparseMaskedTensor& tensor) {
  return static_cast<double>(tensor.observed_slices().size()) /
         (static_cast<double>(tensor.dim_i()) * static_cast<double>(tensor.dim_j()));
}

void export_tensor(const SparseMaskedTensor& tensor, const std::string& values_path,
                   const std::string& slices_path) {
  std::ofstream values(values_path);
  if (!values) throw std::runtime_error("cannot open " + values_path + " for writing");
  for (const auto& e : tensor.entries()) {
    values << e.i << ' ' << e.j << ' ' << e.k << ' ' << format_double(e.value) << '\n';
  }
  std::ofstream slices(slices_path);
  if (!slices) throw std::runtime_error("cannot open " + slices_path + " for writing");
  for (const auto& [i, j] : tensor.observed_slices()) slices << i << ' ' << j << '\n';
}

}  // namespace ctxfactor
