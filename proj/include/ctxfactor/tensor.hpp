#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxfactor/data_model.hpp"

namespace ctxfactor {

struct TensorEntry {
  int i = 0;
  int j = 0;
  int k = 0;
  double value = 0.0;
};

// COO-form 3-way tensor with a slice-level observation mask: cell (i,j,k) is
// observed iff slice (i,j) is observed. Zeros inside observed slices are
// implicit (real observed zeros, not stored), so memory stays
// O(nonzeros + slices).
class SparseMaskedTensor {
 public:
  // Entries whose slice is not observed are stored but excluded from every
  // masked computation; build_tensor never produces them (validate() rejects
  // them), but the constructor tolerates them so that insensitivity to
  // unobserved cells is testable.
  SparseMaskedTensor(int dim_i, int dim_j, int dim_k, std::vector<TensorEntry> entries,
                     std::vector<std::pair<int, int>> observed_slices);

  int dim_i() const { return dim_i_; }
  int dim_j() const { return dim_j_; }
  int dim_k() const { return dim_k_; }

  const std::vector<TensorEntry>& entries() const { return entries_; }
  const std::vector<std::pair<int, int>>& observed_slices() const { return observed_slices_; }

  bool is_observed(int i, int j) const;
  // Value of an observed cell (0 when not stored). Throws for cells in
  // unobserved slices, which have no value.
  double value_at(int i, int j, int k) const;

  // Nonzero entries of the s-th observed slice.
  std::span<const TensorEntry> slice_nonzeros(std::size_t s) const;

  std::size_t n_observed_cells() const { return observed_slices_.size() * static_cast<std::size_t>(dim_k_); }

  // Frobenius norm over observed cells.
  double norm_observed() const;

  // Full invariant check: every entry lies in an observed slice, and every
  // observed slice sums to 1 within 1e-9.
  void validate() const;

 private:
  int dim_i_, dim_j_, dim_k_;
  std::vector<TensorEntry> entries_;                   // sorted by (i, j, k)
  std::vector<std::pair<int, int>> observed_slices_;   // sorted, unique
  // Per observed slice: [begin, end) range into entries_.
  std::vector<std::pair<std::size_t, std::size_t>> slice_ranges_;
};

// Builds the user x version x champion proportion tensor from (a subset of)
// a dataset's records: each observed (user, version) slice is that user's
// champion-pick distribution in that version.
SparseMaskedTensor build_tensor(const Dataset& dataset, std::span<const MatchRecord> records);
SparseMaskedTensor build_tensor(const Dataset& dataset);

// Fraction of observed cells.
double density(const SparseMaskedTensor& tensor);

// Text export: "i j k value" lines plus a sidecar of observed "i j" pairs.
void export_tensor(const SparseMaskedTensor& tensor, const std::string& values_path,
                   const std::string& slices_path);

}  // namespace ctxfactor
