#pragma once

#include <cstdint>
#include <vector>

#include "recap/histories.hpp"

namespace recap {

enum class Alphabet { kObserved, kLatentError, kLatentCapture };

// Nonnegative integer counts over one history alphabet. All constraint
// arithmetic is exact integer arithmetic.
struct CountVector {
  Alphabet alphabet = Alphabet::kObserved;
  std::vector<std::int64_t> counts;

  std::int64_t total() const;
  bool nonnegative() const;

  friend bool operator==(const CountVector&, const CountVector&) = default;
};

CountVector zero_counts(Alphabet a, const HistoryUniverse& universe);

// Observed counts followed by T-1 structural zeros (the per-occasion
// false-negative/false-positive balance targets).
struct ExtendedCounts {
  std::vector<std::int64_t> values;
  std::size_t observed_len = 0;  // leading entries that hold the observed counts
};

// Sparse, per-latent-column view of the stacked constraint matrix and of the
// capture-collapse matrix. Column j of the observation block has a single 1
// in row observed_image[j]; the balance block contributes -1 at the occasions
// in false_neg_mask[j] and +1 at those in false_pos_mask[j]; the capture
// matrix has a single 1 in row capture_image[j].
class ConstraintSystem {
 public:
  explicit ConstraintSystem(const HistoryUniverse& universe);

  const HistoryUniverse& universe() const { return *universe_; }
  std::size_t latent_size() const { return observed_image_.size(); }

  std::uint32_t observed_image(std::size_t j) const { return observed_image_[j]; }
  std::uint32_t capture_image(std::size_t j) const { return capture_image_[j]; }
  std::uint32_t false_neg_mask(std::size_t j) const { return false_neg_mask_[j]; }
  std::uint32_t false_pos_mask(std::size_t j) const { return false_pos_mask_[j]; }

  bool has_false_neg(std::size_t j, int t) const {
    return (false_neg_mask_[j] >> (t - 1)) & 1u;
  }
  bool has_false_pos(std::size_t j, int t) const {
    return (false_pos_mask_[j] >> (t - 1)) & 1u;
  }

  // Dense matrices, for tests and small instances only.
  std::vector<std::vector<int>> dense_observation_matrix() const;  // (I+T-1) x J stacked
  std::vector<std::vector<int>> dense_collapse_matrix() const;     // I x J
  std::vector<std::vector<int>> dense_balance_matrix() const;      // (T-1) x J
  std::vector<std::vector<int>> dense_capture_matrix() const;      // K x J

 private:
  const HistoryUniverse* universe_;
  std::vector<std::uint32_t> observed_image_;
  std::vector<std::uint32_t> capture_image_;
  std::vector<std::uint32_t> false_neg_mask_;
  std::vector<std::uint32_t> false_pos_mask_;
};

ConstraintSystem build_constraints(const HistoryUniverse& universe);

ExtendedCounts extend_counts(const CountVector& observed, const HistoryUniverse& universe);

// True iff the latent error counts reproduce the extended observed counts
// exactly and are nonnegative.
bool in_fibre(const CountVector& error_counts, const ExtendedCounts& target,
              const ConstraintSystem& sys);

// The unique fibre element without any misidentification events: each
// observed history's count carried over to its identically-patterned latent
// history.
CountVector zero_error_config(const CountVector& observed, const HistoryUniverse& universe);

// z = B x.
CountVector apply_capture_map(const CountVector& error_counts, const ConstraintSystem& sys);

// Releases per occasion derived from observed first captures: index t holds
// the number of histories with marking occasion t (length T+1, entry 0 and T
// always zero).
std::vector<std::int64_t> releases_from_observed(const CountVector& observed,
                                                 const HistoryUniverse& universe);

}  // namespace recap
