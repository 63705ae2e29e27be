#pragma once

#include <cstdint>
#include <vector>

#include "recap/constraints.hpp"
#include "recap/histories.hpp"
#include "recap/logprob.hpp"

namespace recap {

// Capture-recapture parameters, occasion-indexed with slot 0 unused.
// survival[t] is the probability of surviving from occasion t to t+1
// (t = 1..T-1); capture[t] the probability a live marked individual is
// resighted on occasion t (t = 2..T). survival[T] and capture[1] are ignored.
struct CaptureParams {
  std::vector<double> survival;
  std::vector<double> capture;

  static CaptureParams constant(int num_occasions, double phi, double p);

  int num_occasions() const { return static_cast<int>(survival.size()) - 1; }
  bool valid() const;
};

// Identification model: a resighting of a marked individual is recorded
// against the right identity with probability alpha.
struct ErrorParam {
  double alpha = 1.0;
  bool estimated = false;  // sample alpha under a Beta prior instead of fixing it
  double beta_a = 19.0;
  double beta_b = 1.0;

  bool valid() const {
    return alpha >= 0.0 && alpha <= 1.0 && (!estimated || (beta_a > 0.0 && beta_b > 0.0));
  }
};

// Per-occasion totals entering the error-model density. Occasion-indexed,
// length T+1, slot 0 unused. Everything except `errors` is determined by the
// observed data alone and is constant across a fibre.
struct SufficientStats {
  std::vector<std::int64_t> releases;       // newly marked at t
  std::vector<std::int64_t> marked_before;  // marked strictly before t
  std::vector<std::int64_t> resightings;    // marked individuals resighted at t
  std::vector<std::int64_t> max_errors;     // min(resightings, marked_before - resightings)
  std::vector<std::int64_t> errors;         // false negatives at t in the current x

  int num_occasions() const { return static_cast<int>(releases.size()) - 1; }
  bool feasible() const;  // 0 <= errors[t] <= max_errors[t] for t = 2..T
};

// log probability of one capture history under the open-population survival
// model, conditioned on first capture. -inf when a required factor is zero.
double cjs_history_logprob(const History& capture_history, const CaptureParams& theta);

// chi[t] = P(never resighted after occasion t | alive at t); chi[T] = 1.
std::vector<double> cjs_chi(const CaptureParams& theta);

// cjs_history_logprob for every capture history, in canonical order.
std::vector<double> cjs_log_table(const HistoryUniverse& universe, const CaptureParams& theta);

// Category totals that reduce sum_k z_k log pr(xi_k) to an O(T) dot product:
// alive[t] survival transitions t -> t+1 inside sighting spans, seen[t]
// resightings, missed[t] in-span misses, last[t] histories whose final
// sighting is occasion t.
struct CjsAggregates {
  std::vector<std::int64_t> alive;
  std::vector<std::int64_t> seen;
  std::vector<std::int64_t> missed;
  std::vector<std::int64_t> last;

  static CjsAggregates zero(int num_occasions);
  static CjsAggregates from_counts(const CountVector& z, const HistoryUniverse& universe);

  // Adds `count` copies of capture history k; negative counts remove.
  void add_history(const HistoryUniverse& universe, std::size_t k, std::int64_t count);

  double loglik(const CaptureParams& theta) const;
};

// log pi(z | theta1): product multinomial over release cohorts. -inf when the
// cohort totals disagree with the releases or z has negative entries.
double log_pi_z(const CountVector& z, const std::vector<double>& cjs_table,
                const SufficientStats& stats, const HistoryUniverse& universe,
                const LogFactorials& lf);

// log of the normalizing constant of the truncated binomial error-count law.
double log_trunc_binom_norm(std::int64_t resighted, std::int64_t marked, double alpha,
                            const LogFactorials& lf);

// log P(E_t = errors) under the truncated binomial; -inf outside 0..m*.
double log_trunc_binom(std::int64_t errors, std::int64_t resighted, std::int64_t marked,
                       double alpha, const LogFactorials& lf);

// Occasion factor of log pi(x | z, alpha): error-count mass times the uniform
// probability of the specific false-negative/false-positive assignment.
double log_error_factor(std::int64_t errors, std::int64_t resighted, std::int64_t marked,
                        double alpha, double log_norm, const LogFactorials& lf);
double log_error_factor(std::int64_t errors, std::int64_t resighted, std::int64_t marked,
                        double alpha, const LogFactorials& lf);

// log pi(x | z, alpha). -inf unless z = B x, x >= 0, and every e_t <= m*_t.
double log_pi_x_given_z(const CountVector& x, const CountVector& z, double alpha,
                        const SufficientStats& stats, const ConstraintSystem& sys,
                        const LogFactorials& lf);

// Builds the per-occasion totals for configuration x with captures z = B x.
SufficientStats stats_from(const CountVector& x, const CountVector& z,
                           const std::vector<std::int64_t>& releases,
                           const ConstraintSystem& sys);

// log pi(z | theta1) + log pi(x | z, alpha) on the fibre of n_ext, else -inf.
// Priors are not included.
double log_joint(const CountVector& x, const CountVector& z, const CaptureParams& theta1,
                 const ErrorParam& theta2, const ExtendedCounts& n_ext,
                 const ConstraintSystem& sys, const LogFactorials& lf);

// Independent Uniform(0,1) priors on every survival and capture parameter;
// Beta(a,b) on alpha when it is estimated.
double log_prior(const CaptureParams& theta1, const ErrorParam& theta2);

}  // namespace recap
