#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recap/basis.hpp"
#include "recap/constraints.hpp"
#include "recap/histories.hpp"
#include "recap/model.hpp"
#include "recap/rng.hpp"

namespace recap {

// One dataset bound to its combinatorial machinery, shared read-only by any
// number of chains.
struct Problem {
  const HistoryUniverse* universe = nullptr;
  const ConstraintSystem* sys = nullptr;
  const MoveTables* tables = nullptr;
  CountVector observed;
  ExtendedCounts target;
  std::vector<std::int64_t> releases;
  SufficientStats base;                   // errors slot all zero; the rest is data
  double log_marking_multiplicity = 0.0;  // sum_t log a_t!

  int num_occasions() const { return universe->num_occasions(); }
};

Problem make_problem(const CountVector& observed, const HistoryUniverse& universe,
                     const ConstraintSystem& sys, const MoveTables& tables);

enum class Algorithm { kDynamic, kFixedBasis };
enum class ParamMode { kFixed, kConstant, kPerOccasion };

struct SamplerConfig {
  Algorithm algorithm = Algorithm::kDynamic;
  std::int64_t iterations = 20000;
  std::int64_t burnin = 2000;
  std::int64_t thin = 1;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;

  bool update_latent = true;
  int latent_steps_per_iter = 1;

  ParamMode survival_mode = ParamMode::kConstant;
  ParamMode capture_mode = ParamMode::kConstant;
  bool estimate_alpha = false;

  // Empty survival vector means start every estimated probability at 0.5.
  CaptureParams theta_start;
  ErrorParam error_start;

  double initial_step = 0.5;  // logit-scale random-walk scale
  bool adapt = true;          // Robbins-Monro during burnin, frozen afterwards

  bool track_configs = true;                // histogram of retained configurations
  std::int64_t invariant_check_stride = 0;  // full-state audit period, 0 = off

  int fixed_basis_occasion_cap = 4;

  bool valid() const {
    return iterations > 0 && burnin >= 0 && burnin < iterations && thin >= 1 &&
           latent_steps_per_iter >= 0 && initial_step > 0.0 && error_start.valid();
  }
};

// Scalar updated by one logit-scale random walk: a shared value applied to a
// set of occasions of one parameter family.
struct ThetaBlock {
  enum class Family { kSurvival, kCapture, kError };

  Family family = Family::kSurvival;
  std::vector<int> occasions;
  std::string name;
  double step = 0.5;
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;

  double acceptance() const {
    return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

struct Diagnostics {
  std::int64_t latent_proposed = 0;
  std::int64_t latent_accepted = 0;
  std::int64_t latent_dead_end = 0;    // dynamic draw found no move
  std::int64_t latent_infeasible = 0;  // fixed-basis proposal left the support
  std::int64_t invariant_violations = 0;
  std::size_t distinct_configs = 0;
  std::vector<ThetaBlock> theta_blocks;

  double latent_acceptance() const {
    return latent_proposed > 0
               ? static_cast<double>(latent_accepted) / static_cast<double>(latent_proposed)
               : 0.0;
  }
};

// Markov chain state: parameters, the latent configuration with z = B x, and
// incrementally maintained pieces of the log target density.
struct ChainState {
  CaptureParams theta1;
  ErrorParam theta2;
  LatentConfig latent;
  CountVector captures;  // z = B x
  std::int64_t iter = 0;
  Rng rng{0, 0};

  std::vector<std::int64_t> errors;  // e_t, occasion-indexed
  std::int64_t total_errors = 0;
  CjsAggregates aggregates;             // of the capture counts
  std::vector<double> capture_logprob;  // log pr(xi_k) at theta1; empty until needed
  double cjs_sum = 0.0;                 // sum_k z_k log pr(xi_k)
  double log_count_factorials = 0.0;    // sum_j log x_j!
  std::vector<double> error_norms;      // per-occasion truncated-binomial normalizers
  double error_sum = 0.0;               // sum_t occasion error factors
  double log_target = 0.0;              // joint log density plus log prior

  LogFactorials lf;
};

ChainState init_chain(const Problem& problem, const SamplerConfig& config);

std::vector<ThetaBlock> make_theta_blocks(const Problem& problem, const SamplerConfig& config);

// One sweep of logit random-walk proposals over the blocks. Adapts step sizes
// toward 0.44 acceptance while `adapt_now` holds.
void update_theta(ChainState& state, const Problem& problem, std::vector<ThetaBlock>& blocks,
                  bool adapt_now);

// One dynamic-move proposal; returns acceptance. A dead-ended draw retains
// the state and counts as a rejected proposal.
bool update_x_dynamic(ChainState& state, const Problem& problem, Diagnostics& diag);

// One fixed-basis proposal: uniform move and sign, symmetric Hastings ratio.
bool update_x_fixed(ChainState& state, const Problem& problem, const std::vector<Move>& basis,
                    Diagnostics& diag);

// Full recomputation of every cached quantity; describes the first mismatch,
// or returns nothing when the state is coherent.
std::optional<std::string> verify_state(const ChainState& state, const Problem& problem);

struct SampleSet {
  std::vector<std::string> names;          // scalar parameter names
  std::vector<std::vector<double>> draws;  // one trace per name
  std::vector<std::int64_t> error_trace;   // total error count per retained draw
  std::vector<double> log_target_trace;
  std::map<std::vector<std::int64_t>, std::int64_t> config_counts;
  std::int64_t retained = 0;
};

struct RunResult {
  SampleSet samples;
  Diagnostics diagnostics;
};

RunResult run_chain(const Problem& problem, const SamplerConfig& config);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double lower = 0.0;  // central 95% interval
  double upper = 0.0;
  double ess = 0.0;
};

std::vector<SummaryRow> posterior_summary(const SampleSet& samples);

// Initial monotone positive sequence estimator over the autocovariances.
double effective_sample_size(const std::vector<double>& draws);

// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> draws, double q);

}  // namespace recap
