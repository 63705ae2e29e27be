#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recap/constraints.hpp"
#include "recap/histories.hpp"
#include "recap/model.hpp"
#include "recap/rng.hpp"
#include "recap/sampler.hpp"

namespace recap {

struct StudyDesign {
  int num_occasions = 0;
  std::vector<std::int64_t> releases;  // newly marked per occasion, slot 0 unused
  CaptureParams theta_true;
  double alpha_true = 1.0;
  int replicates = 20;
  std::uint64_t seed = 1;

  bool valid() const;
};

// Independent capture histories, one per released individual: marked at the
// release occasion, then surviving and resighted according to theta.
std::vector<History> simulate_cjs(const StudyDesign& design, Rng& rng);

CountVector counts_of_histories(const std::vector<History>& histories, Alphabet alphabet,
                                const HistoryUniverse& universe);

struct CorruptedData {
  CountVector observed;  // n, what the records show after misidentification
  CountVector latent;    // x, the ground-truth error histories
};

// Band-read errors: per occasion, a truncated-binomial number of sightings of
// marked individuals is reassigned, each to a uniformly chosen marked
// individual without a sighting there.
CorruptedData corrupt_bre(const std::vector<History>& capture_histories, double alpha,
                          const HistoryUniverse& universe, Rng& rng);

// Number of misread sightings at one occasion: 0..min(resighted, marked - resighted).
std::int64_t sample_trunc_binom(std::int64_t resighted, std::int64_t marked, double alpha,
                                const LogFactorials& lf, Rng& rng);

// Fit settings for the three-model comparison. Model 1 fits the error-free
// capture data, Model 2 fits the corrupted records as if they were error
// free, Model 3 runs the full misidentification model on the corrupted
// records. All fits estimate per-occasion survival and a shared constant
// resighting probability; Model 3 treats alpha as known unless told to
// estimate it under its Beta prior.
struct StudyFitConfig {
  std::vector<double> alphas = {8.0 / 9.0, 6.0 / 9.0};
  std::int64_t iterations = 12000;
  std::int64_t burnin = 2000;
  std::int64_t thin = 1;
  int latent_steps_per_iter = 10;
  double initial_step = 0.8;
  bool estimate_alpha = false;
  bool run_model3 = true;
  int threads = 1;  // replicate-level workers; results reduce in replicate order
};

struct StudyCell {
  int model = 0;  // 1 = error-free fit, 2 = errors ignored, 3 = full model
  double alpha = 1.0;
  std::string parameter;
  double true_value = 0.0;
  bool boundary = false;  // truth on the boundary of the parameter space
  int replicates = 0;
  double mean_bias = 0.0;
  double mean_width = 0.0;
  double coverage = 0.0;
};

struct StudyReport {
  std::vector<StudyCell> cells;  // model-major, then alpha, then parameter
  std::vector<std::string> failures;
  int attempted = 0;
  int succeeded = 0;
};

StudyReport replication_study(const StudyDesign& design, const StudyFitConfig& fit);

}  // namespace recap
