#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "recap/basis.hpp"
#include "recap/constraints.hpp"
#include "recap/histories.hpp"
#include "recap/model.hpp"

namespace recap {

class FibreSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The full solution set of A x = n_ext over nonnegative integers, in
// lexicographic count order. Intended for small studies: elements are stored
// densely, so memory grows with both the fibre size and the alphabet.
struct Fibre {
  ExtendedCounts target;
  std::vector<CountVector> elements;

  std::optional<std::size_t> find(const CountVector& x) const;
};

// Exhaustive fibre enumeration by depth-first search over per-occasion error
// counts and their placements among the observed classes; only feasible
// candidates are ever visited. Throws FibreSizeError past size_cap elements.
Fibre enumerate_fibre(const CountVector& observed, const ConstraintSystem& sys,
                      std::size_t size_cap = 100000);

// Normalized posterior over fibre elements at fixed parameters. Throws
// std::domain_error when no element has positive density.
std::vector<double> exact_conditional_posterior(const Fibre& fibre, const CaptureParams& theta1,
                                                const ErrorParam& theta2,
                                                const ConstraintSystem& sys,
                                                const LogFactorials& lf);

// log of the observed-data likelihood: the joint density summed over the
// fibre.
double exact_observed_loglik(const Fibre& fibre, const CaptureParams& theta1,
                             const ErrorParam& theta2, const ConstraintSystem& sys,
                             const LogFactorials& lf);

// Connectivity of the fibre under single error moves. When disconnected,
// `witness` holds the element indices of one maximal connected component.
struct ConnectivityReport {
  bool connected = false;
  std::vector<std::size_t> witness;
};

ConnectivityReport check_connectivity(const Fibre& fibre, const MoveTables& tables);

// Deterministic sequence of error-removing moves taking x to the unique
// zero-error element; its length equals the total error count of x.
std::vector<Move> reduction_path_to_zero(const CountVector& x, const MoveTables& tables);

}  // namespace recap
