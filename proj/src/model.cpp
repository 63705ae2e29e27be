#include "recap/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace recap {

CaptureParams CaptureParams::constant(int num_occasions, double phi, double p) {
  StudyShape{num_occasions}.validate();
  CaptureParams theta;
  theta.survival.assign(static_cast<std::size_t>(num_occasions) + 1, 0.0);
  theta.capture.assign(static_cast<std::size_t>(num_occasions) + 1, 0.0);
  for (int t = 1; t <= num_occasions - 1; ++t) theta.survival[static_cast<std::size_t>(t)] = phi;
  for (int t = 2; t <= num_occasions; ++t) theta.capture[static_cast<std::size_t>(t)] = p;
  return theta;
}

bool CaptureParams::valid() const {
  const int T = num_occasions();
  if (T < 2 || capture.size() != survival.size()) return false;
  for (int t = 1; t <= T - 1; ++t) {
    const double v = survival[static_cast<std::size_t>(t)];
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  for (int t = 2; t <= T; ++t) {
    const double v = capture[static_cast<std::size_t>(t)];
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

bool SufficientStats::feasible() const {
  const int T = num_occasions();
  for (int t = 2; t <= T; ++t) {
    const auto e = errors[static_cast<std::size_t>(t)];
    if (e < 0 || e > max_errors[static_cast<std::size_t>(t)]) return false;
  }
  return true;
}

std::vector<double> cjs_chi(const CaptureParams& theta) {
  const int T = theta.num_occasions();
  std::vector<double> chi(static_cast<std::size_t>(T) + 1, 1.0);
  for (int t = T - 1; t >= 1; --t) {
    const double phi = theta.survival[static_cast<std::size_t>(t)];
    const double p_next = theta.capture[static_cast<std::size_t>(t) + 1];
    chi[static_cast<std::size_t>(t)] =
        (1.0 - phi) + phi * (1.0 - p_next) * chi[static_cast<std::size_t>(t) + 1];
  }
  return chi;
}

double cjs_history_logprob(const History& capture_history, const CaptureParams& theta) {
  const int T = capture_history.length();
  if (T != theta.num_occasions()) {
    throw std::invalid_argument("history length does not match parameter dimension");
  }
  const int first = capture_history.marking_occasion();
  if (first < 1 || first >= T) return kNegInf;
  int last = first;
  for (int t = first + 1; t <= T; ++t) {
    if (capture_history.event(t) == kEventSeen) last = t;
  }

  double chi = 1.0;  // survivor complement, evaluated at `last` by the loop
  for (int t = T - 1; t >= last; --t) {
    const double phi = theta.survival[static_cast<std::size_t>(t)];
    const double p_next = theta.capture[static_cast<std::size_t>(t) + 1];
    chi = (1.0 - phi) + phi * (1.0 - p_next) * chi;
  }

  double lp = std::log(chi);
  for (int t = first; t < last; ++t) {
    const double phi = theta.survival[static_cast<std::size_t>(t)];
    const double p_next = theta.capture[static_cast<std::size_t>(t) + 1];
    lp += std::log(phi);
    lp += capture_history.event(t + 1) == kEventSeen ? std::log(p_next) : std::log1p(-p_next);
  }
  return lp;
}

std::vector<double> cjs_log_table(const HistoryUniverse& universe, const CaptureParams& theta) {
  std::vector<double> table(universe.capture_size());
  for (std::size_t k = 0; k < table.size(); ++k) {
    table[k] = cjs_history_logprob(universe.capture_history(k), theta);
  }
  return table;
}

CjsAggregates CjsAggregates::zero(int num_occasions) {
  CjsAggregates agg;
  const auto n = static_cast<std::size_t>(num_occasions) + 1;
  agg.alive.assign(n, 0);
  agg.seen.assign(n, 0);
  agg.missed.assign(n, 0);
  agg.last.assign(n, 0);
  return agg;
}

void CjsAggregates::add_history(const HistoryUniverse& universe, std::size_t k,
                                std::int64_t count) {
  const int T = universe.num_occasions();
  const int first = universe.binary_marking(k);
  int last = first;
  for (int t = first + 1; t <= T; ++t) {
    if (universe.binary_event(k, t) == kEventSeen) last = t;
  }
  for (int t = first; t < last; ++t) alive[static_cast<std::size_t>(t)] += count;
  for (int t = first + 1; t <= last; ++t) {
    if (universe.binary_event(k, t) == kEventSeen) {
      seen[static_cast<std::size_t>(t)] += count;
    } else {
      missed[static_cast<std::size_t>(t)] += count;
    }
  }
  this->last[static_cast<std::size_t>(last)] += count;
}

CjsAggregates CjsAggregates::from_counts(const CountVector& z, const HistoryUniverse& universe) {
  CjsAggregates agg = zero(universe.num_occasions());
  for (std::size_t k = 0; k < z.counts.size(); ++k) {
    if (z.counts[k] != 0) agg.add_history(universe, k, z.counts[k]);
  }
  return agg;
}

double CjsAggregates::loglik(const CaptureParams& theta) const {
  const int T = theta.num_occasions();
  const std::vector<double> chi = cjs_chi(theta);
  double lp = 0.0;
  for (int t = 1; t <= T - 1; ++t) {
    lp += weighted_log(alive[static_cast<std::size_t>(t)],
                       std::log(theta.survival[static_cast<std::size_t>(t)]));
  }
  for (int t = 2; t <= T; ++t) {
    const double p = theta.capture[static_cast<std::size_t>(t)];
    lp += weighted_log(seen[static_cast<std::size_t>(t)], std::log(p));
    lp += weighted_log(missed[static_cast<std::size_t>(t)], std::log1p(-p));
  }
  for (int t = 1; t <= T; ++t) {
    lp += weighted_log(last[static_cast<std::size_t>(t)],
                       std::log(chi[static_cast<std::size_t>(t)]));
  }
  return lp;
}

double log_pi_z(const CountVector& z, const std::vector<double>& cjs_table,
                const SufficientStats& stats, const HistoryUniverse& universe,
                const LogFactorials& lf) {
  const int T = universe.num_occasions();
  if (z.alphabet != Alphabet::kLatentCapture || z.counts.size() != universe.capture_size() ||
      cjs_table.size() != universe.capture_size()) {
    throw std::invalid_argument("count vector or table has wrong shape in log_pi_z");
  }
  if (!z.nonnegative()) return kNegInf;

  std::vector<std::int64_t> cohort(static_cast<std::size_t>(T) + 1, 0);
  for (std::size_t k = 0; k < z.counts.size(); ++k) {
    if (z.counts[k] != 0) cohort[static_cast<std::size_t>(universe.binary_marking(k))] += z.counts[k];
  }
  for (int t = 1; t <= T; ++t) {
    if (cohort[static_cast<std::size_t>(t)] != stats.releases[static_cast<std::size_t>(t)]) {
      return kNegInf;
    }
  }

  double lp = 0.0;
  for (int t = 1; t <= T - 1; ++t) lp += lf(stats.releases[static_cast<std::size_t>(t)]);
  for (std::size_t k = 0; k < z.counts.size(); ++k) {
    const std::int64_t c = z.counts[k];
    if (c == 0) continue;
    lp -= lf(c);
    lp += weighted_log(c, cjs_table[k]);
  }
  return lp;
}

double log_trunc_binom_norm(std::int64_t resighted, std::int64_t marked, double alpha,
                            const LogFactorials& lf) {
  const std::int64_t cap = std::min(resighted, marked - resighted);
  const double log_err = std::log1p(-alpha);
  const double log_ok = std::log(alpha);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(std::max<std::int64_t>(cap + 1, 0)));
  for (std::int64_t e = 0; e <= cap; ++e) {
    terms.push_back(lf.log_choose(resighted, e) + weighted_log(e, log_err) +
                    weighted_log(resighted - e, log_ok));
  }
  return log_sum_exp(terms);
}

double log_trunc_binom(std::int64_t errors, std::int64_t resighted, std::int64_t marked,
                       double alpha, const LogFactorials& lf) {
  const std::int64_t cap = std::min(resighted, marked - resighted);
  if (errors < 0 || errors > cap) return kNegInf;
  const double norm = log_trunc_binom_norm(resighted, marked, alpha, lf);
  if (norm == kNegInf) return kNegInf;  // degenerate: no admissible error count
  return lf.log_choose(resighted, errors) + weighted_log(errors, std::log1p(-alpha)) +
         weighted_log(resighted - errors, std::log(alpha)) - norm;
}

double log_error_factor(std::int64_t errors, std::int64_t resighted, std::int64_t marked,
                        double alpha, double log_norm, const LogFactorials& lf) {
  const std::int64_t cap = std::min(resighted, marked - resighted);
  if (errors < 0 || errors > cap || log_norm == kNegInf) return kNegInf;
  const double mass = lf.log_choose(resighted, errors) +
                      weighted_log(errors, std::log1p(-alpha)) +
                      weighted_log(resighted - errors, std::log(alpha)) - log_norm;
  if (mass == kNegInf) return kNegInf;
  return mass - lf.log_choose(marked - resighted, errors) - lf.log_choose(resighted, errors);
}

double log_error_factor(std::int64_t errors, std::int64_t resighted, std::int64_t marked,
                        double alpha, const LogFactorials& lf) {
  return log_error_factor(errors, resighted, marked, alpha,
                          log_trunc_binom_norm(resighted, marked, alpha, lf), lf);
}

double log_pi_x_given_z(const CountVector& x, const CountVector& z, double alpha,
                        const SufficientStats& stats, const ConstraintSystem& sys,
                        const LogFactorials& lf) {
  const HistoryUniverse& u = sys.universe();
  if (x.alphabet != Alphabet::kLatentError || x.counts.size() != u.latent_size() ||
      z.alphabet != Alphabet::kLatentCapture || z.counts.size() != u.capture_size()) {
    throw std::invalid_argument("count vector has wrong shape in log_pi_x_given_z");
  }
  if (!x.nonnegative() || !z.nonnegative()) return kNegInf;
  if (!(apply_capture_map(x, sys) == z)) return kNegInf;

  const int T = u.num_occasions();
  double lp = 0.0;
  for (auto c : z.counts) {
    if (c != 0) lp += lf(c);
  }
  for (auto c : x.counts) {
    if (c != 0) lp -= lf(c);
  }
  for (int t = 2; t <= T; ++t) {
    const double factor =
        log_error_factor(stats.errors[static_cast<std::size_t>(t)],
                         stats.resightings[static_cast<std::size_t>(t)],
                         stats.marked_before[static_cast<std::size_t>(t)], alpha, lf);
    if (factor == kNegInf) return kNegInf;
    lp += factor;
  }
  return lp;
}

SufficientStats stats_from(const CountVector& x, const CountVector& z,
                           const std::vector<std::int64_t>& releases,
                           const ConstraintSystem& sys) {
  const HistoryUniverse& u = sys.universe();
  const int T = u.num_occasions();
  if (releases.size() != static_cast<std::size_t>(T) + 1) {
    throw std::invalid_argument("releases must be occasion-indexed with length T+1");
  }
  SufficientStats s;
  s.releases = releases;
  s.marked_before.assign(static_cast<std::size_t>(T) + 1, 0);
  for (int t = 1; t <= T; ++t) {
    s.marked_before[static_cast<std::size_t>(t)] =
        s.marked_before[static_cast<std::size_t>(t) - 1] + releases[static_cast<std::size_t>(t) - 1];
  }
  s.resightings.assign(static_cast<std::size_t>(T) + 1, 0);
  for (std::size_t k = 0; k < z.counts.size(); ++k) {
    const std::int64_t c = z.counts[k];
    if (c == 0) continue;
    for (int t = u.binary_marking(k) + 1; t <= T; ++t) {
      if (u.binary_event(k, t) == kEventSeen) s.resightings[static_cast<std::size_t>(t)] += c;
    }
  }
  s.errors.assign(static_cast<std::size_t>(T) + 1, 0);
  for (std::size_t j = 0; j < x.counts.size(); ++j) {
    const std::int64_t c = x.counts[j];
    if (c == 0) continue;
    std::uint32_t mask = sys.false_neg_mask(j);
    while (mask) {
      const int t = std::countr_zero(mask) + 1;
      s.errors[static_cast<std::size_t>(t)] += c;
      mask &= mask - 1;
    }
  }
  s.max_errors.assign(static_cast<std::size_t>(T) + 1, 0);
  for (int t = 2; t <= T; ++t) {
    const auto m = s.resightings[static_cast<std::size_t>(t)];
    const auto big_m = s.marked_before[static_cast<std::size_t>(t)];
    s.max_errors[static_cast<std::size_t>(t)] = std::min(m, big_m - m);
  }
  return s;
}

double log_joint(const CountVector& x, const CountVector& z, const CaptureParams& theta1,
                 const ErrorParam& theta2, const ExtendedCounts& n_ext,
                 const ConstraintSystem& sys, const LogFactorials& lf) {
  const HistoryUniverse& u = sys.universe();
  if (!in_fibre(x, n_ext, sys)) return kNegInf;
  if (!(apply_capture_map(x, sys) == z)) return kNegInf;

  CountVector observed{Alphabet::kObserved,
                       {n_ext.values.begin(),
                        n_ext.values.begin() + static_cast<std::ptrdiff_t>(n_ext.observed_len)}};
  const auto releases = releases_from_observed(observed, u);
  const SufficientStats stats = stats_from(x, z, releases, sys);
  const auto table = cjs_log_table(u, theta1);
  const double lp_z = log_pi_z(z, table, stats, u, lf);
  if (lp_z == kNegInf) return kNegInf;
  const double lp_x = log_pi_x_given_z(x, z, theta2.alpha, stats, sys, lf);
  if (lp_x == kNegInf) return kNegInf;
  return lp_z + lp_x;
}

double log_prior(const CaptureParams& theta1, const ErrorParam& theta2) {
  if (!theta1.valid() || !theta2.valid()) return kNegInf;
  if (!theta2.estimated) return 0.0;
  const double a = theta2.beta_a;
  const double b = theta2.beta_b;
  const double alpha = theta2.alpha;
  auto pow_log = [](double exponent, double value) {
    return exponent == 0.0 ? 0.0 : exponent * std::log(value);
  };
  return pow_log(a - 1.0, alpha) + pow_log(b - 1.0, 1.0 - alpha) -
         (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

}  // namespace recap
