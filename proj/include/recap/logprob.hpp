#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace recap {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Cached log-factorials; counts in this engine stay far below the cache bound,
// the table grows on demand if they do not.
class LogFactorials {
 public:
  explicit LogFactorials(std::size_t initial = 256) { grow(initial); }

  double operator()(std::int64_t n) const {
    if (n < 0) return kNegInf;
    if (static_cast<std::size_t>(n) >= table_.size()) grow(static_cast<std::size_t>(n) + 1);
    return table_[static_cast<std::size_t>(n)];
  }

  // log C(n, k); zero-probability combinations give -inf.
  double log_choose(std::int64_t n, std::int64_t k) const {
    if (k < 0 || n < 0 || k > n) return kNegInf;
    return (*this)(n) - (*this)(k) - (*this)(n - k);
  }

 private:
  void grow(std::size_t n) const {
    std::size_t old = table_.size();
    if (n <= old) return;
    table_.resize(n);
    for (std::size_t i = old; i < n; ++i) {
      table_[i] = std::lgamma(static_cast<double>(i) + 1.0);
    }
  }

  mutable std::vector<double> table_;
};

inline double log_sum_exp(std::span<const double> terms) {
  double m = kNegInf;
  for (double t : terms) m = std::max(m, t);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

// n * log_term with the 0 * log(0) = 0 convention: a zero-probability factor
// that no individual requires does not zero the density.
inline double weighted_log(std::int64_t n, double log_term) {
  return n == 0 ? 0.0 : static_cast<double>(n) * log_term;
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace recap
