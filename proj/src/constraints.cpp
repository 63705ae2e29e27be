#include "recap/constraints.hpp"

#include <bit>
#include <numeric>
#include <stdexcept>
#include <string>

namespace recap {

std::int64_t CountVector::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

bool CountVector::nonnegative() const {
  for (auto c : counts) {
    if (c < 0) return false;
  }
  return true;
}

namespace {

std::size_t alphabet_size(Alphabet a, const HistoryUniverse& u) {
  switch (a) {
    case Alphabet::kObserved: return u.observed_size();
    case Alphabet::kLatentError: return u.latent_size();
    case Alphabet::kLatentCapture: return u.capture_size();
  }
  return 0;
}

void require_shape(const CountVector& v, Alphabet a, const HistoryUniverse& u,
                   const char* what) {
  if (v.alphabet != a || v.counts.size() != alphabet_size(a, u)) {
    throw std::invalid_argument(std::string("count vector has wrong alphabet or length in ") + what);
  }
}

}  // namespace

CountVector zero_counts(Alphabet a, const HistoryUniverse& universe) {
  return CountVector{a, std::vector<std::int64_t>(alphabet_size(a, universe), 0)};
}

ConstraintSystem::ConstraintSystem(const HistoryUniverse& universe) : universe_(&universe) {
  const std::size_t J = universe.latent_size();
  const int T = universe.num_occasions();
  observed_image_.resize(J);
  capture_image_.resize(J);
  false_neg_mask_.assign(J, 0);
  false_pos_mask_.assign(J, 0);
  for (std::size_t j = 0; j < J; ++j) {
    const History latent = universe.latent_history(j);
    observed_image_[j] = static_cast<std::uint32_t>(universe.observed_index(observed_of(latent)));
    capture_image_[j] = static_cast<std::uint32_t>(universe.capture_index(capture_of(latent)));
    for (int t = 1; t <= T; ++t) {
      if (latent.event(t) == kEventFalseNeg) false_neg_mask_[j] |= 1u << (t - 1);
      if (latent.event(t) == kEventFalsePos) false_pos_mask_[j] |= 1u << (t - 1);
    }
  }
}

std::vector<std::vector<int>> ConstraintSystem::dense_collapse_matrix() const {
  const std::size_t I = universe_->observed_size();
  const std::size_t J = latent_size();
  std::vector<std::vector<int>> m(I, std::vector<int>(J, 0));
  for (std::size_t j = 0; j < J; ++j) m[observed_image_[j]][j] = 1;
  return m;
}

std::vector<std::vector<int>> ConstraintSystem::dense_balance_matrix() const {
  const int T = universe_->num_occasions();
  const std::size_t J = latent_size();
  std::vector<std::vector<int>> m(static_cast<std::size_t>(T - 1), std::vector<int>(J, 0));
  for (std::size_t j = 0; j < J; ++j) {
    for (int t = 2; t <= T; ++t) {
      if (has_false_neg(j, t)) m[static_cast<std::size_t>(t - 2)][j] = -1;
      if (has_false_pos(j, t)) m[static_cast<std::size_t>(t - 2)][j] = 1;
    }
  }
  return m;
}

std::vector<std::vector<int>> ConstraintSystem::dense_observation_matrix() const {
  auto m = dense_collapse_matrix();
  auto balance = dense_balance_matrix();
  m.insert(m.end(), balance.begin(), balance.end());
  return m;
}

std::vector<std::vector<int>> ConstraintSystem::dense_capture_matrix() const {
  const std::size_t K = universe_->capture_size();
  const std::size_t J = latent_size();
  std::vector<std::vector<int>> m(K, std::vector<int>(J, 0));
  for (std::size_t j = 0; j < J; ++j) m[capture_image_[j]][j] = 1;
  return m;
}

ConstraintSystem build_constraints(const HistoryUniverse& universe) {
  return ConstraintSystem(universe);
}

ExtendedCounts extend_counts(const CountVector& observed, const HistoryUniverse& universe) {
  require_shape(observed, Alphabet::kObserved, universe, "extend_counts");
  ExtendedCounts out;
  out.observed_len = observed.counts.size();
  out.values = observed.counts;
  out.values.resize(observed.counts.size() +
                        static_cast<std::size_t>(universe.num_occasions() - 1),
                    0);
  return out;
}

bool in_fibre(const CountVector& error_counts, const ExtendedCounts& target,
              const ConstraintSystem& sys) {
  const HistoryUniverse& u = sys.universe();
  require_shape(error_counts, Alphabet::kLatentError, u, "in_fibre");
  if (target.values.size() != u.observed_size() + static_cast<std::size_t>(u.num_occasions() - 1)) {
    throw std::invalid_argument("extended counts have wrong length in in_fibre");
  }
  if (!error_counts.nonnegative()) return false;

  const int T = u.num_occasions();
  std::vector<std::int64_t> observed_acc(u.observed_size(), 0);
  std::vector<std::int64_t> balance_acc(static_cast<std::size_t>(T + 1), 0);
  for (std::size_t j = 0; j < error_counts.counts.size(); ++j) {
    const std::int64_t c = error_counts.counts[j];
    if (c == 0) continue;
    observed_acc[sys.observed_image(j)] += c;
    std::uint32_t neg = sys.false_neg_mask(j);
    while (neg) {
      const int t = std::countr_zero(neg) + 1;
      balance_acc[static_cast<std::size_t>(t)] -= c;
      neg &= neg - 1;
    }
    std::uint32_t pos = sys.false_pos_mask(j);
    while (pos) {
      const int t = std::countr_zero(pos) + 1;
      balance_acc[static_cast<std::size_t>(t)] += c;
      pos &= pos - 1;
    }
  }
  for (std::size_t i = 0; i < u.observed_size(); ++i) {
    if (observed_acc[i] != target.values[i]) return false;
  }
  for (int t = 2; t <= T; ++t) {
    if (balance_acc[static_cast<std::size_t>(t)] != target.values[u.observed_size() + static_cast<std::size_t>(t - 2)]) {
      return false;
    }
  }
  return true;
}

CountVector zero_error_config(const CountVector& observed, const HistoryUniverse& universe) {
  require_shape(observed, Alphabet::kObserved, universe, "zero_error_config");
  CountVector x = zero_counts(Alphabet::kLatentError, universe);
  for (std::size_t i = 0; i < observed.counts.size(); ++i) {
    if (observed.counts[i] == 0) continue;
    const std::size_t j = universe.latent_index(universe.observed_history(i));
    x.counts[j] = observed.counts[i];
  }
  return x;
}

CountVector apply_capture_map(const CountVector& error_counts, const ConstraintSystem& sys) {
  const HistoryUniverse& u = sys.universe();
  require_shape(error_counts, Alphabet::kLatentError, u, "apply_capture_map");
  if (!error_counts.nonnegative()) {
    throw std::invalid_argument("negative latent counts in apply_capture_map");
  }
  CountVector z = zero_counts(Alphabet::kLatentCapture, u);
  for (std::size_t j = 0; j < error_counts.counts.size(); ++j) {
    if (error_counts.counts[j] != 0) z.counts[sys.capture_image(j)] += error_counts.counts[j];
  }
  return z;
}

std::vector<std::int64_t> releases_from_observed(const CountVector& observed,
                                                 const HistoryUniverse& universe) {
  require_shape(observed, Alphabet::kObserved, universe, "releases_from_observed");
  std::vector<std::int64_t> a(static_cast<std::size_t>(universe.num_occasions() + 1), 0);
  for (std::size_t i = 0; i < observed.counts.size(); ++i) {
    if (observed.counts[i] != 0) {
      a[static_cast<std::size_t>(universe.binary_marking(i))] += observed.counts[i];
    }
  }
  return a;
}

}  // namespace recap
