#include "recap/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "recap/logprob.hpp"

namespace recap {

namespace {

// A block of exchangeable individuals from one observed class sharing the
// same latent event prefix, encoded as a base-4 numeral.
struct Group {
  std::uint64_t prefix = 0;
  std::int64_t count = 0;
  int marking = 0;
  std::size_t cls = 0;
};

// Depth-first search over occasions: at each occasion the observed data fix
// which groups were sighted; the search chooses how many of the unseen were
// really there (false negatives) and how many sightings belong to someone
// else (false positives), in equal number, and forks the groups accordingly.
// Each leaf is one fibre element, each fibre element is reached exactly once.
class FibreEnumerator {
 public:
  FibreEnumerator(const CountVector& observed, const ConstraintSystem& sys, std::size_t cap)
      : universe_(sys.universe()), cap_(cap) {
    if (observed.alphabet != Alphabet::kObserved ||
        observed.counts.size() != universe_.observed_size()) {
      throw std::invalid_argument("observed counts have the wrong shape");
    }
    fibre_.target = extend_counts(observed, universe_);
    for (std::size_t i = 0; i < observed.counts.size(); ++i) {
      if (observed.counts[i] < 0) throw std::invalid_argument("negative observed count");
      if (observed.counts[i] > 0) {
        initial_.push_back(Group{0, observed.counts[i], universe_.binary_marking(i), i});
      }
    }
  }

  Fibre run() {
    occasion(1, initial_);
    std::sort(fibre_.elements.begin(), fibre_.elements.end(),
              [](const CountVector& a, const CountVector& b) { return a.counts < b.counts; });
    return std::move(fibre_);
  }

 private:
  struct Split {
    int t = 0;
    const std::vector<Group>* groups = nullptr;
    std::vector<std::size_t> zeros;  // groups unseen at t, splittable 0 -> 2
    std::vector<std::size_t> ones;   // groups sighted at t, splittable 1 -> 3
    std::vector<std::int64_t> zero_tail;  // suffix count sums, for bounds
    std::vector<std::int64_t> one_tail;
    std::vector<std::int64_t> k;  // chosen false negatives per zero group
    std::vector<std::int64_t> m;  // chosen false positives per one group
  };

  void occasion(int t, const std::vector<Group>& groups) {
    if (t > universe_.num_occasions()) {
      emit(groups);
      return;
    }
    Split split;
    split.t = t;
    split.groups = &groups;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (t <= groups[g].marking) continue;
      if (universe_.binary_event(groups[g].cls, t) == kEventSeen) {
        split.ones.push_back(g);
      } else {
        split.zeros.push_back(g);
      }
    }
    auto suffix_sums = [&](const std::vector<std::size_t>& side) {
      std::vector<std::int64_t> tail(side.size() + 1, 0);
      for (std::size_t i = side.size(); i-- > 0;) {
        tail[i] = tail[i + 1] + groups[side[i]].count;
      }
      return tail;
    };
    split.zero_tail = suffix_sums(split.zeros);
    split.one_tail = suffix_sums(split.ones);
    split.k.assign(split.zeros.size(), 0);
    split.m.assign(split.ones.size(), 0);

    const std::int64_t max_errors = std::min(split.zero_tail[0], split.one_tail[0]);
    for (std::int64_t e = 0; e <= max_errors; ++e) {
      compose_zero(split, 0, e, e);
    }
  }

  void compose_zero(Split& split, std::size_t pos, std::int64_t remaining, std::int64_t e) {
    if (pos == split.zeros.size()) {
      compose_one(split, 0, e);
      return;
    }
    const std::int64_t cap = std::min((*split.groups)[split.zeros[pos]].count, remaining);
    const std::int64_t low = std::max<std::int64_t>(0, remaining - split.zero_tail[pos + 1]);
    for (std::int64_t k = low; k <= cap; ++k) {
      split.k[pos] = k;
      compose_zero(split, pos + 1, remaining - k, e);
    }
  }

  void compose_one(Split& split, std::size_t pos, std::int64_t remaining) {
    if (pos == split.ones.size()) {
      descend(split);
      return;
    }
    const std::int64_t cap = std::min((*split.groups)[split.ones[pos]].count, remaining);
    const std::int64_t low = std::max<std::int64_t>(0, remaining - split.one_tail[pos + 1]);
    for (std::int64_t m = low; m <= cap; ++m) {
      split.m[pos] = m;
      compose_one(split, pos + 1, remaining - m);
    }
  }

  void descend(const Split& split) {
    const std::vector<Group>& groups = *split.groups;
    std::vector<Group> next;
    next.reserve(groups.size() + split.zeros.size() + split.ones.size());
    std::size_t zero_pos = 0;
    std::size_t one_pos = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      Group grp = groups[g];
      if (split.t <= grp.marking) {
        grp.prefix = grp.prefix * 4 + (split.t == grp.marking ? kEventSeen : kEventNone);
        next.push_back(grp);
        continue;
      }
      const bool sighted = universe_.binary_event(grp.cls, split.t) == kEventSeen;
      const std::int64_t swapped = sighted ? split.m[one_pos++] : split.k[zero_pos++];
      const std::uint8_t base = sighted ? kEventSeen : kEventNone;
      const std::uint8_t error = sighted ? kEventFalsePos : kEventFalseNeg;
      if (grp.count > swapped) {
        Group kept = grp;
        kept.count = grp.count - swapped;
        kept.prefix = grp.prefix * 4 + base;
        next.push_back(kept);
      }
      if (swapped > 0) {
        Group moved = grp;
        moved.count = swapped;
        moved.prefix = grp.prefix * 4 + error;
        next.push_back(moved);
      }
    }
    occasion(split.t + 1, next);
  }

  void emit(const std::vector<Group>& groups) {
    if (fibre_.elements.size() >= cap_) {
      throw FibreSizeError("fibre enumeration exceeded the size cap");
    }
    CountVector x = zero_counts(Alphabet::kLatentError, universe_);
    for (const Group& grp : groups) {
      const auto idx = universe_.find_latent_by_code(grp.prefix);
      if (!idx) throw std::logic_error("enumerated prefix is not a latent history");
      x.counts[*idx] += grp.count;
    }
    fibre_.elements.push_back(std::move(x));
  }

  const HistoryUniverse& universe_;
  std::size_t cap_;
  Fibre fibre_;
  std::vector<Group> initial_;
};

// Merge-union by rank with path compression.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

}  // namespace

std::optional<std::size_t> Fibre::find(const CountVector& x) const {
  auto it = std::lower_bound(
      elements.begin(), elements.end(), x,
      [](const CountVector& a, const CountVector& b) { return a.counts < b.counts; });
  if (it == elements.end() || !(*it == x)) return std::nullopt;
  return static_cast<std::size_t>(it - elements.begin());
}

Fibre enumerate_fibre(const CountVector& observed, const ConstraintSystem& sys,
                      std::size_t size_cap) {
  return FibreEnumerator(observed, sys, size_cap).run();
}

namespace {

std::vector<double> fibre_log_densities(const Fibre& fibre, const CaptureParams& theta1,
                                        const ErrorParam& theta2, const ConstraintSystem& sys,
                                        const LogFactorials& lf) {
  std::vector<double> logs;
  logs.reserve(fibre.elements.size());
  for (const CountVector& x : fibre.elements) {
    const CountVector z = apply_capture_map(x, sys);
    logs.push_back(log_joint(x, z, theta1, theta2, fibre.target, sys, lf));
  }
  return logs;
}

}  // namespace

std::vector<double> exact_conditional_posterior(const Fibre& fibre, const CaptureParams& theta1,
                                                const ErrorParam& theta2,
                                                const ConstraintSystem& sys,
                                                const LogFactorials& lf) {
  std::vector<double> logs = fibre_log_densities(fibre, theta1, theta2, sys, lf);
  const double norm = log_sum_exp(logs);
  if (norm == kNegInf) {
    throw std::domain_error("no fibre element carries positive density at these parameters");
  }
  for (double& v : logs) v = std::exp(v - norm);
  return logs;
}

double exact_observed_loglik(const Fibre& fibre, const CaptureParams& theta1,
                             const ErrorParam& theta2, const ConstraintSystem& sys,
                             const LogFactorials& lf) {
  const std::vector<double> logs = fibre_log_densities(fibre, theta1, theta2, sys, lf);
  return log_sum_exp(logs);
}

ConnectivityReport check_connectivity(const Fibre& fibre, const MoveTables& tables) {
  const std::size_t n = fibre.elements.size();
  ConnectivityReport report;
  if (n <= 1) {
    report.connected = true;
    return report;
  }
  UnionFind uf(n);
  CountVector neighbour = fibre.elements[0];
  for (std::size_t i = 0; i < n; ++i) {
    // Error-adding edges reach every neighbour pair once; their inverses are
    // the error-removing edges from the other endpoint.
    for (const Move& mv : enumerate_addable(fibre.elements[i], tables)) {
      neighbour = fibre.elements[i];
      neighbour.counts[mv.unseen] -= 1;
      neighbour.counts[mv.seen] -= 1;
      neighbour.counts[mv.false_neg] += 1;
      neighbour.counts[mv.false_pos] += 1;
      const auto idx = fibre.find(neighbour);
      if (!idx) throw std::logic_error("error move left the fibre");
      uf.unite(i, *idx);
    }
  }
  std::vector<std::size_t> component_size(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++component_size[uf.find(i)];
  std::size_t largest = uf.find(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (component_size[i] > component_size[largest]) largest = i;
  }
  report.connected = component_size[largest] == n;
  if (!report.connected) {
    for (std::size_t i = 0; i < n; ++i) {
      if (uf.find(i) == largest) report.witness.push_back(i);
    }
  }
  return report;
}

std::vector<Move> reduction_path_to_zero(const CountVector& x, const MoveTables& tables) {
  LatentConfig cfg = LatentConfig::from(x);
  std::vector<Move> path;
  for (;;) {
    // Lowest-index history still carrying an error, earliest such occasion.
    std::size_t false_neg = cfg.x.counts.size();
    for (std::size_t j = 0; j < cfg.x.counts.size(); ++j) {
      if (cfg.x.counts[j] > 0 && tables.error_mask(j) != 0) {
        false_neg = j;
        break;
      }
    }
    if (false_neg == cfg.x.counts.size()) break;
    const int occasion = std::countr_zero(tables.error_mask(false_neg)) + 1;
    const std::uint32_t bit = 1u << (occasion - 1);
    std::size_t false_pos = cfg.x.counts.size();
    for (std::size_t j = 0; j < cfg.x.counts.size(); ++j) {
      if (cfg.x.counts[j] > 0 && (tables.falsepos_mask(j) & bit)) {
        false_pos = j;
        break;
      }
    }
    if (false_pos == cfg.x.counts.size()) {
      throw std::logic_error("unbalanced errors: configuration is not on a fibre");
    }
    const Move mv{occasion, tables.remove_error(false_neg, occasion),
                  tables.remove_error(false_pos, occasion), false_neg, false_pos};
    apply_move(cfg, mv, -1);
    path.push_back(mv);
  }
  return path;
}

}  // namespace recap
