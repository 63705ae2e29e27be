#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "recap/logprob.hpp"
#include "recap/oracle.hpp"
#include "test_util.hpp"

using namespace recap;
using testutil::counts_at;
using testutil::h;

namespace {

// Reference enumeration: distribute the total over every latent history whose
// observed class is present, keep the vectors that satisfy the constraints.
Fibre direct_fibre(const CountVector& observed, const ConstraintSystem& sys) {
  const HistoryUniverse& u = sys.universe();
  std::vector<std::size_t> allowed;
  for (std::size_t j = 0; j < u.latent_size(); ++j) {
    if (observed.counts[sys.observed_image(j)] > 0) allowed.push_back(j);
  }
  Fibre fibre;
  fibre.target = extend_counts(observed, u);
  CountVector x = zero_counts(Alphabet::kLatentError, u);
  std::function<void(std::size_t, std::int64_t)> place = [&](std::size_t pos,
                                                             std::int64_t remaining) {
    if (pos == allowed.size()) {
      if (remaining == 0 && in_fibre(x, fibre.target, sys)) fibre.elements.push_back(x);
      return;
    }
    for (std::int64_t c = 0; c <= remaining; ++c) {
      x.counts[allowed[pos]] = c;
      place(pos + 1, remaining - c);
    }
    x.counts[allowed[pos]] = 0;
  };
  place(0, observed.total());
  std::sort(fibre.elements.begin(), fibre.elements.end(),
            [](const CountVector& a, const CountVector& b) { return a.counts < b.counts; });
  return fibre;
}

std::int64_t total_errors(const CountVector& x, const ConstraintSystem& sys) {
  std::int64_t n = 0;
  for (std::size_t j = 0; j < x.counts.size(); ++j) {
    n += x.counts[j] * std::popcount(sys.false_neg_mask(j));
  }
  return n;
}

double choose(std::int64_t n, std::int64_t k) {
  double c = 1.0;
  for (std::int64_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / (i + 1);
  return c;
}

// One pass of the generative process: independent capture histories per
// release cohort, then per-occasion misidentification swapping sightings from
// a truncated-binomial number of victims onto uniformly chosen other marked
// individuals.
struct ForwardDraw {
  CountVector observed;
  CountVector latent;
};

ForwardDraw simulate_once(const std::vector<std::int64_t>& releases, const CaptureParams& theta,
                          double alpha, const HistoryUniverse& u, std::mt19937& rng) {
  const int T = u.num_occasions();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  struct Individual {
    int marking = 0;
    std::vector<int> captured;
    std::vector<int> sighted;
  };
  std::vector<Individual> pop;
  for (int s = 1; s <= T; ++s) {
    for (std::int64_t i = 0; i < releases[s]; ++i) pop.push_back(Individual{s, {}, {}});
  }
  for (Individual& ind : pop) {
    ind.captured.assign(T + 1, 0);
    ind.captured[ind.marking] = 1;
    bool alive = true;
    for (int t = ind.marking + 1; t <= T; ++t) {
      alive = alive && unif(rng) < theta.survival[t - 1];
      ind.captured[t] = (alive && unif(rng) < theta.capture[t]) ? 1 : 0;
    }
    ind.sighted = ind.captured;
  }
  for (int t = 2; t <= T; ++t) {
    std::vector<std::size_t> seen;
    std::vector<std::size_t> unseen;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (pop[i].marking >= t) continue;
      (pop[i].captured[t] ? seen : unseen).push_back(i);
    }
    const auto cap = static_cast<std::int64_t>(std::min(seen.size(), unseen.size()));
    if (cap == 0) continue;
    const auto m = static_cast<std::int64_t>(seen.size());
    std::vector<double> weights;
    for (std::int64_t e = 0; e <= cap; ++e) {
      weights.push_back(choose(m, e) * std::pow(1.0 - alpha, static_cast<double>(e)) *
                        std::pow(alpha, static_cast<double>(m - e)));
    }
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    const int errors = pick(rng);
    std::vector<std::size_t> victims;
    std::vector<std::size_t> recipients;
    std::sample(seen.begin(), seen.end(), std::back_inserter(victims), errors, rng);
    std::sample(unseen.begin(), unseen.end(), std::back_inserter(recipients), errors, rng);
    for (std::size_t v : victims) pop[v].sighted[t] = 0;
    for (std::size_t r : recipients) pop[r].sighted[t] = 1;
  }
  ForwardDraw draw{zero_counts(Alphabet::kObserved, u), zero_counts(Alphabet::kLatentError, u)};
  for (const Individual& ind : pop) {
    std::string obs;
    std::string latent;
    for (int t = 1; t <= T; ++t) {
      obs.push_back(static_cast<char>('0' + ind.sighted[t]));
      int event = kEventNone;
      if (ind.captured[t] && ind.sighted[t]) event = kEventSeen;
      if (ind.captured[t] && !ind.sighted[t]) event = kEventFalseNeg;
      if (!ind.captured[t] && ind.sighted[t]) event = kEventFalsePos;
      latent.push_back(static_cast<char>('0' + event));
    }
    draw.observed.counts[*u.find_observed_index(h(obs))] += 1;
    draw.latent.counts[*u.find_latent_index(h(latent))] += 1;
  }
  return draw;
}

CountVector random_observed(const HistoryUniverse& u, std::mt19937& rng, int max_classes,
                            std::int64_t max_total) {
  std::uniform_int_distribution<std::size_t> pick_class(0, u.observed_size() - 1);
  std::uniform_int_distribution<int> pick_classes(1, max_classes);
  CountVector observed = zero_counts(Alphabet::kObserved, u);
  const int classes = pick_classes(rng);
  std::int64_t budget = max_total;
  for (int c = 0; c < classes && budget > 0; ++c) {
    std::uniform_int_distribution<std::int64_t> pick_count(1, std::min<std::int64_t>(2, budget));
    const std::int64_t count = pick_count(rng);
    observed.counts[pick_class(rng)] += count;
    budget -= count;
  }
  return observed;
}

}  // namespace

TEST_CASE("two-occasion fibre holds the direct and the fully swapped solution") {
  HistoryUniverse u(StudyShape{2});
  ConstraintSystem sys = build_constraints(u);
  const CountVector observed = counts_at(Alphabet::kObserved, u, {{"10", 1}, {"11", 1}});
  const Fibre fibre = enumerate_fibre(observed, sys);

  REQUIRE(fibre.elements.size() == 2);
  CHECK(fibre.elements[0] == counts_at(Alphabet::kLatentError, u, {{"12", 1}, {"13", 1}}));
  CHECK(fibre.elements[1] == counts_at(Alphabet::kLatentError, u, {{"10", 1}, {"11", 1}}));
  CHECK(fibre.target.values == extend_counts(observed, u).values);

  CHECK(fibre.find(fibre.elements[0]) == 0);
  CHECK(fibre.find(fibre.elements[1]) == 1);
  CHECK_FALSE(fibre.find(zero_counts(Alphabet::kLatentError, u)).has_value());
}

TEST_CASE("empty data enumerate to the single zero configuration") {
  HistoryUniverse u(StudyShape{3});
  ConstraintSystem sys = build_constraints(u);
  const CountVector observed = zero_counts(Alphabet::kObserved, u);
  const Fibre fibre = enumerate_fibre(observed, sys);

  REQUIRE(fibre.elements.size() == 1);
  CHECK(fibre.elements[0] == zero_counts(Alphabet::kLatentError, u));
  CHECK(fibre.find(fibre.elements[0]) == 0);
}

TEST_CASE("three-occasion fibre matches the hand enumeration") {
  HistoryUniverse u(StudyShape{3});
  ConstraintSystem sys = build_constraints(u);
  const CountVector observed = counts_at(Alphabet::kObserved, u, {{"110", 1}, {"101", 1}});
  const Fibre fibre = enumerate_fibre(observed, sys);

  REQUIRE(fibre.elements.size() == 4);
  const std::vector<CountVector> expected = {
      counts_at(Alphabet::kLatentError, u, {{"110", 1}, {"101", 1}}),
      counts_at(Alphabet::kLatentError, u, {{"130", 1}, {"121", 1}}),
      counts_at(Alphabet::kLatentError, u, {{"112", 1}, {"103", 1}}),
      counts_at(Alphabet::kLatentError, u, {{"132", 1}, {"123", 1}}),
  };
  for (const CountVector& x : expected) {
    CHECK(fibre.find(x).has_value());
    CHECK(in_fibre(x, fibre.target, sys));
  }
}

TEST_CASE("enumeration agrees with direct constraint search") {
  std::mt19937 rng(20240614);
  for (int T : {2, 3, 4}) {
    HistoryUniverse u(StudyShape{T});
    ConstraintSystem sys = build_constraints(u);
    for (int trial = 0; trial < 20; ++trial) {
      const CountVector observed = random_observed(u, rng, 3, T == 4 ? 4 : 5);
      CAPTURE(T);
      CAPTURE(trial);
      const Fibre fast = enumerate_fibre(observed, sys);
      const Fibre slow = direct_fibre(observed, sys);
      REQUIRE(fast.elements.size() == slow.elements.size());
      CHECK(fast.elements == slow.elements);

      for (std::size_t i = 0; i + 1 < fast.elements.size(); ++i) {
        CHECK(fast.elements[i].counts < fast.elements[i + 1].counts);
      }

      std::size_t zero_error = 0;
      for (const CountVector& x : fast.elements) {
        if (total_errors(x, sys) == 0) ++zero_error;
      }
      CHECK(zero_error == 1);
      CHECK(fast.find(zero_error_config(observed, u)).has_value());
    }
  }
}

TEST_CASE("conditional posterior splits the two-occasion fibre by the error rate") {
  HistoryUniverse u(StudyShape{2});
  ConstraintSystem sys = build_constraints(u);
  LogFactorials lf;
  const CountVector observed = counts_at(Alphabet::kObserved, u, {{"10", 1}, {"11", 1}});
  const Fibre fibre = enumerate_fibre(observed, sys);
  const CaptureParams theta = CaptureParams::constant(2, 0.8, 0.5);

  ErrorParam err;
  err.alpha = 0.5;
  std::vector<double> post = exact_conditional_posterior(fibre, theta, err, sys, lf);
  CHECK(post[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(post[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(exact_observed_loglik(fibre, theta, err, sys, lf) ==
        doctest::Approx(std::log(0.48)).epsilon(1e-12));

  err.alpha = 1.0;
  post = exact_conditional_posterior(fibre, theta, err, sys, lf);
  CHECK(post[0] == doctest::Approx(0.0));
  CHECK(post[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact_observed_loglik(fibre, theta, err, sys, lf) ==
        doctest::Approx(std::log(0.48)).epsilon(1e-12));

  err.alpha = 0.0;
  post = exact_conditional_posterior(fibre, theta, err, sys, lf);
  CHECK(post[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post[1] == doctest::Approx(0.0));

  const CaptureParams degenerate = CaptureParams::constant(2, 1.0, 1.0);
  err.alpha = 0.5;
  CHECK_THROWS_AS(exact_conditional_posterior(fibre, degenerate, err, sys, lf),
                  std::domain_error);
}

TEST_CASE("posterior concentrates on few errors when identification is reliable") {
  HistoryUniverse u(StudyShape{3});
  ConstraintSystem sys = build_constraints(u);
  LogFactorials lf;
  const CountVector observed = counts_at(Alphabet::kObserved, u, {{"110", 1}, {"101", 1}});
  const Fibre fibre = enumerate_fibre(observed, sys);
  const CaptureParams theta = CaptureParams::constant(3, 0.8, 0.5);

  auto posterior_at = [&](double alpha) {
    ErrorParam err;
    err.alpha = alpha;
    return exact_conditional_posterior(fibre, theta, err, sys, lf);
  };
  auto argmax = [](const std::vector<double>& v) {
    return std::max_element(v.begin(), v.end()) - v.begin();
  };

  const std::vector<double> reliable = posterior_at(0.95);
  const std::vector<double> unreliable = posterior_at(0.05);
  CHECK(std::accumulate(reliable.begin(), reliable.end(), 0.0) == doctest::Approx(1.0));
  CHECK(std::accumulate(unreliable.begin(), unreliable.end(), 0.0) == doctest::Approx(1.0));

  const auto by_errors = [&](std::size_t i) {
    return total_errors(fibre.elements[i], sys);
  };
  CHECK(by_errors(argmax(reliable)) == 0);
  CHECK(by_errors(argmax(unreliable)) == 2);
}

TEST_CASE("exact observed likelihood and posterior match forward simulation") {
  HistoryUniverse u(StudyShape{3});
  ConstraintSystem sys = build_constraints(u);
  LogFactorials lf;
  const CountVector target = counts_at(Alphabet::kObserved, u, {{"110", 1}, {"101", 1}});
  const Fibre fibre = enumerate_fibre(target, sys);
  const CaptureParams theta = CaptureParams::constant(3, 0.7, 0.6);
  ErrorParam err;
  err.alpha = 0.6;

  const double exact = std::exp(exact_observed_loglik(fibre, theta, err, sys, lf));
  const std::vector<double> posterior =
      exact_conditional_posterior(fibre, theta, err, sys, lf);
  const std::vector<std::int64_t> releases = releases_from_observed(target, u);

  std::mt19937 rng(7151);
  const int draws = 300000;
  int hits = 0;
  std::vector<std::int64_t> latent_hits(fibre.elements.size(), 0);
  for (int i = 0; i < draws; ++i) {
    const ForwardDraw draw = simulate_once(releases, theta, err.alpha, u, rng);
    if (!(draw.observed == target)) continue;
    ++hits;
    const auto idx = fibre.find(draw.latent);
    REQUIRE(idx.has_value());
    latent_hits[*idx] += 1;
  }

  const double estimate = static_cast<double>(hits) / draws;
  const double se = std::sqrt(exact * (1.0 - exact) / draws);
  CHECK(std::abs(estimate - exact) < 3.0 * se);

  REQUIRE(hits > 1000);
  for (std::size_t k = 0; k < fibre.elements.size(); ++k) {
    const double freq = static_cast<double>(latent_hits[k]) / hits;
    const double pse = std::sqrt(posterior[k] * (1.0 - posterior[k]) / hits);
    CHECK(std::abs(freq - posterior[k]) < 4.0 * pse + 1e-9);
  }
}

TEST_CASE("fibres are connected under single error moves") {
  std::mt19937 rng(5150);
  for (int T : {2, 3, 4}) {
    HistoryUniverse u(StudyShape{T});
    ConstraintSystem sys = build_constraints(u);
    MoveTables tables(u);
    for (int trial = 0; trial < 15; ++trial) {
      const CountVector observed = random_observed(u, rng, 3, 4);
      const Fibre fibre = enumerate_fibre(observed, sys);
      const ConnectivityReport report = check_connectivity(fibre, tables);
      CAPTURE(T);
      CAPTURE(trial);
      CHECK(report.connected);
      CHECK(report.witness.empty());
    }
  }
}

TEST_CASE("stitching two fibres together is reported as disconnected") {
  HistoryUniverse u(StudyShape{2});
  ConstraintSystem sys = build_constraints(u);
  MoveTables tables(u);
  const Fibre paired =
      enumerate_fibre(counts_at(Alphabet::kObserved, u, {{"10", 1}, {"11", 1}}), sys);
  const Fibre lone = enumerate_fibre(counts_at(Alphabet::kObserved, u, {{"10", 2}}), sys);

  Fibre stitched;
  stitched.target = paired.target;
  stitched.elements = paired.elements;
  stitched.elements.insert(stitched.elements.end(), lone.elements.begin(), lone.elements.end());
  std::sort(stitched.elements.begin(), stitched.elements.end(),
            [](const CountVector& a, const CountVector& b) { return a.counts < b.counts; });

  const ConnectivityReport report = check_connectivity(stitched, tables);
  CHECK_FALSE(report.connected);
  REQUIRE(report.witness.size() == 2);
  for (std::size_t i : report.witness) {
    CHECK(total_errors(stitched.elements[i], sys) >= 0);
    CHECK(paired.find(stitched.elements[i]).has_value());
  }
}

TEST_CASE("reduction paths peel errors one at a time down to the zero configuration") {
  std::mt19937 rng(91);
  for (int T : {3, 4}) {
    HistoryUniverse u(StudyShape{T});
    ConstraintSystem sys = build_constraints(u);
    MoveTables tables(u);
    for (int trial = 0; trial < 10; ++trial) {
      const CountVector observed = random_observed(u, rng, 3, 4);
      const Fibre fibre = enumerate_fibre(observed, sys);
      const CountVector base = zero_error_config(observed, u);
      for (const CountVector& x : fibre.elements) {
        const std::vector<Move> path = reduction_path_to_zero(x, tables);
        CHECK(static_cast<std::int64_t>(path.size()) == total_errors(x, sys));

        LatentConfig cfg = LatentConfig::from(x);
        for (const Move& mv : path) {
          CHECK(mv.occasion >= 2);
          CHECK(mv.occasion <= T);
          apply_move(cfg, mv, -1);
          CHECK(in_fibre(cfg.x, fibre.target, sys));
        }
        CHECK(cfg.x == base);
        if (x == base) CHECK(path.empty());
      }
    }
  }
}

TEST_CASE("enumeration aborts once the size cap is exceeded") {
  HistoryUniverse u(StudyShape{3});
  ConstraintSystem sys = build_constraints(u);
  const CountVector observed = counts_at(Alphabet::kObserved, u, {{"110", 1}, {"101", 1}});
  CHECK_THROWS_AS(enumerate_fibre(observed, sys, 3), FibreSizeError);
  CHECK(enumerate_fibre(observed, sys, 4).elements.size() == 4);
}
