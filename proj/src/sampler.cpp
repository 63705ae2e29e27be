#include "recap/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace recap {

namespace {

constexpr double kTargetAcceptance = 0.44;

bool near(double a, double b) {
  if (a == b) return true;  // covers matching infinities
  return std::abs(a - b) <= 1e-6 * std::max({1.0, std::abs(a), std::abs(b)});
}

// Rebuilds the per-occasion truncated-binomial normalizers and the error-term
// sum at the state's current alpha and error counts.
void refresh_error_terms(ChainState& state, const Problem& problem) {
  const int T = problem.num_occasions();
  state.error_norms.assign(static_cast<std::size_t>(T) + 1, 0.0);
  state.error_sum = 0.0;
  for (int t = 2; t <= T; ++t) {
    state.error_norms[t] = log_trunc_binom_norm(problem.base.resightings[t],
                                                problem.base.marked_before[t],
                                                state.theta2.alpha, state.lf);
    state.error_sum +=
        log_error_factor(state.errors[t], problem.base.resightings[t],
                         problem.base.marked_before[t], state.theta2.alpha,
                         state.error_norms[t], state.lf);
  }
}

// Change in the pieces of the log target if `dir * move` were applied.
struct MoveDelta {
  double cjs = 0.0;
  double count_factorials = 0.0;
  double error = 0.0;

  double log_target_change() const { return cjs - count_factorials + error; }
};

MoveDelta move_delta(const ChainState& state, const Problem& problem, const Move& mv, int dir) {
  const ConstraintSystem& sys = *problem.sys;
  MoveDelta delta;

  const std::vector<double>& table = state.capture_logprob;
  delta.cjs = dir * (table[sys.capture_image(mv.false_neg)] +
                     table[sys.capture_image(mv.false_pos)] -
                     table[sys.capture_image(mv.unseen)] - table[sys.capture_image(mv.seen)]);

  const auto count = [&](std::size_t j) {
    return static_cast<double>(state.latent.count(j));
  };
  if (dir == 1) {
    delta.count_factorials = std::log(count(mv.false_neg) + 1.0) +
                             std::log(count(mv.false_pos) + 1.0) - std::log(count(mv.unseen)) -
                             std::log(count(mv.seen));
  } else {
    delta.count_factorials = std::log(count(mv.unseen) + 1.0) + std::log(count(mv.seen) + 1.0) -
                             std::log(count(mv.false_neg)) - std::log(count(mv.false_pos));
  }

  const int t = mv.occasion;
  const std::int64_t resighted = problem.base.resightings[t];
  const std::int64_t marked = problem.base.marked_before[t];
  delta.error = log_error_factor(state.errors[t] + dir, resighted, marked, state.theta2.alpha,
                                 state.error_norms[t], state.lf) -
                log_error_factor(state.errors[t], resighted, marked, state.theta2.alpha,
                                 state.error_norms[t], state.lf);
  return delta;
}

// Applies a move's effect on everything except the latent counts themselves
// (those go through apply_move so the support set stays consistent).
void commit_move(ChainState& state, const Problem& problem, const Move& mv, int dir,
                 const MoveDelta& delta) {
  const ConstraintSystem& sys = *problem.sys;
  const HistoryUniverse& u = *problem.universe;
  const std::size_t from_unseen = sys.capture_image(mv.unseen);
  const std::size_t from_seen = sys.capture_image(mv.seen);
  const std::size_t to_false_neg = sys.capture_image(mv.false_neg);
  const std::size_t to_false_pos = sys.capture_image(mv.false_pos);

  state.captures.counts[from_unseen] -= dir;
  state.captures.counts[from_seen] -= dir;
  state.captures.counts[to_false_neg] += dir;
  state.captures.counts[to_false_pos] += dir;
  state.aggregates.add_history(u, from_unseen, -dir);
  state.aggregates.add_history(u, from_seen, -dir);
  state.aggregates.add_history(u, to_false_neg, dir);
  state.aggregates.add_history(u, to_false_pos, dir);

  state.cjs_sum += delta.cjs;
  state.log_count_factorials += delta.count_factorials;
  state.errors[mv.occasion] += dir;
  state.total_errors += dir;
  state.error_sum += delta.error;
  state.log_target += delta.log_target_change();
}

bool accept_log_ratio(ChainState& state, double log_ratio) {
  if (log_ratio >= 0.0) return true;
  return std::log(state.rng.uniform()) < log_ratio;  // NaN compares false
}

void adapt_step(ThetaBlock& block, double accept_prob) {
  const double gain = 1.0 / std::pow(static_cast<double>(block.proposed), 0.6);
  block.step *= std::exp(gain * (accept_prob - kTargetAcceptance));
  block.step = std::clamp(block.step, 1e-3, 50.0);
}

double bounded_accept_prob(double log_ratio) {
  if (std::isnan(log_ratio)) return 0.0;
  return std::exp(std::min(0.0, log_ratio));
}

void update_capture_block(ChainState& state, ThetaBlock& block, bool adapt_now) {
  std::vector<double>& slots = block.family == ThetaBlock::Family::kSurvival
                                   ? state.theta1.survival
                                   : state.theta1.capture;
  ++block.proposed;
  const double current = slots[block.occasions.front()];
  const double proposal = expit(logit(current) + block.step * state.rng.normal());
  for (int t : block.occasions) slots[t] = proposal;
  const double proposal_loglik = state.aggregates.loglik(state.theta1);
  const double log_ratio = proposal_loglik - state.cjs_sum +
                           std::log(proposal * (1.0 - proposal)) -
                           std::log(current * (1.0 - current));
  if (accept_log_ratio(state, log_ratio)) {
    state.log_target += proposal_loglik - state.cjs_sum;
    state.cjs_sum = proposal_loglik;
    ++block.accepted;
  } else {
    for (int t : block.occasions) slots[t] = current;
  }
  if (adapt_now) adapt_step(block, bounded_accept_prob(log_ratio));
}

void update_error_block(ChainState& state, const Problem& problem, ThetaBlock& block,
                        bool adapt_now) {
  const int T = problem.num_occasions();
  ++block.proposed;
  const double current = state.theta2.alpha;
  const double proposal = expit(logit(current) + block.step * state.rng.normal());

  std::vector<double> proposal_norms(static_cast<std::size_t>(T) + 1, 0.0);
  double proposal_sum = 0.0;
  for (int t = 2; t <= T; ++t) {
    proposal_norms[t] = log_trunc_binom_norm(problem.base.resightings[t],
                                             problem.base.marked_before[t], proposal, state.lf);
    proposal_sum +=
        log_error_factor(state.errors[t], problem.base.resightings[t],
                         problem.base.marked_before[t], proposal, proposal_norms[t], state.lf);
  }
  const double prior_change =
      (state.theta2.beta_a - 1.0) * (std::log(proposal) - std::log(current)) +
      (state.theta2.beta_b - 1.0) * (std::log1p(-proposal) - std::log1p(-current));
  const double log_ratio = proposal_sum - state.error_sum + prior_change +
                           std::log(proposal * (1.0 - proposal)) -
                           std::log(current * (1.0 - current));
  if (accept_log_ratio(state, log_ratio)) {
    state.theta2.alpha = proposal;
    state.error_norms = std::move(proposal_norms);
    state.log_target += proposal_sum - state.error_sum + prior_change;
    state.error_sum = proposal_sum;
    ++block.accepted;
  }
  if (adapt_now) adapt_step(block, bounded_accept_prob(log_ratio));
}

}  // namespace

Problem make_problem(const CountVector& observed, const HistoryUniverse& universe,
                     const ConstraintSystem& sys, const MoveTables& tables) {
  if (&sys.universe() != &universe || &tables.universe() != &universe) {
    throw std::invalid_argument("constraint system and move tables must share the universe");
  }
  if (observed.alphabet != Alphabet::kObserved ||
      observed.counts.size() != universe.observed_size() || !observed.nonnegative()) {
    throw std::invalid_argument("observed counts have the wrong shape");
  }
  Problem problem;
  problem.universe = &universe;
  problem.sys = &sys;
  problem.tables = &tables;
  problem.observed = observed;
  problem.target = extend_counts(observed, universe);
  problem.releases = releases_from_observed(observed, universe);
  const CountVector base_config = zero_error_config(observed, universe);
  problem.base = stats_from(base_config, apply_capture_map(base_config, sys), problem.releases,
                            sys);
  LogFactorials lf;
  for (std::int64_t cohort : problem.releases) {
    problem.log_marking_multiplicity += lf(cohort);
  }
  return problem;
}

std::vector<ThetaBlock> make_theta_blocks(const Problem& problem, const SamplerConfig& config) {
  const int T = problem.num_occasions();
  std::vector<ThetaBlock> blocks;
  auto add_family = [&](ThetaBlock::Family family, ParamMode mode, int first, int last,
                        const std::string& stem) {
    if (mode == ParamMode::kFixed || first > last) return;
    if (mode == ParamMode::kConstant) {
      ThetaBlock block;
      block.family = family;
      for (int t = first; t <= last; ++t) block.occasions.push_back(t);
      block.name = stem;
      block.step = config.initial_step;
      blocks.push_back(std::move(block));
      return;
    }
    for (int t = first; t <= last; ++t) {
      ThetaBlock block;
      block.family = family;
      block.occasions = {t};
      block.name = stem + "_" + std::to_string(t);
      block.step = config.initial_step;
      blocks.push_back(std::move(block));
    }
  };
  add_family(ThetaBlock::Family::kSurvival, config.survival_mode, 1, T - 1, "phi");
  add_family(ThetaBlock::Family::kCapture, config.capture_mode, 2, T, "p");
  if (config.estimate_alpha) {
    ThetaBlock block;
    block.family = ThetaBlock::Family::kError;
    block.name = "alpha";
    block.step = config.initial_step;
    blocks.push_back(std::move(block));
  }
  return blocks;
}

ChainState init_chain(const Problem& problem, const SamplerConfig& config) {
  if (!config.valid()) throw std::invalid_argument("invalid sampler configuration");
  const HistoryUniverse& u = *problem.universe;
  const int T = u.num_occasions();

  ChainState state;
  state.rng = Rng(config.seed, config.stream);
  state.theta1 = config.theta_start.survival.empty() ? CaptureParams::constant(T, 0.5, 0.5)
                                                     : config.theta_start;
  if (state.theta1.num_occasions() != T || !state.theta1.valid()) {
    throw std::invalid_argument("starting capture parameters do not fit the study");
  }
  state.theta2 = config.error_start;
  state.theta2.estimated = config.estimate_alpha;
  if (!state.theta2.valid()) throw std::invalid_argument("invalid error parameter");

  state.latent = LatentConfig::from(zero_error_config(problem.observed, u));
  state.captures = apply_capture_map(state.latent.x, *problem.sys);
  state.errors.assign(static_cast<std::size_t>(T) + 1, 0);
  state.total_errors = 0;

  state.aggregates = CjsAggregates::from_counts(state.captures, u);
  state.cjs_sum = state.aggregates.loglik(state.theta1);
  if (config.update_latent) state.capture_logprob = cjs_log_table(u, state.theta1);

  state.log_count_factorials = 0.0;
  for (std::size_t j : state.latent.support) {
    state.log_count_factorials += state.lf(state.latent.count(j));
  }
  refresh_error_terms(state, problem);
  state.log_target = problem.log_marking_multiplicity + state.cjs_sum -
                     state.log_count_factorials + state.error_sum +
                     log_prior(state.theta1, state.theta2);
  return state;
}

void update_theta(ChainState& state, const Problem& problem, std::vector<ThetaBlock>& blocks,
                  bool adapt_now) {
  bool capture_params_changed = false;
  for (ThetaBlock& block : blocks) {
    if (block.family == ThetaBlock::Family::kError) {
      update_error_block(state, problem, block, adapt_now);
      continue;
    }
    const std::int64_t before = block.accepted;
    update_capture_block(state, block, adapt_now);
    capture_params_changed = capture_params_changed || block.accepted != before;
  }
  if (capture_params_changed && !state.capture_logprob.empty()) {
    state.capture_logprob = cjs_log_table(*problem.universe, state.theta1);
  }
}

bool update_x_dynamic(ChainState& state, const Problem& problem, Diagnostics& diag) {
  ++diag.latent_proposed;
  const bool adding = state.rng.bernoulli(0.5);
  const std::optional<MoveDraw> draw =
      adding ? sample_add_move(state.latent, *problem.tables, state.rng)
             : sample_remove_move(state.latent, *problem.tables, state.rng);
  if (!draw) {
    ++diag.latent_dead_end;
    return false;
  }
  const Move& mv = draw->move;
  const MoveDelta delta = move_delta(state, problem, mv, draw->direction);
  apply_move(state.latent, mv, draw->direction);
  const double reverse = reverse_logq(state.latent, *draw, *problem.tables);
  const double log_ratio = delta.log_target_change() + reverse - draw->forward_logq;
  if (accept_log_ratio(state, log_ratio)) {
    commit_move(state, problem, mv, draw->direction, delta);
    ++diag.latent_accepted;
    return true;
  }
  apply_move(state.latent, mv, -draw->direction);
  return false;
}

bool update_x_fixed(ChainState& state, const Problem& problem, const std::vector<Move>& basis,
                    Diagnostics& diag) {
  ++diag.latent_proposed;
  if (basis.empty()) {
    ++diag.latent_dead_end;
    return false;
  }
  const Move& mv = basis[state.rng.uniform_int(basis.size())];
  const int dir = state.rng.bernoulli(0.5) ? 1 : -1;
  const bool feasible =
      dir == 1 ? state.latent.count(mv.unseen) > 0 && state.latent.count(mv.seen) > 0
               : state.latent.count(mv.false_neg) > 0 && state.latent.count(mv.false_pos) > 0;
  if (!feasible) {
    ++diag.latent_infeasible;
    return false;
  }
  const MoveDelta delta = move_delta(state, problem, mv, dir);
  if (accept_log_ratio(state, delta.log_target_change())) {
    apply_move(state.latent, mv, dir);
    commit_move(state, problem, mv, dir, delta);
    ++diag.latent_accepted;
    return true;
  }
  return false;
}

std::optional<std::string> verify_state(const ChainState& state, const Problem& problem) {
  const HistoryUniverse& u = *problem.universe;
  if (!in_fibre(state.latent.x, problem.target, *problem.sys)) {
    return "latent configuration left the fibre";
  }
  if (!(state.captures == apply_capture_map(state.latent.x, *problem.sys))) {
    return "captures diverged from the collapse of the latent counts";
  }
  for (std::size_t j = 0; j < state.latent.x.counts.size(); ++j) {
    const bool in_support = state.latent.where[j] >= 0;
    if (in_support != (state.latent.x.counts[j] > 0)) {
      return "support set inconsistent with the counts";
    }
    if (in_support &&
        state.latent.support[static_cast<std::size_t>(state.latent.where[j])] != j) {
      return "support index table corrupt";
    }
  }

  const CjsAggregates fresh = CjsAggregates::from_counts(state.captures, u);
  if (fresh.alive != state.aggregates.alive || fresh.seen != state.aggregates.seen ||
      fresh.missed != state.aggregates.missed || fresh.last != state.aggregates.last) {
    return "capture aggregates drifted";
  }
  const SufficientStats stats =
      stats_from(state.latent.x, state.captures, problem.releases, *problem.sys);
  if (stats.errors != state.errors) return "per-occasion error counts drifted";
  const std::int64_t total =
      std::accumulate(state.errors.begin(), state.errors.end(), std::int64_t{0});
  if (total != state.total_errors) return "total error count drifted";
  for (int t = 2; t <= problem.num_occasions(); ++t) {
    if (state.errors[t] > problem.base.max_errors[t]) {
      return "error count exceeds the per-occasion cap";
    }
  }

  if (!near(state.cjs_sum, state.aggregates.loglik(state.theta1))) {
    return "capture log likelihood cache drifted";
  }
  double factorials = 0.0;
  for (std::size_t j : state.latent.support) factorials += state.lf(state.latent.count(j));
  if (!near(state.log_count_factorials, factorials)) {
    return "count factorial cache drifted";
  }

  ChainState scratch = state;
  refresh_error_terms(scratch, problem);
  if (!near(state.error_sum, scratch.error_sum)) return "error term cache drifted";

  const double joint = log_joint(state.latent.x, state.captures, state.theta1, state.theta2,
                                 problem.target, *problem.sys, state.lf) +
                       log_prior(state.theta1, state.theta2);
  if (!near(state.log_target, joint)) return "log target drifted from the joint density";
  return std::nullopt;
}

RunResult run_chain(const Problem& problem, const SamplerConfig& config) {
  const int T = problem.num_occasions();
  ChainState state = init_chain(problem, config);
  std::vector<ThetaBlock> blocks = make_theta_blocks(problem, config);
  std::vector<Move> basis;
  if (config.update_latent && config.algorithm == Algorithm::kFixedBasis) {
    basis = static_full_basis(*problem.universe, config.fixed_basis_occasion_cap);
  }

  RunResult result;
  SampleSet& samples = result.samples;
  for (int t = 1; t <= T - 1; ++t) samples.names.push_back("phi_" + std::to_string(t));
  for (int t = 2; t <= T; ++t) samples.names.push_back("p_" + std::to_string(t));
  samples.names.push_back("alpha");
  samples.draws.resize(samples.names.size());

  for (std::int64_t iter = 0; iter < config.iterations; ++iter) {
    state.iter = iter;
    update_theta(state, problem, blocks, config.adapt && iter < config.burnin);
    if (config.update_latent) {
      for (int step = 0; step < config.latent_steps_per_iter; ++step) {
        if (config.algorithm == Algorithm::kDynamic) {
          update_x_dynamic(state, problem, result.diagnostics);
        } else {
          update_x_fixed(state, problem, basis, result.diagnostics);
        }
      }
    }
    if (config.invariant_check_stride > 0 && (iter + 1) % config.invariant_check_stride == 0) {
      if (verify_state(state, problem)) ++result.diagnostics.invariant_violations;
    }
    if (iter >= config.burnin && (iter - config.burnin) % config.thin == 0) {
      std::size_t slot = 0;
      for (int t = 1; t <= T - 1; ++t) samples.draws[slot++].push_back(state.theta1.survival[t]);
      for (int t = 2; t <= T; ++t) samples.draws[slot++].push_back(state.theta1.capture[t]);
      samples.draws[slot++].push_back(state.theta2.alpha);
      samples.error_trace.push_back(state.total_errors);
      samples.log_target_trace.push_back(state.log_target);
      if (config.track_configs) ++samples.config_counts[state.latent.x.counts];
      ++samples.retained;
    }
  }

  result.diagnostics.theta_blocks = std::move(blocks);
  result.diagnostics.distinct_configs = samples.config_counts.size();
  return result;
}

double effective_sample_size(const std::vector<double>& draws) {
  const std::size_t n = draws.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = draws[i] - mean;
  const auto autocov = [&](std::size_t lag) {
    double sum = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) sum += centered[i] * centered[i + lag];
    return sum / static_cast<double>(n);
  };
  const double variance = autocov(0);
  if (!(variance > 0.0)) return static_cast<double>(n);  // constant chain

  double pair_sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  const std::size_t max_pairs = std::min<std::size_t>(n / 2, 2000);
  for (std::size_t m = 0; m < max_pairs && 2 * m + 1 < n; ++m) {
    double pair = (autocov(2 * m) + autocov(2 * m + 1)) / variance;
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    pair_sum += pair;
    previous = pair;
  }
  const double correlation_time =
      std::max(-1.0 + 2.0 * pair_sum, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / correlation_time;
}

double empirical_quantile(std::vector<double> draws, double q) {
  if (draws.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(draws.begin(), draws.end());
  const double position = q * static_cast<double>(draws.size() - 1);
  const auto lower = static_cast<std::size_t>(position);
  if (lower + 1 >= draws.size()) return draws.back();
  const double fraction = position - static_cast<double>(lower);
  return draws[lower] + fraction * (draws[lower + 1] - draws[lower]);
}

std::vector<SummaryRow> posterior_summary(const SampleSet& samples) {
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < samples.names.size(); ++i) {
    const std::vector<double>& trace = samples.draws[i];
    if (trace.empty()) continue;
    SummaryRow row;
    row.name = samples.names[i];
    row.mean = std::accumulate(trace.begin(), trace.end(), 0.0) /
               static_cast<double>(trace.size());
    row.lower = empirical_quantile(trace, 0.025);
    row.upper = empirical_quantile(trace, 0.975);
    row.ess = effective_sample_size(trace);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace recap
