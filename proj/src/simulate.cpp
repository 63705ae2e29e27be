#include "recap/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "recap/logprob.hpp"

namespace recap {

namespace {

// Draws k distinct entries by partial Fisher-Yates; scrambles the pool prefix.
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t>& pool,
                                                  std::int64_t k, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    const auto at = static_cast<std::size_t>(i);
    const std::size_t j =
        at + static_cast<std::size_t>(rng.uniform_int(
                 static_cast<std::uint64_t>(pool.size() - at)));
    std::swap(pool[at], pool[j]);
    out.push_back(pool[at]);
  }
  return out;
}

struct ParamSpec {
  std::string name;      // reported parameter label
  std::string row_name;  // trace name inside a chain's summary
  double truth = 0.0;
  bool model3_only = false;
};

const SummaryRow* find_row(const std::vector<SummaryRow>& rows, const std::string& name) {
  for (const SummaryRow& row : rows) {
    if (row.name == name) return &row;
  }
  return nullptr;
}

}  // namespace

bool StudyDesign::valid() const {
  if (num_occasions < 2) return false;
  if (releases.size() != static_cast<std::size_t>(num_occasions) + 1) return false;
  if (releases.front() != 0) return false;
  if (releases.back() != 0) return false;  // individuals marked at T are never observable
  std::int64_t total = 0;
  for (std::int64_t count : releases) {
    if (count < 0) return false;
    total += count;
  }
  if (total <= 0) return false;
  if (!theta_true.valid() || theta_true.num_occasions() != num_occasions) return false;
  if (!(alpha_true > 0.0 && alpha_true <= 1.0)) return false;
  return replicates >= 1;
}

std::vector<History> simulate_cjs(const StudyDesign& design, Rng& rng) {
  if (!design.valid()) throw std::invalid_argument("invalid study design");
  const int T = design.num_occasions;
  std::vector<History> out;
  for (int s = 1; s < T; ++s) {
    for (std::int64_t i = 0; i < design.releases[static_cast<std::size_t>(s)]; ++i) {
      std::vector<std::uint8_t> events(static_cast<std::size_t>(T), kEventNone);
      events[static_cast<std::size_t>(s) - 1] = kEventSeen;
      bool alive = true;
      for (int t = s + 1; t <= T; ++t) {
        alive = alive &&
                rng.bernoulli(design.theta_true.survival[static_cast<std::size_t>(t) - 1]);
        if (alive && rng.bernoulli(design.theta_true.capture[static_cast<std::size_t>(t)])) {
          events[static_cast<std::size_t>(t) - 1] = kEventSeen;
        }
      }
      out.emplace_back(std::move(events));
    }
  }
  return out;
}

CountVector counts_of_histories(const std::vector<History>& histories, Alphabet alphabet,
                                const HistoryUniverse& universe) {
  CountVector counts = zero_counts(alphabet, universe);
  for (const History& h : histories) {
    std::optional<std::size_t> index;
    switch (alphabet) {
      case Alphabet::kObserved:
        index = universe.find_observed_index(h);
        break;
      case Alphabet::kLatentCapture:
        index = universe.find_capture_index(h);
        break;
      case Alphabet::kLatentError:
        index = universe.find_latent_index(h);
        break;
    }
    if (!index) {
      throw std::invalid_argument("history '" + h.str() + "' is not in the alphabet");
    }
    ++counts.counts[*index];
  }
  return counts;
}

std::int64_t sample_trunc_binom(std::int64_t resighted, std::int64_t marked, double alpha,
                                const LogFactorials& lf, Rng& rng) {
  const std::int64_t cap = std::min(resighted, marked - resighted);
  if (cap <= 0) return 0;
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::int64_t e = 0; e <= cap; ++e) {
    cumulative += std::exp(log_trunc_binom(e, resighted, marked, alpha, lf));
    if (u < cumulative) return e;
  }
  return cap;  // cumulative sum can fall a rounding error short of one
}

CorruptedData corrupt_bre(const std::vector<History>& capture_histories, double alpha,
                          const HistoryUniverse& universe, Rng& rng) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha outside (0, 1]");
  const int T = universe.num_occasions();
  const LogFactorials lf;
  const std::size_t n = capture_histories.size();
  std::vector<std::vector<std::uint8_t>> latent(n);
  std::vector<int> marking(n);
  for (std::size_t i = 0; i < n; ++i) {
    const History& h = capture_histories[i];
    if (h.length() != T || !h.is_binary()) {
      throw std::invalid_argument("capture history of wrong shape");
    }
    marking[i] = h.marking_occasion();
    if (marking[i] < 1 || marking[i] >= T) {
      throw std::invalid_argument("capture history without a usable marking occasion");
    }
    latent[i] = h.events;
  }

  // Later occasions still hold raw capture events while occasion t is
  // processed, so the sighted/unsighted split below is exact.
  for (int t = 2; t <= T; ++t) {
    std::vector<std::size_t> sighted;
    std::vector<std::size_t> unsighted;
    for (std::size_t i = 0; i < n; ++i) {
      if (marking[i] >= t) continue;
      if (latent[i][static_cast<std::size_t>(t) - 1] == kEventSeen) {
        sighted.push_back(i);
      } else {
        unsighted.push_back(i);
      }
    }
    const auto resighted = static_cast<std::int64_t>(sighted.size());
    const auto marked = resighted + static_cast<std::int64_t>(unsighted.size());
    const std::int64_t e = sample_trunc_binom(resighted, marked, alpha, lf, rng);
    if (e == 0) continue;
    const std::vector<std::size_t> victims = draw_without_replacement(sighted, e, rng);
    const std::vector<std::size_t> recipients = draw_without_replacement(unsighted, e, rng);
    for (std::int64_t k = 0; k < e; ++k) {
      latent[victims[static_cast<std::size_t>(k)]][static_cast<std::size_t>(t) - 1] =
          kEventFalseNeg;
      latent[recipients[static_cast<std::size_t>(k)]][static_cast<std::size_t>(t) - 1] =
          kEventFalsePos;
    }
  }

  CorruptedData out;
  out.observed = zero_counts(Alphabet::kObserved, universe);
  out.latent = zero_counts(Alphabet::kLatentError, universe);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint8_t> recorded(latent[i].size());
    for (std::size_t d = 0; d < recorded.size(); ++d) {
      const std::uint8_t event = latent[i][d];
      recorded[d] = (event == kEventSeen || event == kEventFalsePos) ? 1 : 0;
    }
    const History error_history{std::vector<std::uint8_t>(latent[i])};
    const History observed_history{std::move(recorded)};
    const auto latent_index = universe.find_latent_index(error_history);
    const auto observed_index = universe.find_observed_index(observed_history);
    if (!latent_index || !observed_index) {
      throw std::logic_error("corruption produced an invalid history");
    }
    ++out.latent.counts[*latent_index];
    ++out.observed.counts[*observed_index];
  }
  return out;
}

StudyReport replication_study(const StudyDesign& design, const StudyFitConfig& fit) {
  if (!design.valid()) throw std::invalid_argument("invalid study design");
  if (fit.alphas.empty()) throw std::invalid_argument("no error rates to study");
  for (double alpha : fit.alphas) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha outside (0, 1]");
  }
  if (fit.iterations <= fit.burnin || fit.burnin < 0 || fit.thin < 1 ||
      fit.latent_steps_per_iter < 1 || !(fit.initial_step > 0.0) || fit.threads < 1) {
    throw std::invalid_argument("invalid fit configuration");
  }

  const int T = design.num_occasions;
  const HistoryUniverse universe{StudyShape{T}};
  const ConstraintSystem sys{universe};
  const MoveTables tables{universe};

  std::vector<ParamSpec> params;
  for (int t = 1; t < T; ++t) {
    const std::string name = "phi_" + std::to_string(t);
    params.push_back({name, name, design.theta_true.survival[static_cast<std::size_t>(t)],
                      false});
  }
  params.push_back({"p", "p_2", design.theta_true.capture[2], false});
  if (fit.run_model3 && fit.estimate_alpha) {
    params.push_back({"alpha", "alpha", 0.0, true});  // truth filled per cell
  }

  auto fit_once = [&](const CountVector& data, std::uint64_t stream, bool with_latent,
                      double alpha_known) {
    SamplerConfig config;
    config.algorithm = Algorithm::kDynamic;
    config.iterations = fit.iterations;
    config.burnin = fit.burnin;
    config.thin = fit.thin;
    config.seed = design.seed;
    config.stream = stream;
    config.update_latent = with_latent;
    config.latent_steps_per_iter = with_latent ? fit.latent_steps_per_iter : 1;
    config.survival_mode = ParamMode::kPerOccasion;
    config.capture_mode = ParamMode::kConstant;
    config.estimate_alpha = with_latent && fit.estimate_alpha;
    config.error_start.alpha = with_latent ? alpha_known : 1.0;
    config.initial_step = fit.initial_step;
    config.track_configs = false;
    const Problem problem = make_problem(data, universe, sys, tables);
    return run_chain(problem, config);
  };

  struct FitRow {
    int model;
    std::size_t alpha_index;
    std::size_t param_index;
    double mean;
    double lower;
    double upper;
  };
  struct Outcome {
    std::vector<FitRow> rows;
    std::string failure;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(design.replicates));

  // Replicates are independent given their streams, so workers may run them
  // in any order; the reduction below is serial and in replicate order,
  // keeping the report identical for every thread count.
  auto run_replicate = [&](int r) {
    Outcome& outcome = outcomes[static_cast<std::size_t>(r)];
    auto collect = [&](int model, std::size_t alpha_index, const RunResult& result) {
      const std::vector<SummaryRow> rows = posterior_summary(result.samples);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (params[pi].model3_only && model != 3) continue;
        const SummaryRow* row = find_row(rows, params[pi].row_name);
        if (row == nullptr) throw std::logic_error("missing trace " + params[pi].row_name);
        outcome.rows.push_back({model, alpha_index, pi, row->mean, row->lower, row->upper});
      }
    };
    const std::uint64_t base_stream = static_cast<std::uint64_t>(r) * 64;
    try {
      Rng sim_rng{design.seed, base_stream};
      const std::vector<History> histories = simulate_cjs(design, sim_rng);
      const CountVector error_free =
          counts_of_histories(histories, Alphabet::kObserved, universe);
      collect(1, 0, fit_once(error_free, base_stream + 1, false, 1.0));
      for (std::size_t a = 0; a < fit.alphas.size(); ++a) {
        const CorruptedData corrupted =
            corrupt_bre(histories, fit.alphas[a], universe, sim_rng);
        collect(2, a, fit_once(corrupted.observed, base_stream + 2 + 2 * a, false, 1.0));
        if (fit.run_model3) {
          collect(3, a,
                  fit_once(corrupted.observed, base_stream + 3 + 2 * a, true,
                           fit.alphas[a]));
        }
      }
    } catch (const std::exception& ex) {
      outcome.rows.clear();
      outcome.failure = "replicate " + std::to_string(r) + ": " + ex.what();
    }
  };

  const int workers = std::min(fit.threads, design.replicates);
  if (workers <= 1) {
    for (int r = 0; r < design.replicates; ++r) run_replicate(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < design.replicates; r = next.fetch_add(1)) {
          run_replicate(r);
        }
      });
    }
    for (std::thread& worker : pool) worker.join();
  }

  struct Accum {
    int count = 0;
    double bias = 0.0;
    double width = 0.0;
    int covered = 0;
  };
  std::map<std::tuple<int, std::size_t, std::size_t>, Accum> totals;

  StudyReport report;
  report.attempted = design.replicates;
  for (const Outcome& outcome : outcomes) {
    if (!outcome.failure.empty()) {
      report.failures.push_back(outcome.failure);
      continue;
    }
    ++report.succeeded;
    for (const FitRow& row : outcome.rows) {
      const ParamSpec& spec = params[row.param_index];
      const double truth = spec.model3_only ? fit.alphas[row.alpha_index] : spec.truth;
      Accum& cell = totals[{row.model, row.alpha_index, row.param_index}];
      ++cell.count;
      cell.bias += row.mean - truth;
      cell.width += row.upper - row.lower;
      if (row.lower <= truth && truth <= row.upper) ++cell.covered;
    }
  }

  auto emit = [&](int model, std::size_t alpha_index, double alpha_value) {
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      const auto it = totals.find({model, alpha_index, pi});
      if (it == totals.end()) continue;
      const Accum& sums = it->second;
      StudyCell cell;
      cell.model = model;
      cell.alpha = alpha_value;
      cell.parameter = params[pi].name;
      cell.true_value = params[pi].model3_only ? alpha_value : params[pi].truth;
      cell.boundary = cell.true_value <= 0.0 || cell.true_value >= 1.0;
      cell.replicates = sums.count;
      cell.mean_bias = sums.bias / sums.count;
      cell.mean_width = sums.width / sums.count;
      cell.coverage = static_cast<double>(sums.covered) / sums.count;
      report.cells.push_back(std::move(cell));
    }
  };
  emit(1, 0, 1.0);
  for (std::size_t a = 0; a < fit.alphas.size(); ++a) emit(2, a, fit.alphas[a]);
  if (fit.run_model3) {
    for (std::size_t a = 0; a < fit.alphas.size(); ++a) emit(3, a, fit.alphas[a]);
  }
  return report;
}

}  // namespace recap
