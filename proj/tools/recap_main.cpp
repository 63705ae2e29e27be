#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "recap/constraints.hpp"
#include "recap/histories.hpp"
#include "recap/logprob.hpp"
#include "recap/model.hpp"
#include "recap/oracle.hpp"
#include "recap/rng.hpp"
#include "recap/sampler.hpp"
#include "recap/simulate.hpp"

namespace {

using nlohmann::json;
using namespace recap;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitResource = 5;

// The universe enumerates every latent history, so its size is the binding
// resource; 12 occasions is ~5.6M latent histories and already generous.
constexpr int kMaxOccasions = 12;

struct CliError : std::runtime_error {
  int code;
  CliError(int exit_code, const std::string& message)
      : std::runtime_error(message), code(exit_code) {}
};

[[noreturn]] void fail(int code, const std::string& message) { throw CliError(code, message); }

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return "";
  const auto last = text.find_last_not_of(" \t\r");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(trim(text.substr(start, comma - start)));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t value = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail(kExitConfig, "key '" + key + "': '" + text + "' is not an integer");
  }
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const double numerator = parse_real(key, trim(text.substr(0, slash)));
    const double denominator = parse_real(key, trim(text.substr(slash + 1)));
    if (denominator == 0.0) fail(kExitConfig, "key '" + key + "': division by zero");
    return numerator / denominator;
  }
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail(kExitConfig, "key '" + key + "': '" + text + "' is not a number");
  }
  return value;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(kExitIo, "cannot open config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto eq = text.find('=');
    if (eq == std::string::npos) fail(kExitConfig, where + ": expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty() || value.empty()) fail(kExitConfig, where + ": expected key = value");
    if (!out.emplace(key, value).second) {
      fail(kExitConfig, where + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

// Typed access over the flat key = value map. Every key a command reads is
// marked; finish() rejects whatever is left, so unknown keys never pass
// silently.
class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, std::string> values)
      : values_(std::move(values)) {}

  bool has(const std::string& key) {
    seen_.insert(key);
    return values_.count(key) != 0;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) {
    seen_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) fail(kExitConfig, "missing required key '" + key + "'");
    return it->second;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback, std::int64_t lo,
                       std::int64_t hi) {
    seen_.insert(key);
    const auto it = values_.find(key);
    const std::int64_t value = it == values_.end() ? fallback : parse_int(key, it->second);
    if (value < lo || value > hi) {
      fail(kExitConfig, "key '" + key + "': " + std::to_string(value) + " is outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return value;
  }

  double get_real(const std::string& key, double fallback, double lo, double hi) {
    seen_.insert(key);
    const auto it = values_.find(key);
    const double value = it == values_.end() ? fallback : parse_real(key, it->second);
    if (!(value >= lo && value <= hi)) {
      fail(kExitConfig, "key '" + key + "': value is outside [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
    }
    return value;
  }

  double get_prob(const std::string& key, double fallback) {
    return get_real(key, fallback, 0.0, 1.0);
  }

  bool get_bool(const std::string& key, bool fallback) {
    seen_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    fail(kExitConfig, "key '" + key + "': expected true or false");
  }

  std::string choice(const std::string& key, const std::string& fallback,
                     const std::vector<std::string>& allowed) {
    const std::string value = get_string(key, fallback);
    if (std::find(allowed.begin(), allowed.end(), value) != allowed.end()) return value;
    std::string options;
    for (const std::string& option : allowed) {
      if (!options.empty()) options += ", ";
      options += option;
    }
    fail(kExitConfig, "key '" + key + "': '" + value + "' is not one of " + options);
  }

  std::vector<std::int64_t> require_int_list(const std::string& key) {
    std::vector<std::int64_t> out;
    for (const std::string& item : split_commas(require_string(key))) {
      out.push_back(parse_int(key, item));
    }
    return out;
  }

  std::vector<double> get_real_list(const std::string& key, std::vector<double> fallback,
                                    double lo, double hi) {
    seen_.insert(key);
    const auto it = values_.find(key);
    std::vector<double> out;
    if (it == values_.end()) {
      out = std::move(fallback);
    } else {
      for (const std::string& item : split_commas(it->second)) {
        out.push_back(parse_real(key, item));
      }
    }
    for (const double value : out) {
      if (!(value >= lo && value <= hi)) {
        fail(kExitConfig, "key '" + key + "': value is outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
      }
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : values_) {
      if (seen_.count(key) == 0) fail(kExitConfig, "unknown config key '" + key + "'");
    }
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> seen_;
};

int read_occasions(ConfigReader& cfg) {
  const std::int64_t occasions = cfg.get_int("study.occasions", -1, -1, kMaxOccasions);
  if (occasions < 2) {
    fail(kExitConfig, "study.occasions must be set to a value between 2 and " +
                          std::to_string(kMaxOccasions));
  }
  return static_cast<int>(occasions);
}

std::vector<std::int64_t> read_releases(ConfigReader& cfg, int num_occasions) {
  const std::vector<std::int64_t> list = cfg.require_int_list("study.releases");
  std::vector<std::int64_t> releases(static_cast<std::size_t>(num_occasions) + 1, 0);
  const auto expected = static_cast<std::size_t>(num_occasions - 1);
  if (list.size() != expected && list.size() != expected + 1) {
    fail(kExitConfig, "study.releases needs " + std::to_string(expected) +
                          " values, one per occasion before the last");
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i] < 0) fail(kExitConfig, "study.releases entries must be nonnegative");
    releases[i + 1] = list[i];
  }
  if (releases.back() != 0) {
    fail(kExitConfig, "individuals marked on the final occasion are never resighted; the "
                      "last release count must be 0");
  }
  return releases;
}

CaptureParams read_theta(ConfigReader& cfg, int num_occasions) {
  CaptureParams theta = CaptureParams::constant(num_occasions, 0.5, 0.5);
  const auto survival = cfg.get_real_list("params.survival", {0.5}, 0.0, 1.0);
  if (survival.size() == 1) {
    for (int t = 1; t < num_occasions; ++t) theta.survival[static_cast<std::size_t>(t)] = survival[0];
  } else if (survival.size() == static_cast<std::size_t>(num_occasions - 1)) {
    for (int t = 1; t < num_occasions; ++t) {
      theta.survival[static_cast<std::size_t>(t)] = survival[static_cast<std::size_t>(t - 1)];
    }
  } else {
    fail(kExitConfig, "params.survival needs 1 or " + std::to_string(num_occasions - 1) +
                          " values");
  }
  const auto capture = cfg.get_real_list("params.capture", {0.5}, 0.0, 1.0);
  if (capture.size() == 1) {
    for (int t = 2; t <= num_occasions; ++t) theta.capture[static_cast<std::size_t>(t)] = capture[0];
  } else if (capture.size() == static_cast<std::size_t>(num_occasions - 1)) {
    for (int t = 2; t <= num_occasions; ++t) {
      theta.capture[static_cast<std::size_t>(t)] = capture[static_cast<std::size_t>(t - 2)];
    }
  } else {
    fail(kExitConfig, "params.capture needs 1 or " + std::to_string(num_occasions - 1) +
                          " values");
  }
  return theta;
}

ParamMode read_mode(ConfigReader& cfg, const std::string& key, const std::string& fallback) {
  const std::string mode = cfg.choice(key, fallback, {"fixed", "constant", "per_occasion"});
  if (mode == "fixed") return ParamMode::kFixed;
  if (mode == "constant") return ParamMode::kConstant;
  return ParamMode::kPerOccasion;
}

SamplerConfig read_sampler_config(ConfigReader& cfg) {
  SamplerConfig config;
  config.algorithm = cfg.choice("sampler.algorithm", "dynamic", {"dynamic", "fixed_basis"}) ==
                             "dynamic"
                         ? Algorithm::kDynamic
                         : Algorithm::kFixedBasis;
  config.iterations = cfg.get_int("sampler.iterations", 20000, 1, 1000000000);
  config.burnin = cfg.get_int("sampler.burnin", 2000, 0, 1000000000);
  if (config.burnin >= config.iterations) {
    fail(kExitConfig, "sampler.burnin must be below sampler.iterations");
  }
  config.thin = cfg.get_int("sampler.thin", 1, 1, 1000000);
  config.seed = static_cast<std::uint64_t>(
      cfg.get_int("sampler.seed", 1, 0, std::numeric_limits<std::int64_t>::max()));
  config.stream = static_cast<std::uint64_t>(
      cfg.get_int("sampler.stream", 0, 0, std::numeric_limits<std::int64_t>::max()));
  config.update_latent = cfg.get_bool("sampler.update_latent", true);
  config.latent_steps_per_iter =
      static_cast<int>(cfg.get_int("sampler.latent_steps", 1, 0, 1000000));
  config.initial_step = cfg.get_real("sampler.initial_step", 0.5, 1e-6, 100.0);
  config.adapt = cfg.get_bool("sampler.adapt", true);
  config.invariant_check_stride =
      cfg.get_int("sampler.invariant_stride", 0, 0, 1000000000);
  config.fixed_basis_occasion_cap =
      static_cast<int>(cfg.get_int("sampler.fixed_basis_cap", 4, 2, kMaxOccasions));
  return config;
}

// Histories on disk, validated but not yet bound to a universe. Individuals
// first captured on the final occasion carry no information under the
// conditional likelihood and are dropped with a logged count.
struct RawData {
  std::map<std::string, std::int64_t> counts;
  int num_occasions = 0;
  std::int64_t individuals = 0;
  std::int64_t dropped_final = 0;
};

void note_history(RawData& data, const std::string& where, const std::string& text,
                  std::int64_t count) {
  for (const char c : text) {
    if (c != '0' && c != '1') {
      fail(kExitData, where + ": history '" + text + "' must be over {0,1}");
    }
  }
  if (data.num_occasions == 0) {
    if (text.size() < 2 || text.size() > static_cast<std::size_t>(kMaxOccasions)) {
      fail(kExitData, where + ": supported history length is 2.." +
                          std::to_string(kMaxOccasions) + " occasions");
    }
    data.num_occasions = static_cast<int>(text.size());
  } else if (text.size() != static_cast<std::size_t>(data.num_occasions)) {
    fail(kExitData, where + ": history length differs from earlier lines");
  }
  const auto first = text.find('1');
  if (first == std::string::npos) fail(kExitData, where + ": history has no captures");
  if (static_cast<int>(first) + 1 == data.num_occasions) {
    data.dropped_final += count;
    return;
  }
  data.counts[text] += count;
  data.individuals += count;
}

RawData load_history_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(kExitIo, "cannot open '" + path + "'");
  RawData data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    note_history(data, path + ":" + std::to_string(line_no), text, 1);
  }
  return data;
}

RawData load_counts_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(kExitIo, "cannot open '" + path + "'");
  RawData data;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::set<std::string> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (text != "history,count") fail(kExitData, where + ": expected header 'history,count'");
      header_seen = true;
      continue;
    }
    const auto comma = text.find(',');
    if (comma == std::string::npos || text.find(',', comma + 1) != std::string::npos) {
      fail(kExitData, where + ": expected 'history,count'");
    }
    const std::string history = trim(text.substr(0, comma));
    const std::string count_text = trim(text.substr(comma + 1));
    std::int64_t count = 0;
    const char* end = count_text.data() + count_text.size();
    const auto [ptr, ec] = std::from_chars(count_text.data(), end, count);
    if (ec != std::errc() || ptr != end || count < 0) {
      fail(kExitData, where + ": '" + count_text + "' is not a nonnegative count");
    }
    if (!rows.insert(history).second) {
      fail(kExitData, where + ": duplicate history '" + history + "'");
    }
    note_history(data, where, history, count);
  }
  if (!header_seen) fail(kExitData, path + ": missing 'history,count' header");
  return data;
}

CountVector observed_from(const RawData& raw, const HistoryUniverse& universe) {
  CountVector observed = zero_counts(Alphabet::kObserved, universe);
  for (const auto& [text, count] : raw.counts) {
    const std::optional<History> h = History::parse(text);
    const std::optional<std::size_t> index =
        h ? universe.find_observed_index(*h) : std::nullopt;
    if (!index) fail(kExitData, "history '" + text + "' is not a valid observed history");
    observed.counts[*index] += count;
  }
  return observed;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(kExitIo, "cannot write '" + path + "'");
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) fail(kExitIo, "write to '" + path + "' failed");
}

std::string fmt_double(double value) {
  char buffer[48];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

void write_history_file(const std::string& path, const CountVector& observed,
                        const HistoryUniverse& universe) {
  std::ofstream out = open_output(path);
  out << "# one individual per line, occasions 1.." << universe.num_occasions() << "\n";
  for (std::size_t i = 0; i < observed.counts.size(); ++i) {
    const std::string text = universe.observed_history(i).str();
    for (std::int64_t c = 0; c < observed.counts[i]; ++c) out << text << '\n';
  }
  finish_output(out, path);
}

void write_counts_file(const std::string& path, const CountVector& observed,
                       const HistoryUniverse& universe) {
  std::ofstream out = open_output(path);
  out << "history,count\n";
  for (std::size_t i = 0; i < observed.counts.size(); ++i) {
    out << universe.observed_history(i).str() << ',' << observed.counts[i] << '\n';
  }
  finish_output(out, path);
}

void write_json_file(const std::string& path, const json& value) {
  std::ofstream out = open_output(path);
  out << value.dump(2) << '\n';
  finish_output(out, path);
}

json echo_config(const std::map<std::string, std::string>& values) {
  json echo;
  for (const auto& [key, value] : values) echo[key] = value;
  return echo;
}

int cmd_simulate(const std::map<std::string, std::string>& values) {
  ConfigReader cfg(values);
  const int num_occasions = read_occasions(cfg);
  StudyDesign design;
  design.num_occasions = num_occasions;
  design.releases = read_releases(cfg, num_occasions);
  design.theta_true = read_theta(cfg, num_occasions);
  design.alpha_true = cfg.get_prob("params.alpha", 1.0);
  design.replicates = 1;
  design.seed = static_cast<std::uint64_t>(
      cfg.get_int("sampler.seed", 1, 0, std::numeric_limits<std::int64_t>::max()));
  const std::uint64_t stream = static_cast<std::uint64_t>(
      cfg.get_int("sampler.stream", 0, 0, std::numeric_limits<std::int64_t>::max()));
  const std::string histories_path = cfg.get_string("out.histories", "histories.txt");
  const std::string counts_path = cfg.get_string("out.counts", "counts.csv");
  cfg.finish();
  if (design.alpha_true <= 0.0) fail(kExitConfig, "params.alpha must be in (0, 1]");

  const HistoryUniverse universe{StudyShape{num_occasions}};
  CountVector observed = zero_counts(Alphabet::kObserved, universe);
  std::int64_t total_released = 0;
  for (const std::int64_t count : design.releases) total_released += count;
  if (total_released > 0) {
    Rng rng{design.seed, stream};
    const std::vector<History> histories = simulate_cjs(design, rng);
    observed = design.alpha_true < 1.0
                   ? corrupt_bre(histories, design.alpha_true, universe, rng).observed
                   : counts_of_histories(histories, Alphabet::kObserved, universe);
  }
  write_history_file(histories_path, observed, universe);
  write_counts_file(counts_path, observed, universe);
  return 0;
}

RawData load_input(ConfigReader& cfg, const std::string& cli_histories,
                   const std::string& cli_counts) {
  std::string histories_path = cfg.get_string("in.histories", "");
  std::string counts_path = cfg.get_string("in.counts", "");
  if (!cli_histories.empty()) histories_path = cli_histories;
  if (!cli_counts.empty()) counts_path = cli_counts;
  if (histories_path.empty() == counts_path.empty()) {
    fail(kExitConfig,
         "provide exactly one input: --histories/in.histories or --counts/in.counts");
  }
  RawData raw = histories_path.empty() ? load_counts_file(counts_path)
                                       : load_history_file(histories_path);
  std::optional<int> declared;
  if (cfg.has("study.occasions")) {
    declared = static_cast<int>(cfg.get_int("study.occasions", 0, 2, kMaxOccasions));
  }
  if (raw.num_occasions == 0) {
    if (!declared) fail(kExitData, "input has no histories and study.occasions is not set");
    raw.num_occasions = *declared;
  } else if (declared && *declared != raw.num_occasions) {
    fail(kExitData, "data has " + std::to_string(raw.num_occasions) +
                        " occasions but study.occasions = " + std::to_string(*declared));
  }
  return raw;
}

void write_samples_csv(const std::string& path, const SampleSet& samples,
                       const SamplerConfig& config) {
  std::ofstream out = open_output(path);
  out << "iteration";
  for (const std::string& name : samples.names) out << ',' << name;
  out << ",errors,log_joint\n";
  for (std::int64_t i = 0; i < samples.retained; ++i) {
    out << (config.burnin + i * config.thin);
    for (const std::vector<double>& trace : samples.draws) {
      out << ',' << fmt_double(trace[static_cast<std::size_t>(i)]);
    }
    out << ',' << samples.error_trace[static_cast<std::size_t>(i)] << ','
        << fmt_double(samples.log_target_trace[static_cast<std::size_t>(i)]) << '\n';
  }
  finish_output(out, path);
}

int cmd_fit(const std::map<std::string, std::string>& values,
            const std::string& cli_histories, const std::string& cli_counts) {
  ConfigReader cfg(values);
  const RawData raw = load_input(cfg, cli_histories, cli_counts);
  const int num_occasions = raw.num_occasions;

  SamplerConfig config = read_sampler_config(cfg);
  config.survival_mode = read_mode(cfg, "fit.survival_mode", "per_occasion");
  config.capture_mode = read_mode(cfg, "fit.capture_mode", "constant");
  config.estimate_alpha = cfg.get_bool("fit.estimate_alpha", false);
  config.theta_start = read_theta(cfg, num_occasions);
  config.error_start.alpha = cfg.get_prob("params.alpha", 1.0);
  config.error_start.beta_a = cfg.get_real("prior.alpha_a", 19.0, 1e-9, 1e9);
  config.error_start.beta_b = cfg.get_real("prior.alpha_b", 1.0, 1e-9, 1e9);
  const std::string samples_path = cfg.get_string("out.samples", "samples.csv");
  const std::string summary_path = cfg.get_string("out.summary", "summary.json");
  cfg.finish();
  if (config.update_latent && config.error_start.alpha == 0.0) {
    fail(kExitConfig, "params.alpha must be positive when latent moves are enabled");
  }

  if (raw.dropped_final > 0) {
    std::cerr << "note: dropped " << raw.dropped_final
              << " individual(s) first captured on the final occasion\n";
  }

  const HistoryUniverse universe{StudyShape{num_occasions}};
  const ConstraintSystem sys{universe};
  const MoveTables tables{universe};
  const CountVector observed = observed_from(raw, universe);
  const Problem problem = make_problem(observed, universe, sys, tables);
  const RunResult result = run_chain(problem, config);

  write_samples_csv(samples_path, result.samples, config);

  json summary;
  summary["occasions"] = num_occasions;
  summary["individuals"] = raw.individuals;
  summary["dropped_final_occasion"] = raw.dropped_final;
  summary["seed"] = config.seed;
  summary["stream"] = config.stream;
  summary["iterations"] = config.iterations;
  summary["burnin"] = config.burnin;
  summary["thin"] = config.thin;
  summary["retained"] = result.samples.retained;
  summary["distinct_configs"] = result.diagnostics.distinct_configs;
  summary["invariant_violations"] = result.diagnostics.invariant_violations;
  json acceptance;
  for (const ThetaBlock& block : result.diagnostics.theta_blocks) {
    acceptance[block.name] = block.acceptance();
  }
  if (result.diagnostics.latent_proposed > 0) {
    acceptance["latent"] = result.diagnostics.latent_acceptance();
  }
  summary["acceptance"] = acceptance;
  summary["latent_moves"] = {{"proposed", result.diagnostics.latent_proposed},
                             {"accepted", result.diagnostics.latent_accepted},
                             {"dead_end", result.diagnostics.latent_dead_end},
                             {"infeasible", result.diagnostics.latent_infeasible}};
  json posterior;
  for (const SummaryRow& row : posterior_summary(result.samples)) {
    posterior[row.name] = {{"mean", row.mean},
                           {"lower", row.lower},
                           {"upper", row.upper},
                           {"ess", row.ess}};
  }
  summary["posterior"] = posterior;
  summary["config"] = echo_config(values);
  write_json_file(summary_path, summary);
  return 0;
}

std::int64_t element_errors(const CountVector& x, const ConstraintSystem& sys) {
  std::int64_t total = 0;
  for (std::size_t j = 0; j < x.counts.size(); ++j) {
    if (x.counts[j] > 0) total += x.counts[j] * std::popcount(sys.false_neg_mask(j));
  }
  return total;
}

int cmd_oracle(const std::map<std::string, std::string>& values,
               const std::string& cli_histories, const std::string& cli_counts) {
  ConfigReader cfg(values);
  const RawData raw = load_input(cfg, cli_histories, cli_counts);
  const int num_occasions = raw.num_occasions;
  const CaptureParams theta = read_theta(cfg, num_occasions);
  ErrorParam error;
  error.alpha = cfg.get_prob("params.alpha", 1.0);
  const std::int64_t size_cap = cfg.get_int("oracle.size_cap", 100000, 1, 100000000);
  const std::string report_path = cfg.get_string("out.fibre", "fibre.json");
  cfg.finish();
  if (error.alpha <= 0.0) fail(kExitConfig, "params.alpha must be in (0, 1]");

  const HistoryUniverse universe{StudyShape{num_occasions}};
  const ConstraintSystem sys{universe};
  const MoveTables tables{universe};
  const CountVector observed = observed_from(raw, universe);

  Fibre fibre;
  try {
    fibre = enumerate_fibre(observed, sys, static_cast<std::size_t>(size_cap));
  } catch (const FibreSizeError& e) {
    fail(kExitResource, e.what());
  }
  const LogFactorials lf;
  const double loglik = exact_observed_loglik(fibre, theta, error, sys, lf);
  std::vector<double> posterior;
  try {
    posterior = exact_conditional_posterior(fibre, theta, error, sys, lf);
  } catch (const std::domain_error& e) {
    fail(kExitData, std::string("conditional posterior undefined: ") + e.what());
  }
  const ConnectivityReport connectivity = check_connectivity(fibre, tables);

  json report;
  report["occasions"] = num_occasions;
  report["individuals"] = observed.total();
  report["dropped_final_occasion"] = raw.dropped_final;
  report["alpha"] = error.alpha;
  report["fibre_size"] = fibre.elements.size();
  report["connected"] = connectivity.connected;
  report["largest_component_size"] =
      connectivity.connected ? fibre.elements.size() : connectivity.witness.size();
  report["log_likelihood"] = loglik;
  json elements = json::array();
  for (std::size_t i = 0; i < fibre.elements.size(); ++i) {
    json element;
    element["probability"] = posterior[i];
    element["errors"] = element_errors(fibre.elements[i], sys);
    json counts;
    for (std::size_t j = 0; j < fibre.elements[i].counts.size(); ++j) {
      if (fibre.elements[i].counts[j] > 0) {
        counts[universe.latent_history(j).str()] = fibre.elements[i].counts[j];
      }
    }
    element["config"] = counts;
    elements.push_back(std::move(element));
  }
  report["posterior"] = elements;
  report["config"] = echo_config(values);
  write_json_file(report_path, report);
  return 0;
}

int cmd_study(const std::map<std::string, std::string>& values, int threads) {
  ConfigReader cfg(values);
  const int num_occasions = read_occasions(cfg);
  StudyDesign design;
  design.num_occasions = num_occasions;
  design.releases = read_releases(cfg, num_occasions);
  design.theta_true = read_theta(cfg, num_occasions);
  design.alpha_true = 1.0;
  design.replicates = static_cast<int>(cfg.get_int("study.replicates", 20, 1, 100000));
  design.seed = static_cast<std::uint64_t>(
      cfg.get_int("sampler.seed", 1, 0, std::numeric_limits<std::int64_t>::max()));

  StudyFitConfig fit;
  fit.alphas = cfg.get_real_list("study.alphas", {8.0 / 9.0, 6.0 / 9.0}, 0.0, 1.0);
  for (const double alpha : fit.alphas) {
    if (alpha <= 0.0) fail(kExitConfig, "study.alphas must be in (0, 1]");
  }
  fit.iterations = cfg.get_int("sampler.iterations", 12000, 1, 1000000000);
  fit.burnin = cfg.get_int("sampler.burnin", 2000, 0, 1000000000);
  if (fit.burnin >= fit.iterations) {
    fail(kExitConfig, "sampler.burnin must be below sampler.iterations");
  }
  fit.thin = cfg.get_int("sampler.thin", 1, 1, 1000000);
  fit.latent_steps_per_iter =
      static_cast<int>(cfg.get_int("sampler.latent_steps", 10, 1, 1000000));
  fit.initial_step = cfg.get_real("sampler.initial_step", 0.8, 1e-6, 100.0);
  fit.estimate_alpha = cfg.get_bool("study.estimate_alpha", false);
  fit.run_model3 = cfg.get_bool("study.model3", true);
  fit.threads = threads;
  const std::string csv_path = cfg.get_string("out.report_csv", "study.csv");
  const std::string json_path = cfg.get_string("out.report_json", "study.json");
  cfg.finish();

  const StudyReport report = replication_study(design, fit);

  std::ofstream csv = open_output(csv_path);
  csv << "model,alpha,parameter,true_value,boundary,replicates,mean_bias,mean_width,"
         "coverage\n";
  for (const StudyCell& cell : report.cells) {
    csv << cell.model << ',' << fmt_double(cell.alpha) << ',' << cell.parameter << ','
        << fmt_double(cell.true_value) << ',' << (cell.boundary ? 1 : 0) << ','
        << cell.replicates << ',' << fmt_double(cell.mean_bias) << ','
        << fmt_double(cell.mean_width) << ',' << fmt_double(cell.coverage) << '\n';
  }
  finish_output(csv, csv_path);

  json out;
  out["attempted"] = report.attempted;
  out["succeeded"] = report.succeeded;
  out["failures"] = report.failures;
  json cells = json::array();
  for (const StudyCell& cell : report.cells) {
    cells.push_back({{"model", cell.model},
                     {"alpha", cell.alpha},
                     {"parameter", cell.parameter},
                     {"true_value", cell.true_value},
                     {"boundary", cell.boundary},
                     {"replicates", cell.replicates},
                     {"mean_bias", cell.mean_bias},
                     {"mean_width", cell.mean_width},
                     {"coverage", cell.coverage}});
  }
  out["cells"] = cells;
  out["config"] = echo_config(values);
  write_json_file(json_path, out);

  if (report.succeeded * 10 < report.attempted * 9) {
    std::cerr << "error: only " << report.succeeded << " of " << report.attempted
              << " replicates succeeded\n";
    return kExitData;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-history mark-recapture toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string histories_path;
  std::string counts_path;
  std::uint64_t seed = 0;
  int threads = 1;

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  CLI::App* fit = app.add_subcommand("fit", "sample the posterior for one dataset");
  CLI::App* oracle = app.add_subcommand("oracle", "enumerate a fibre exactly");
  CLI::App* study = app.add_subcommand("study", "run the bias/coverage replication study");
  for (CLI::App* command : {simulate, fit, oracle, study}) {
    command->add_option("--config", config_path, "key = value configuration file")
        ->required();
    command->add_option("--seed", seed, "overrides sampler.seed");
  }
  for (CLI::App* command : {fit, oracle}) {
    command->add_option("--histories", histories_path, "history file, one line per individual");
    command->add_option("--counts", counts_path, "counts CSV (history,count)");
  }
  study->add_option("--threads", threads, "worker threads for replicates")
      ->check(CLI::Range(1, 256));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    std::map<std::string, std::string> values = read_config_file(config_path);
    if (active->count("--seed") > 0) values["sampler.seed"] = std::to_string(seed);
    if (active == simulate) return cmd_simulate(values);
    if (active == fit) return cmd_fit(values, histories_path, counts_path);
    if (active == oracle) return cmd_oracle(values, histories_path, counts_path);
    return cmd_study(values, threads);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
