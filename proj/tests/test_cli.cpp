#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kCli = RECAP_CLI_PATH;

struct Workspace {
  fs::path dir;

  explicit Workspace(const std::string& name) {
    dir = fs::temp_directory_path() /
          ("recap_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream out(path(name));
    out << content;
    return path(name);
  }

  std::string slurp(const std::string& name) const {
    std::ifstream in(path(name));
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  }

  int run(const std::string& args, const std::string& tag) const {
    const std::string command = '"' + kCli + "\" " + args + " >" + path(tag + ".out") +
                                " 2>" + path(tag + ".err");
    const int status = std::system(command.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
  }

  json read_json(const std::string& name) const { return json::parse(slurp(name)); }
};

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::map<std::string, long long> counts_of(const std::vector<std::string>& rows,
                                           bool skip_header) {
  std::map<std::string, long long> out;
  for (std::size_t i = skip_header ? 1 : 0; i < rows.size(); ++i) {
    const auto comma = rows[i].find(',');
    if (comma == std::string::npos) {
      ++out[rows[i]];
    } else {
      out[rows[i].substr(0, comma)] += std::stoll(rows[i].substr(comma + 1));
    }
  }
  return out;
}

std::map<std::string, long long> positive_only(std::map<std::string, long long> counts) {
  for (auto it = counts.begin(); it != counts.end();) {
    it = it->second == 0 ? counts.erase(it) : std::next(it);
  }
  return counts;
}

std::string simulate_config(const Workspace& ws, const std::string& alpha,
                            const std::string& seed) {
  std::ostringstream cfg;
  cfg << "study.occasions = 4\n"
      << "study.releases = 10, 10, 10\n"
      << "params.survival = 0.8\n"
      << "params.capture = 0.5\n"
      << "params.alpha = " << alpha << "\n"
      << "sampler.seed = " << seed << "\n"
      << "out.histories = " << ws.path("h.txt") << "\n"
      << "out.counts = " << ws.path("c.csv") << "\n";
  return cfg.str();
}

}  // namespace

TEST_CASE("simulate emits deterministic, round-trippable files") {
  const Workspace ws("simulate");
  const std::string cfg = ws.write("sim.cfg", simulate_config(ws, "1/2", "42"));

  REQUIRE(ws.run("simulate --config " + cfg, "run1") == 0);
  const std::string histories = ws.slurp("h.txt");
  const std::string counts = ws.slurp("c.csv");

  const auto lines = data_lines(histories);
  CHECK(lines.size() == 30);
  for (const std::string& line : lines) {
    REQUIRE(line.size() == 4);
    for (const char c : line) CHECK((c == '0' || c == '1'));
    CHECK(line.find('1') != std::string::npos);
  }

  const auto count_rows = data_lines(counts);
  REQUIRE(count_rows.size() == 15);  // header + the 14 observable histories
  CHECK(count_rows[0] == "history,count");
  long long total = 0;
  for (const auto& [history, count] : counts_of(count_rows, true)) total += count;
  CHECK(total == 30);

  // The two output files describe the same multiset of histories.
  CHECK(positive_only(counts_of(lines, false)) == positive_only(counts_of(count_rows, true)));

  SUBCASE("same seed, same bytes; --seed overrides and changes them") {
    REQUIRE(ws.run("simulate --config " + cfg, "run2") == 0);
    CHECK(ws.slurp("h.txt") == histories);
    CHECK(ws.slurp("c.csv") == counts);

    REQUIRE(ws.run("simulate --config " + cfg + " --seed 42", "run3") == 0);
    CHECK(ws.slurp("h.txt") == histories);

    REQUIRE(ws.run("simulate --config " + cfg + " --seed 43", "run4") == 0);
    CHECK(ws.slurp("h.txt") != histories);
  }
}

TEST_CASE("simulate with zero releases writes empty data and zero counts") {
  const Workspace ws("simempty");
  std::ostringstream cfg;
  cfg << "study.occasions = 3\n"
      << "study.releases = 0, 0\n"
      << "out.histories = " << ws.path("h.txt") << "\n"
      << "out.counts = " << ws.path("c.csv") << "\n";
  const std::string path = ws.write("sim.cfg", cfg.str());
  REQUIRE(ws.run("simulate --config " + path, "run") == 0);
  CHECK(data_lines(ws.slurp("h.txt")).empty());
  const auto rows = data_lines(ws.slurp("c.csv"));
  REQUIRE(rows.size() == 7);  // header + 6 observable histories at T=3
  for (const auto& [history, count] : counts_of(rows, true)) CHECK(count == 0);
}

TEST_CASE("simulate reports unwritable outputs as I/O errors") {
  const Workspace ws("simio");
  std::ostringstream cfg;
  cfg << "study.occasions = 3\n"
      << "study.releases = 2, 0\n"
      << "out.histories = " << ws.path("missing/deep/h.txt") << "\n"
      << "out.counts = " << ws.path("c.csv") << "\n";
  const std::string path = ws.write("sim.cfg", cfg.str());
  CHECK(ws.run("simulate --config " + path, "run") == 3);
}

TEST_CASE("config mistakes exit with code 2 and name the offender") {
  const Workspace ws("cfgerr");

  SUBCASE("unknown key") {
    const std::string path = ws.write("bad.cfg",
                                      "study.occasions = 3\n"
                                      "study.releases = 2, 0\n"
                                      "sampler.bogus = 1\n");
    CHECK(ws.run("simulate --config " + path, "run") == 2);
    CHECK(ws.slurp("run.err").find("sampler.bogus") != std::string::npos);
  }
  SUBCASE("missing equals sign") {
    const std::string path = ws.write("bad.cfg", "study.occasions\n");
    CHECK(ws.run("simulate --config " + path, "run") == 2);
    CHECK(ws.slurp("run.err").find(":1") != std::string::npos);
  }
  SUBCASE("probability out of range") {
    const std::string path = ws.write("bad.cfg",
                                      "study.occasions = 3\n"
                                      "study.releases = 2, 0\n"
                                      "params.alpha = 1.5\n");
    CHECK(ws.run("simulate --config " + path, "run") == 2);
    CHECK(ws.slurp("run.err").find("params.alpha") != std::string::npos);
  }
  SUBCASE("missing config file is an I/O error") {
    CHECK(ws.run("simulate --config " + ws.path("nope.cfg"), "run") == 3);
  }
  SUBCASE("fit without input data") {
    const std::string path = ws.write("fit.cfg", "sampler.iterations = 100\n");
    CHECK(ws.run("fit --config " + path, "run") == 2);
  }
  SUBCASE("unknown command-line flag") {
    const std::string path = ws.write("sim.cfg",
                                      "study.occasions = 3\nstudy.releases = 2, 0\n");
    CHECK(ws.run("simulate --config " + path + " --frobnicate", "run") == 2);
  }
}

TEST_CASE("fit produces stable samples and a coherent summary") {
  const Workspace ws("fit");
  const std::string data = ws.write("h.txt",
                                    "# four individuals\n"
                                    "1100\n"
                                    "1010\n"
                                    "0110\n"
                                    "1100\n");
  std::ostringstream cfg;
  cfg << "sampler.iterations = 3000\n"
      << "sampler.burnin = 500\n"
      << "sampler.thin = 2\n"
      << "sampler.seed = 7\n"
      << "sampler.latent_steps = 2\n"
      << "params.alpha = 0.7\n"
      << "fit.survival_mode = constant\n"
      << "fit.capture_mode = constant\n"
      << "out.samples = " << ws.path("s.csv") << "\n"
      << "out.summary = " << ws.path("j.json") << "\n";
  const std::string path = ws.write("fit.cfg", cfg.str());

  REQUIRE(ws.run("fit --config " + path + " --histories " + data, "run1") == 0);
  const std::string samples = ws.slurp("s.csv");
  const auto rows = data_lines(samples);
  REQUIRE(rows.size() == 1251);  // header + (3000 - 500 + 1) / 2 retained draws
  CHECK(rows[0] == "iteration,phi_1,phi_2,phi_3,p_2,p_3,p_4,alpha,errors,log_joint");
  CHECK(rows[1].substr(0, 4) == "500,");
  CHECK(rows[2].substr(0, 4) == "502,");

  const json summary = ws.read_json("j.json");
  CHECK(summary["occasions"] == 4);
  CHECK(summary["individuals"] == 4);
  CHECK(summary["dropped_final_occasion"] == 0);
  CHECK(summary["retained"] == 1250);
  CHECK(summary["invariant_violations"] == 0);
  CHECK(summary["distinct_configs"].get<long long>() >= 1);
  const double latent_acceptance = summary["acceptance"]["latent"].get<double>();
  CHECK(latent_acceptance > 0.0);
  CHECK(latent_acceptance < 1.0);
  const double mean = summary["posterior"]["phi_1"]["mean"].get<double>();
  CHECK(mean > 0.0);
  CHECK(mean < 1.0);
  CHECK(summary["config"]["sampler.seed"] == "7");

  SUBCASE("same seed gives identical bytes, another seed does not") {
    REQUIRE(ws.run("fit --config " + path + " --histories " + data, "run2") == 0);
    CHECK(ws.slurp("s.csv") == samples);
    REQUIRE(ws.run("fit --config " + path + " --histories " + data + " --seed 8", "run3") ==
            0);
    CHECK(ws.slurp("s.csv") != samples);
  }

  SUBCASE("the counts file form of the same data gives identical bytes") {
    const std::string counts = ws.write("c.csv",
                                        "history,count\n"
                                        "1100,2\n"
                                        "1010,1\n"
                                        "0110,1\n");
    REQUIRE(ws.run("fit --config " + path + " --counts " + counts, "run4") == 0);
    CHECK(ws.slurp("s.csv") == samples);
  }
}

TEST_CASE("fit rejects malformed data with the offending line number") {
  const Workspace ws("fitdata");
  std::ostringstream cfg;
  cfg << "sampler.iterations = 200\n"
      << "sampler.burnin = 50\n"
      << "out.samples = " << ws.path("s.csv") << "\n"
      << "out.summary = " << ws.path("j.json") << "\n";
  const std::string path = ws.write("fit.cfg", cfg.str());

  SUBCASE("non-binary digits") {
    const std::string data = ws.write("h.txt", "# header\n201\n");
    CHECK(ws.run("fit --config " + path + " --histories " + data, "run") == 4);
    CHECK(ws.slurp("run.err").find(":2") != std::string::npos);
  }
  SUBCASE("inconsistent lengths") {
    const std::string data = ws.write("h.txt", "110\n1100\n");
    CHECK(ws.run("fit --config " + path + " --histories " + data, "run") == 4);
    CHECK(ws.slurp("run.err").find(":2") != std::string::npos);
  }
  SUBCASE("history without captures") {
    const std::string data = ws.write("h.txt", "000\n");
    CHECK(ws.run("fit --config " + path + " --histories " + data, "run") == 4);
  }
  SUBCASE("counts file without header") {
    const std::string data = ws.write("c.csv", "110,2\n");
    CHECK(ws.run("fit --config " + path + " --counts " + data, "run") == 4);
  }
  SUBCASE("individuals first caught on the last occasion are dropped, not fatal") {
    const std::string data = ws.write("h.txt", "0001\n1100\n1010\n");
    REQUIRE(ws.run("fit --config " + path + " --histories " + data, "run") == 0);
    const json summary = ws.read_json("j.json");
    CHECK(summary["dropped_final_occasion"] == 1);
    CHECK(summary["individuals"] == 2);
    CHECK(ws.slurp("run.err").find("dropped 1") != std::string::npos);
  }
}

TEST_CASE("oracle reports the exact fibre and honours its size cap") {
  const Workspace ws("oracle");
  const std::string data = ws.write("c.csv", "history,count\n10,1\n11,1\n");

  SUBCASE("two-element fibre") {
    std::ostringstream cfg;
    cfg << "params.survival = 0.8\n"
        << "params.capture = 0.5\n"
        << "params.alpha = 0.7\n"
        << "out.fibre = " << ws.path("f.json") << "\n";
    const std::string path = ws.write("o.cfg", cfg.str());
    REQUIRE(ws.run("oracle --config " + path + " --counts " + data, "run") == 0);
    const json report = ws.read_json("f.json");
    CHECK(report["fibre_size"] == 2);
    CHECK(report["connected"] == true);
    CHECK(report["largest_component_size"] == 2);
    CHECK(report["log_likelihood"].get<double>() < 0.0);
    double total = 0.0;
    for (const json& element : report["posterior"]) {
      total += element["probability"].get<double>();
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("perfect identification pins the posterior to the error-free element") {
    std::ostringstream cfg;
    cfg << "params.alpha = 1\n"
        << "out.fibre = " << ws.path("f.json") << "\n";
    const std::string path = ws.write("o.cfg", cfg.str());
    REQUIRE(ws.run("oracle --config " + path + " --counts " + data, "run") == 0);
    for (const json& element : ws.read_json("f.json")["posterior"]) {
      if (element["errors"].get<int>() == 0) {
        CHECK(element["probability"].get<double>() == doctest::Approx(1.0));
      } else {
        CHECK(element["probability"].get<double>() == doctest::Approx(0.0));
      }
    }
  }

  SUBCASE("size cap exceeded exits 5") {
    std::ostringstream cfg;
    cfg << "oracle.size_cap = 1\n"
        << "out.fibre = " << ws.path("f.json") << "\n";
    const std::string path = ws.write("o.cfg", cfg.str());
    CHECK(ws.run("oracle --config " + path + " --counts " + data, "run") == 5);
  }
}

TEST_CASE("study writes the long-format report and is thread-invariant") {
  const Workspace ws("study");
  std::ostringstream cfg;
  cfg << "study.occasions = 3\n"
      << "study.releases = 6, 4\n"
      << "study.replicates = 2\n"
      << "study.alphas = 3/4\n"
      << "params.survival = 0.8\n"
      << "params.capture = 0.6\n"
      << "sampler.iterations = 600\n"
      << "sampler.burnin = 200\n"
      << "sampler.seed = 5\n"
      << "out.report_csv = " << ws.path("st.csv") << "\n"
      << "out.report_json = " << ws.path("st.json") << "\n";
  const std::string path = ws.write("st.cfg", cfg.str());

  REQUIRE(ws.run("study --config " + path, "run1") == 0);
  const std::string csv = ws.slurp("st.csv");
  const auto rows = data_lines(csv);
  REQUIRE(rows.size() == 10);  // header + 3 models x (phi_1, phi_2, p)
  CHECK(rows[0] ==
        "model,alpha,parameter,true_value,boundary,replicates,mean_bias,mean_width,coverage");

  const json report = ws.read_json("st.json");
  CHECK(report["attempted"] == 2);
  CHECK(report["succeeded"] == 2);
  CHECK(report["failures"].empty());
  CHECK(report["cells"].size() == 9);

  REQUIRE(ws.run("study --config " + path + " --threads 2", "run2") == 0);
  CHECK(ws.slurp("st.csv") == csv);
}
