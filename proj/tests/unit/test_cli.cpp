#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "iclv/io.hpp"
#include "iclv/policy.hpp"
#include "iclv/synthetic.hpp"
#include "support.hpp"

using namespace iclv;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string("\"") + ICLV_CLI + "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string data(const std::string& name) { return "\"" + (test::data_dir() / name).string() + "\""; }

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

TEST_CASE("estimate on the bundled fixture converges quickly") {
  const auto dir = test::scratch_dir("cli_estimate");
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run("--out-dir " + quoted(dir) + " estimate --data " + data("fixture/dataset.csv") + " --spec " +
                     data("fixture/spec.json") + " --settings " + data("fixture/settings.json"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  INFO(r.output);
  CHECK(r.status == 0);
  CHECK(secs < 300.0);
  const auto result = io::read_json_file(dir / "result.json");
  CHECK(result["converged"] == true);
  const auto manifest = io::read_json_file(dir / "manifest.json");
  CHECK(io::document_kind(manifest) == "run_manifest");
  CHECK(manifest["command"] == "estimate");
  CHECK(fs::exists(dir / "result.json"));
}

TEST_CASE("zero iterations returns the start unconverged with exit 0") {
  const auto dir = test::scratch_dir("cli_zero_iter");
  auto settings = io::read_json_file(test::data_dir() / "fixture" / "settings.json");
  settings["max_iterations"] = 0;
  settings["compute_std_errors"] = false;
  io::write_json_file(dir / "settings.json", settings);
  const auto r = run("--out-dir " + quoted(dir) + " estimate --data " + data("fixture/dataset.csv") + " --spec " +
                     data("fixture/spec.json") + " --settings " + quoted(dir / "settings.json"));
  INFO(r.output);
  CHECK(r.status == 0);
  CHECK(io::read_json_file(dir / "result.json")["converged"] == false);
  CHECK(r.output.find("converged: false") != std::string::npos);
  const auto strict = run("--strict --out-dir " + quoted(dir) + " estimate --data " + data("fixture/dataset.csv") +
                          " --spec " + data("fixture/spec.json") + " --settings " + quoted(dir / "settings.json"));
  CHECK(strict.status == 3);
}

TEST_CASE("a malformed CSV row exits 2 and names the row") {
  const auto dir = test::scratch_dir("cli_malformed");
  std::string text = slurp(test::data_dir() / "fixture" / "dataset.csv");
  // Line 5 is the third data row; break its chosen flag.
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) pos = text.find('\n', pos) + 1;
  auto fields_end = text.find('\n', pos);
  auto row = split(text.substr(pos, fields_end - pos));
  row[3] = "maybe";
  std::string joined;
  for (std::size_t i = 0; i < row.size(); ++i) joined += (i ? "," : "") + row[i];
  text.replace(pos, fields_end - pos, joined);
  std::ofstream(dir / "bad.csv", std::ios::binary) << text;
  fs::copy_file(test::data_dir() / "fixture" / "dataset_individuals.csv", dir / "bad_individuals.csv");
  const auto r = run("--out-dir " + quoted(dir / "out") + " estimate --data " + quoted(dir / "bad.csv") + " --spec " +
                     data("fixture/spec.json"));
  INFO(r.output);
  CHECK(r.status == 2);
  CHECK(r.output.find("line 5") != std::string::npos);
}

TEST_CASE("simulate scenario 2 emits the rebate anchor row") {
  const auto dir = test::scratch_dir("cli_simulate");
  const auto r = run("--out-dir " + quoted(dir) + " simulate --params " + data("paper-params.json") + " --cohorts " +
                     data("cohorts.json") + " --scenario 2");
  INFO(r.output);
  REQUIRE(r.status == 0);
  std::ifstream in(dir / "curves.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "scenario,cohort,gender,x,probability");
  std::optional<double> at0, at5;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto f = split(line);
    if (f[1] != "Gen Y" || f[2] != "male") continue;
    if (std::stod(f[3]) == 0.0) at0 = std::stod(f[4]);
    if (std::stod(f[3]) == 5.0) at5 = std::stod(f[4]);
  }
  CHECK(rows == 66);
  REQUIRE(at0.has_value());
  REQUIRE(at5.has_value());
  CHECK(*at5 - *at0 == doctest::Approx(0.22).epsilon(0.03 / 0.22));

  // The curve agrees with the library sweep under the same calibration.
  ScenarioOptions opts;
  opts.opt_out_constant = test::paper_opt_out_constant();
  const auto lib = scenario_sweep(test::paper_params(), ScenarioSweep::standard(2, standard_cohorts()), BaseVehicle{}, opts);
  std::ostringstream expected;
  io::write_curves_csv(lib, expected);
  CHECK(slurp(dir / "curves.csv") == expected.str());

  const auto manifest = io::read_json_file(dir / "manifest.json");
  CHECK(manifest["latents"].size() == 6);
}

TEST_CASE("identical simulate runs are byte identical") {
  const auto a = test::scratch_dir("cli_sim_a"), b = test::scratch_dir("cli_sim_b");
  const std::string args = " simulate --params " + data("paper-params.json") + " --cohorts " + data("cohorts.json") +
                           " --scenario 5 --points 21";
  REQUIRE(run("--out-dir " + quoted(a) + args).status == 0);
  REQUIRE(run("--out-dir " + quoted(b) + args).status == 0);
  CHECK(slurp(a / "curves.csv") == slurp(b / "curves.csv"));
}

TEST_CASE("unknown scenario is a usage error") {
  const auto dir = test::scratch_dir("cli_scenario7");
  const auto r = run("--out-dir " + quoted(dir) + " simulate --params " + data("paper-params.json") + " --cohorts " +
                     data("cohorts.json") + " --scenario 7");
  CHECK(r.status == 2);
  CHECK(r.output.find("scenario") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "curves.csv"));
}

TEST_CASE("a missing coefficient exits 3 naming it") {
  const auto dir = test::scratch_dir("cli_missing");
  auto doc = io::read_json_file(test::data_dir() / "paper-params.json");
  auto p = io::parameters_from_json(doc);
  p.beta.erase(std::remove_if(p.beta.begin(), p.beta.end(), [](const Coefficient& b) { return b.attribute == "rebate_upfront"; }),
               p.beta.end());
  io::write_json_file(dir / "params.json", io::to_json(p));
  const auto r = run("--out-dir " + quoted(dir) + " simulate --params " + quoted(dir / "params.json") + " --cohorts " +
                     data("cohorts.json") + " --scenario 2");
  INFO(r.output);
  CHECK(r.status == 3);
  CHECK(r.output.find("rebate_upfront") != std::string::npos);
}

TEST_CASE("generate with zero individuals writes headers only") {
  const auto dir = test::scratch_dir("cli_generate0");
  const auto r = run("--seed 4 --out-dir " + quoted(dir) + " generate --design-spec " + data("designspec.json") +
                     " --params " + data("fixture/true-params.json") + " -n 0");
  INFO(r.output);
  REQUIRE(r.status == 0);
  const auto d = io::read_dataset_files(dir / "dataset.csv", dir / "dataset_individuals.csv");
  CHECK(d.individuals.empty());
  CHECK(io::validate_file(dir / "dataset.csv").findings.empty());
  CHECK(io::validate_file(dir / "dataset_individuals.csv").findings.empty());
}

TEST_CASE("generated datasets round trip into estimate") {
  const auto dir = test::scratch_dir("cli_roundtrip");
  const auto truth = io::parameters_from_json(io::read_json_file(test::data_dir() / "fixture" / "true-params.json"));
  const auto r = run("--seed 21 --out-dir " + quoted(dir) + " generate --design-spec " + data("designspec.json") +
                     " --params " + data("fixture/true-params.json") + " -n 25");
  INFO(r.output);
  REQUIRE(r.status == 0);
  const auto read = io::read_dataset_files(dir / "dataset.csv", dir / "dataset_individuals.csv");
  const auto expected = simulate_dataset(random_design(DesignSpec::paper_default(), 21), truth, 25, CovariateSampler(), 21);
  CHECK(read == expected);

  auto settings = io::read_json_file(test::data_dir() / "fixture" / "settings.json");
  settings["max_iterations"] = 0;
  settings["compute_std_errors"] = false;
  io::write_json_file(dir / "settings.json", settings);
  const auto e = run("--out-dir " + quoted(dir / "fit") + " estimate --data " + quoted(dir / "dataset.csv") +
                     " --spec " + data("fixture/spec.json") + " --settings " + quoted(dir / "settings.json"));
  INFO(e.output);
  CHECK(e.status == 0);
  CHECK(e.output.find("final LL") != std::string::npos);
}

TEST_CASE("design with no swaps scores the random start") {
  const auto dir = test::scratch_dir("cli_design");
  const auto r = run("--seed 9 --out-dir " + quoted(dir) + " design --design-spec " + data("designspec-benchmark.json") +
                     " --priors " + data("priors.json") + " --swaps 0");
  INFO(r.output);
  REQUIRE(r.status == 0);
  const auto spec = io::design_spec_from_json(io::read_json_file(test::data_dir() / "designspec-benchmark.json"));
  const auto priors = io::priors_from_json(io::read_json_file(test::data_dir() / "priors.json"));
  const double expected = d_error(random_design(spec, 9), priors.coefficients, priors.options);
  const auto report = io::read_json_file(dir / "design_report.json");
  CHECK(report["d_error"].get<double>() == expected);
  CHECK(report["initial_d_error"].get<double>() == expected);
  std::ifstream in(dir / "design.csv", std::ios::binary);
  CHECK(io::read_design(in, spec).tasks == random_design(spec, 9).tasks);
}

TEST_CASE("validate reports zero findings on the bundled files") {
  std::string args = "validate";
  for (const auto* name : {"paper-params.json", "cohorts.json", "designspec.json", "designspec-benchmark.json",
                           "priors.json", "fixture/spec.json", "fixture/true-params.json", "fixture/settings.json",
                           "fixture/dataset.csv", "fixture/dataset_individuals.csv", "fixture/design.csv"})
    args += " " + data(name);
  const auto r = run(args);
  INFO(r.output);
  CHECK(r.status == 0);
  CHECK(r.output.find(": ok") != std::string::npos);

  const auto dir = test::scratch_dir("cli_validate");
  std::ofstream(dir / "bad.json") << "{\"schema_version\": 1, \"kind\": \"parameters\"}";
  const auto bad = run("validate " + quoted(dir / "bad.json"));
  CHECK(bad.status == 2);
}
