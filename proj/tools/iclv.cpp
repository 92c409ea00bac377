#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "iclv/error.hpp"
#include "iclv/estimation.hpp"
#include "iclv/io.hpp"
#include "iclv/policy.hpp"
#include "iclv/synthetic.hpp"

namespace fs = std::filesystem;
using namespace iclv;
using io::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitModel = 3;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> draws;
  int threads = 1;
  std::string out_dir = ".";
  bool strict = false;
};

class StrictFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path prepare_out_dir(const Globals& g) {
  fs::path dir(g.out_dir);
  fs::create_directories(dir);
  return dir;
}

void warn(const Globals& g, const std::string& message) {
  std::cerr << "warning: " << message << '\n';
  if (g.strict) throw StrictFailure(message);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string data;
  std::string individuals;
  std::string spec;
  std::string settings;
};

int run_estimate(const Globals& g, const EstimateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path choices(a.data);
  const fs::path people = a.individuals.empty() ? io::individuals_path_for(choices) : fs::path(a.individuals);
  const auto data = io::read_dataset_files(choices, people);
  const auto spec = io::model_spec_from_json(io::read_json_file(a.spec));
  EstimationSettings settings;
  std::vector<fs::path> inputs = {choices, people, a.spec};
  if (!a.settings.empty()) {
    settings = io::estimation_settings_from_json(io::read_json_file(a.settings));
    inputs.emplace_back(a.settings);
  }
  if (g.seed) settings.draw_settings.seed = *g.seed;
  if (g.draws) settings.draw_settings.n_draws = *g.draws;
  settings.threads = g.threads;
  validate(settings);

  const auto result = estimate(data, spec, settings, [](const IterationRecord& r, const ParameterSet&) {
    std::cerr << "iteration " << r.iteration << "  LL " << r.log_likelihood << "  |g| " << r.gradient_norm << '\n';
  });

  const auto dir = prepare_out_dir(g);
  const auto out = dir / "result.json";
  io::write_json_file(out, io::to_json(result));
  io::RunManifest m;
  m.command = "estimate";
  m.inputs = inputs;
  m.outputs = {out};
  m.seeds = {{"draws", settings.draw_settings.seed}};
  m.settings = io::to_json(settings);
  m.extra = {{"converged", result.converged}, {"final_ll", result.final_ll}, {"rho_square", result.rho_square}};
  m.wall_clock_seconds = seconds_since(t0);
  io::write_manifest(dir, m);

  std::cout << "converged: " << (result.converged ? "true" : "false") << "\nfinal LL: " << result.final_ll
            << "\nnull LL: " << result.null_ll << "\nrho square: " << result.rho_square
            << "\niterations: " << result.iterations << "\nresult: " << out.string() << '\n';
  if (!result.converged) warn(g, "estimation did not converge: " + result.message);
  if (!result.std_errors_available && settings.compute_std_errors)
    warn(g, "standard errors unavailable: the numerical Hessian is not negative definite");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string params;
  std::string cohorts;
  int scenario = 0;
  int points = 11;
  std::optional<double> opt_out_constant;
  int monte_carlo = 0;
  double uptake = 0.01;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto doc = io::read_json_file(a.params);
  const auto params = io::parameters_from_json(doc);
  const auto cohorts = io::cohorts_from_json(io::read_json_file(a.cohorts));
  BaseVehicle base;
  base.market_uptake = a.uptake;

  ScenarioOptions opts;
  std::string calibration = "none";
  if (a.opt_out_constant) {
    opts.opt_out_constant = *a.opt_out_constant;
    calibration = "command line";
  } else if (auto c = io::opt_out_constant_from_json(doc)) {
    opts.opt_out_constant = *c;
    calibration = "parameter file";
  }
  opts.monte_carlo_draws = a.monte_carlo;
  if (g.seed) opts.seed = *g.seed;

  const auto sweep = ScenarioSweep::standard(a.scenario, cohorts, a.points, base);
  const auto result = scenario_sweep(params, sweep, base, opts);

  const auto dir = prepare_out_dir(g);
  const auto out = dir / "curves.csv";
  std::ostringstream csv;
  io::write_curves_csv(result, csv);
  write_text(out, csv.str());

  Json latents = Json::array();
  for (const auto& c : cohorts) {
    const auto att = cohort_latents(params, c);
    latents.push_back({{"cohort", c.name},
                       {"gender", c.gender()},
                       {"design", att.design()},
                       {"environment", att.environment()},
                       {"safety", att.safety()}});
  }
  io::RunManifest m;
  m.command = "simulate";
  m.inputs = {a.params, a.cohorts};
  m.outputs = {out};
  m.seeds = {{"monte_carlo", opts.seed}};
  m.settings = {{"scenario", a.scenario},
                {"swept_field", to_string(sweep.field)},
                {"points", a.points},
                {"monte_carlo_draws", a.monte_carlo},
                {"base_vehicle",
                 {{"body_type", to_string(base.body_type)},
                  {"price", base.price},
                  {"setup_cost", base.setup_cost},
                  {"range_km", base.range_km},
                  {"recharge_time", base.recharge_time},
                  {"operating_cost", base.operating_cost},
                  {"market_uptake", base.market_uptake}}},
                {"opt_out_constant", opts.opt_out_constant},
                {"opt_out_constant_source", calibration}};
  m.extra = {{"latents", latents},
             {"choice_set", "one EV against the opt-out; the opt-out utility is the calibration constant"},
             {"warnings", result.warnings}};
  m.wall_clock_seconds = seconds_since(t0);
  io::write_manifest(dir, m);
  std::cout << "curves: " << out.string() << " (" << result.points.size() << " points)\n";
  for (const auto& w : result.warnings) warn(g, w);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string design_spec;
  std::string params;
  std::string design;
  int n = 0;
};

int run_generate(const Globals& g, const GenerateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = io::design_spec_from_json(io::read_json_file(a.design_spec));
  const auto params = io::parameters_from_json(io::read_json_file(a.params));
  const std::uint64_t seed = g.seed.value_or(1);
  std::vector<fs::path> inputs = {a.design_spec, a.params};
  Design design;
  if (a.design.empty()) {
    design = random_design(spec, seed);
  } else {
    std::ifstream in(a.design, std::ios::binary);
    if (!in) throw InputError("cannot open '" + a.design + "'");
    design = io::read_design(in, spec, a.design);
    inputs.emplace_back(a.design);
  }
  const auto data = simulate_dataset(design, params, a.n, CovariateSampler(), seed, g.threads);

  const auto dir = prepare_out_dir(g);
  const auto choices = dir / "dataset.csv";
  const auto people = io::individuals_path_for(choices);
  io::write_dataset_files(data, choices, people);
  std::vector<fs::path> outputs = {choices, people};
  if (a.design.empty()) {
    const auto design_out = dir / "design.csv";
    std::ostringstream os;
    io::write_design_csv(design, os);
    write_text(design_out, os.str());
    outputs.push_back(design_out);
  }
  io::RunManifest m;
  m.command = "generate";
  m.inputs = inputs;
  m.outputs = outputs;
  m.seeds = {{"generate", seed}};
  m.settings = {{"n_individuals", a.n}, {"threads", g.threads}};
  m.wall_clock_seconds = seconds_since(t0);
  io::write_manifest(dir, m);
  std::cout << "dataset: " << choices.string() << " and " << people.string() << " (" << a.n
            << " individuals)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DesignArgs {
  std::string design_spec;
  std::string priors;
  int swaps = 0;
};

int run_design(const Globals& g, const DesignArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = io::design_spec_from_json(io::read_json_file(a.design_spec));
  const auto priors = io::priors_from_json(io::read_json_file(a.priors));
  const std::uint64_t seed = g.seed.value_or(1);
  if (a.swaps < 0) throw ConfigError("swaps must be >= 0");
  const auto start = random_design(spec, seed);
  const auto initial = d_error_report(start, priors.coefficients, priors.options);
  const auto improved = improve_design(start, priors.coefficients, a.swaps, seed, priors.options);
  const auto final = d_error_report(improved, priors.coefficients, priors.options);

  const auto dir = prepare_out_dir(g);
  const auto out = dir / "design.csv";
  std::ostringstream os;
  io::write_design_csv(improved, os);
  write_text(out, os.str());
  const auto report = dir / "design_report.json";
  Json r;
  r["schema_version"] = io::kSchemaVersion;
  r["kind"] = "design_report";
  r["swaps"] = a.swaps;
  r["seed"] = seed;
  r["include_opt_out"] = priors.options.include_opt_out;
  r["initial_d_error"] = std::isfinite(initial.value) ? Json(initial.value) : Json("inf");
  r["d_error"] = std::isfinite(final.value) ? Json(final.value) : Json("inf");
  r["collinear"] = final.collinear;
  io::write_json_file(report, r);

  io::RunManifest m;
  m.command = "design";
  m.inputs = {a.design_spec, a.priors};
  m.outputs = {out, report};
  m.seeds = {{"design", seed}};
  m.settings = {{"swaps", a.swaps}};
  m.wall_clock_seconds = seconds_since(t0);
  io::write_manifest(dir, m);
  std::cout << "D-error: " << initial.value << " -> " << final.value << "\ndesign: " << out.string() << '\n';
  if (!final.collinear.empty()) {
    std::string list;
    for (const auto& c : final.collinear) list += (list.empty() ? "" : ", ") + c;
    warn(g, "information matrix is singular; collinear attributes: " + list);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_validate(const Globals& g, const std::vector<std::string>& files) {
  bool clean = true;
  for (const auto& f : files) {
    const auto rep = io::validate_file(f);
    if (rep.findings.empty()) {
      std::cout << f << ": " << rep.kind << ": ok\n";
      continue;
    }
    clean = false;
    for (const auto& x : rep.findings) std::cout << f << ": " << rep.kind << ": " << x << '\n';
  }
  (void)g;
  return clean ? kExitOk : kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integrated choice and latent variable models: estimation, simulation and design"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for draws, designs and synthetic data");
  app.add_option("--draws", g.draws, "Number of simulation draws per individual")->check(CLI::PositiveNumber);
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and the run manifest");
  app.add_flag("--strict", g.strict, "Treat warnings as errors");

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Maximum simulated likelihood estimation");
  est->add_option("--data", ea.data, "Choices CSV")->required();
  est->add_option("--individuals", ea.individuals, "Individuals CSV (default <data stem>_individuals.csv)");
  est->add_option("--spec", ea.spec, "Model spec JSON")->required();
  est->add_option("--settings", ea.settings, "Estimation settings JSON");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Policy scenario sweep for cohorts");
  sim->add_option("--params", sa.params, "Parameter JSON")->required();
  sim->add_option("--cohorts", sa.cohorts, "Cohorts JSON")->required();
  sim->add_option("--scenario", sa.scenario, "Scenario id 1..6")->required()->check(CLI::Range(1, 6));
  sim->add_option("--points", sa.points, "Grid points per sweep")->check(CLI::Range(2, 100000));
  sim->add_option("--opt-out-constant", sa.opt_out_constant, "Opt-out utility (overrides the parameter file)");
  sim->add_option("--monte-carlo", sa.monte_carlo, "Latent disturbance draws per cohort")->check(CLI::NonNegativeNumber);
  sim->add_option("--uptake", sa.uptake, "Baseline market uptake fraction")->check(CLI::Range(0.0, 1.0));

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Simulate a synthetic dataset");
  gen->add_option("--design-spec", ga.design_spec, "Design spec JSON")->required();
  gen->add_option("--params", ga.params, "True parameter JSON")->required();
  gen->add_option("--design", ga.design, "Existing design CSV (default: random design from --seed)");
  gen->add_option("-n,--individuals", ga.n, "Number of individuals")->required()->check(CLI::NonNegativeNumber);

  DesignArgs da;
  auto* des = app.add_subcommand("design", "Generate and improve a stated-preference design");
  des->add_option("--design-spec", da.design_spec, "Design spec JSON")->required();
  des->add_option("--priors", da.priors, "Prior coefficients JSON")->required();
  des->add_option("--swaps", da.swaps, "Coordinate-exchange proposals")->check(CLI::NonNegativeNumber);

  std::vector<std::string> files;
  auto* val = app.add_subcommand("validate", "Schema check of input and output files");
  val->add_option("files", files, "Files to check")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*est) return run_estimate(g, ea);
    if (*sim) return run_simulate(g, sa);
    if (*gen) return run_generate(g, ga);
    if (*des) return run_design(g, da);
    if (*val) return run_validate(g, files);
  } catch (const StrictFailure& e) {
    std::cerr << "error: --strict: " << e.what() << '\n';
    return kExitModel;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}
