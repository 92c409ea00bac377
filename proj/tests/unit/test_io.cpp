#include <fstream>
#include <sstream>

#include "doctest.h"
#include "iclv/error.hpp"
#include "iclv/io.hpp"
#include "iclv/synthetic.hpp"
#include "support.hpp"

using namespace iclv;

namespace {

ParameterSet fixture_truth() {
  return io::parameters_from_json(io::read_json_file(test::data_dir() / "fixture" / "true-params.json"));
}

ChoiceDataset sample(int n) {
  return simulate_dataset(random_design(DesignSpec::paper_default(), 3), fixture_truth(), n, CovariateSampler(), 3);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("JSON syntax errors carry line and column") {
  try {
    io::parse_json("{\n  \"a\": 1,\n  \"b\": ]\n}");
    FAIL("no exception");
  } catch (const InputError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() > 0);
  }
  CHECK_THROWS_AS(io::read_json_file("/nonexistent/file.json"), InputError);
}

TEST_CASE("documents declare their version and kind") {
  auto doc = io::to_json(fixture_truth());
  CHECK(doc["schema_version"] == io::kSchemaVersion);
  CHECK(io::document_kind(doc) == "parameters");
  CHECK(doc.contains("units"));
  doc["schema_version"] = 99;
  CHECK_THROWS_AS(io::document_kind(doc), InputError);
  doc.erase("schema_version");
  CHECK_THROWS_AS(io::document_kind(doc), InputError);
}

TEST_CASE("parameter documents round trip exactly") {
  const auto p = fixture_truth();
  auto q = p;
  q.beta[0].value = 0.1 + 0.2;
  q.asc = -1.0 / 3.0;
  const auto back = io::parameters_from_json(io::parse_json(io::to_json(q).dump()));
  CHECK(back.beta[0].value == q.beta[0].value);
  CHECK(back.asc == q.asc);
  CHECK(back.structural.covariates == q.structural.covariates);
  CHECK(back.measurement->indicators.size() == q.measurement->indicators.size());
  CHECK(back.measurement->indicators[3].thresholds == q.measurement->indicators[3].thresholds);
  CHECK(back.interactions[0].latent == q.interactions[0].latent);
}

TEST_CASE("the bundled table transcription has null measurement blocks") {
  const auto doc = io::read_json_file(test::data_dir() / "paper-params.json");
  CHECK(doc["measurement"].is_null());
  CHECK(doc["delta_scale"].is_null());
  const auto p = io::parameters_from_json(doc);
  CHECK_FALSE(p.measurement.has_value());
  CHECK_FALSE(p.delta_scale.has_value());
  CHECK(p.structural.size() == 24);
  CHECK(p.find_beta("price").value() == -7.98);
  CHECK(io::opt_out_constant_from_json(doc).has_value());
}

TEST_CASE("parameter documents reject unknown keys and wrong units") {
  auto doc = io::to_json(fixture_truth());
  doc["colour"] = "red";
  CHECK_THROWS_AS(io::parameters_from_json(doc), InputError);
  doc = io::to_json(fixture_truth());
  doc["units"]["price"] = "USD";
  CHECK_THROWS_AS(io::parameters_from_json(doc), InputError);
  doc = io::to_json(fixture_truth());
  doc["kind"] = "cohorts";
  CHECK_THROWS_AS(io::parameters_from_json(doc), InputError);
}

TEST_CASE("spec, settings, design spec, priors and cohorts round trip") {
  const auto spec = ModelSpec::paper_default();
  const auto spec2 = io::model_spec_from_json(io::to_json(spec));
  CHECK(spec2.covariates == spec.covariates);
  CHECK(spec2.attributes == spec.attributes);
  CHECK(spec2.indicators.size() == spec.indicators.size());
  CHECK(spec2.anchor_threshold == spec.anchor_threshold);

  EstimationSettings s;
  s.max_iterations = 17;
  s.draw_settings.scheme = DrawScheme::pseudo_random;
  s.starting_values = StartingValues::user_supplied;
  s.start = fixture_truth();
  const auto s2 = io::estimation_settings_from_json(io::to_json(s));
  CHECK(s2.max_iterations == 17);
  CHECK(s2.draw_settings.scheme == DrawScheme::pseudo_random);
  REQUIRE(s2.start.has_value());
  CHECK(s2.start->asc == s.start->asc);

  const auto d = DesignSpec::paper_default();
  const auto d2 = io::design_spec_from_json(io::to_json(d));
  CHECK(d2.price_bands == d.price_bands);
  CHECK(d2.body_types == d.body_types);
  CHECK(d2.n_tasks == d.n_tasks);

  io::Priors pr;
  pr.coefficients = {{"price", -1.5}, {"range_km", 0.2}};
  pr.options.include_opt_out = true;
  const auto pr2 = io::priors_from_json(io::to_json(pr));
  CHECK(pr2.coefficients.size() == 2);
  CHECK(pr2.coefficients[0].value == -1.5);
  CHECK(pr2.options.include_opt_out);

  const auto cohorts = standard_cohorts();
  const auto c2 = io::cohorts_from_json(io::to_json(cohorts));
  REQUIRE(c2.size() == cohorts.size());
  for (std::size_t i = 0; i < c2.size(); ++i) {
    CHECK(c2[i].label() == cohorts[i].label());
    CHECK(to_covariates(c2[i]) == to_covariates(cohorts[i]));
  }
}

TEST_CASE("datasets round trip field for field") {
  const auto data = sample(12);
  std::stringstream choices, individuals;
  io::write_choices_csv(data, choices);
  io::write_individuals_csv(data, individuals);
  const auto back = io::read_dataset(choices, individuals);
  CHECK(back == data);
}

TEST_CASE("missing indicator responses are empty fields") {
  auto data = sample(2);
  data.individuals[1].indicators[4] = kMissingResponse;
  std::stringstream choices, individuals;
  io::write_choices_csv(data, choices);
  io::write_individuals_csv(data, individuals);
  CHECK(individuals.str().find(",,") != std::string::npos);
  CHECK(io::read_dataset(choices, individuals) == data);
}

TEST_CASE("malformed rows are reported with their position") {
  const auto data = sample(2);
  std::stringstream choices, individuals;
  io::write_choices_csv(data, choices);
  io::write_individuals_csv(data, individuals);
  std::string text = choices.str();
  // Corrupt the price of the first data row (line 3).
  const auto line3 = text.find('\n', text.find('\n') + 1) + 1;
  const auto field = text.find(',', text.find(',', text.find(',', text.find(',', line3) + 1) + 1) + 1) + 1;
  const auto price = text.find(',', field) + 1;
  text.replace(price, text.find(',', price) - price, "cheap");
  std::stringstream bad(text), ind(individuals.str());
  try {
    io::read_dataset(bad, ind, "dataset.csv");
    FAIL("no exception");
  } catch (const InputError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == static_cast<int>(price - line3) + 1);
    CHECK(std::string(e.what()).find("dataset.csv") != std::string::npos);
  }
}

TEST_CASE("dataset headers are checked") {
  std::stringstream choices("# iclv choices schema_version=1\nid,task\n"), individuals("");
  CHECK_THROWS_AS(io::read_dataset(choices, individuals), InputError);
  std::stringstream wrong_version("# iclv choices schema_version=7\n"), ind2("");
  CHECK_THROWS_AS(io::read_dataset(wrong_version, ind2), InputError);
}

TEST_CASE("empty datasets keep a valid header") {
  ChoiceDataset empty;
  empty.indicator_count = 9;
  std::stringstream choices, individuals;
  io::write_choices_csv(empty, choices);
  io::write_individuals_csv(empty, individuals);
  const auto back = io::read_dataset(choices, individuals);
  CHECK(back.individuals.empty());
}

TEST_CASE("design CSV round trip") {
  const auto spec = DesignSpec::paper_default();
  const auto d = random_design(spec, 11);
  std::stringstream ss;
  io::write_design_csv(d, ss);
  const auto back = io::read_design(ss, spec);
  CHECK(back.tasks == d.tasks);
}

TEST_CASE("curves CSV columns") {
  SweepResult r;
  r.points.push_back({2, "Gen Y", "male", 0.5, 0.25, std::nullopt, std::nullopt, false});
  std::stringstream ss;
  io::write_curves_csv(r, ss);
  const auto text = ss.str();
  CHECK(text.find("scenario,cohort,gender,x,probability\n") != std::string::npos);
  CHECK(text.find("2,Gen Y,male,0.5,0.25") != std::string::npos);
  r.points[0].lower = 0.2;
  r.points[0].upper = 0.3;
  std::stringstream mc;
  io::write_curves_csv(r, mc);
  CHECK(mc.str().find("probability,lower,upper") != std::string::npos);
}

TEST_CASE("SHA-256 digests") {
  CHECK(io::sha256_bytes("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_bytes("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto dir = test::scratch_dir("sha");
  std::ofstream(dir / "f.txt", std::ios::binary) << "abc";
  CHECK(io::sha256_file(dir / "f.txt") == io::sha256_bytes("abc"));
}

TEST_CASE("manifests hash inputs and outputs") {
  const auto dir = test::scratch_dir("manifest");
  std::ofstream(dir / "in.txt", std::ios::binary) << "input";
  std::ofstream(dir / "out.txt", std::ios::binary) << "output";
  io::RunManifest m;
  m.command = "test";
  m.inputs = {dir / "in.txt"};
  m.outputs = {dir / "out.txt"};
  m.seeds["seed"] = 5;
  io::write_manifest(dir, m);
  const auto doc = io::read_json_file(dir / "manifest.json");
  CHECK(io::document_kind(doc) == "run_manifest");
  CHECK(doc.dump().find(io::sha256_bytes("input")) != std::string::npos);
  CHECK(doc.dump().find(io::sha256_bytes("output")) != std::string::npos);
}

TEST_CASE("bundled files validate cleanly") {
  for (const auto& name : {"paper-params.json", "cohorts.json", "designspec.json", "designspec-benchmark.json",
                           "priors.json", "fixture/spec.json", "fixture/true-params.json", "fixture/settings.json",
                           "fixture/dataset.csv", "fixture/dataset_individuals.csv"}) {
    const auto rep = io::validate_file(test::data_dir() / name);
    INFO(name);
    CHECK(rep.findings.empty());
    CHECK_FALSE(rep.kind.empty());
  }
  const auto dir = test::scratch_dir("validate");
  std::ofstream(dir / "bad.json") << "{\"schema_version\": 1, \"kind\": \"parameters\"}";
  CHECK_FALSE(io::validate_file(dir / "bad.json").findings.empty());
}

TEST_CASE("written files are byte-stable") {
  const auto data = sample(5);
  const auto a = test::scratch_dir("stable_a"), b = test::scratch_dir("stable_b");
  io::write_dataset_files(data, a / "d.csv", io::individuals_path_for(a / "d.csv"));
  io::write_dataset_files(data, b / "d.csv", io::individuals_path_for(b / "d.csv"));
  CHECK(slurp(a / "d.csv") == slurp(b / "d.csv"));
  CHECK(io::individuals_path_for(a / "d.csv").filename() == "d_individuals.csv");
  CHECK(io::read_dataset_files(a / "d.csv", a / "d_individuals.csv") == data);
}
