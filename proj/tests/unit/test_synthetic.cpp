#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "iclv/error.hpp"
#include "iclv/synthetic.hpp"
#include "support.hpp"

using namespace iclv;

namespace {

std::vector<Coefficient> priors() {
  return io::priors_from_json(io::read_json_file(test::data_dir() / "priors.json")).coefficients;
}

DesignSpec benchmark_spec() {
  return io::design_spec_from_json(io::read_json_file(test::data_dir() / "designspec-benchmark.json"));
}

ParameterSet fixture_truth() {
  return io::parameters_from_json(io::read_json_file(test::data_dir() / "fixture" / "true-params.json"));
}

// det(Ω)^{1/K} assembled from scratch for a design and prior.
double oracle_d_error(const Design& d, const std::vector<Coefficient>& prior, bool opt_out) {
  const auto K = static_cast<Eigen::Index>(prior.size());
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(K, K);
  for (std::size_t t = 0; t < d.tasks.size(); ++t) {
    Eigen::VectorXd x[2];
    double v[2];
    for (std::size_t j = 0; j < 2; ++j) {
      const auto a = d.attributes(t, j);
      x[j].resize(K);
      v[j] = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) {
        x[j][k] = attribute_value(a, prior[static_cast<std::size_t>(k)].attribute);
        v[j] += prior[static_cast<std::size_t>(k)].value * x[j][k];
      }
    }
    const double e0 = std::exp(v[0]), e1 = std::exp(v[1]), e2 = opt_out ? 1.0 : 0.0;
    const double p0 = e0 / (e0 + e1 + e2), p1 = e1 / (e0 + e1 + e2), p2 = 1.0 - p0 - p1;
    const Eigen::VectorXd mean = p0 * x[0] + p1 * x[1];
    info += p0 * (x[0] - mean) * (x[0] - mean).transpose() + p1 * (x[1] - mean) * (x[1] - mean).transpose() +
            p2 * mean * mean.transpose();
  }
  return std::pow(info.inverse().determinant(), 1.0 / static_cast<double>(K));
}

}  // namespace

TEST_CASE("default design spec is consistent") {
  const auto s = DesignSpec::paper_default();
  CHECK_NOTHROW(validate(s));
  CHECK(s.n_tasks == 144);
  CHECK(s.n_blocks == 18);
  CHECK(s.tasks_per_respondent == 8);
  CHECK(s.level_count(DesignAttribute::body_type) == 6);
  auto bad = s;
  bad.n_tasks = 100;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = s;
  bad.energy_discount.push_back(1.5);
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = s;
  bad.range_km.clear();
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("random designs are deterministic and blocked") {
  const auto spec = benchmark_spec();
  const auto a = random_design(spec, 5);
  const auto b = random_design(spec, 5);
  const auto c = random_design(spec, 6);
  CHECK(a.tasks == b.tasks);
  CHECK(a.tasks != c.tasks);
  REQUIRE(a.tasks.size() == 24);
  for (std::size_t t = 0; t < a.tasks.size(); ++t) {
    CHECK(a.tasks[t].block == static_cast<int>(t) / 8);
    for (const auto& alt : a.tasks[t].alts)
      for (std::size_t k = 0; k < kDesignAttributeCount; ++k)
        CHECK(alt[k] < spec.level_count(static_cast<DesignAttribute>(k)));
  }
}

TEST_CASE("design attributes come from the level sets") {
  const auto spec = DesignSpec::paper_default();
  const auto d = random_design(spec, 1);
  const auto& lv = d.tasks[3].alts[1];
  const auto a = d.attributes(3, 1, 2);
  CHECK(a.price == spec.price_bands[2][lv[static_cast<std::size_t>(DesignAttribute::price)]]);
  CHECK(a.range_km == spec.range_km[lv[static_cast<std::size_t>(DesignAttribute::range_km)]]);
  CHECK(a.body_type == spec.body_types[lv[static_cast<std::size_t>(DesignAttribute::body_type)]]);
  CHECK_NOTHROW(validate(a));
}

TEST_CASE("D-error matches a directly assembled information matrix") {
  const auto d = random_design(benchmark_spec(), 3);
  const auto p = priors();
  CHECK(d_error(d, p) == doctest::Approx(oracle_d_error(d, p, false)).epsilon(1e-9));
  DErrorOptions with;
  with.include_opt_out = true;
  CHECK(d_error(d, p, with) == doctest::Approx(oracle_d_error(d, p, true)).epsilon(1e-9));
}

TEST_CASE("duplicating a design halves the D-error") {
  auto d = random_design(benchmark_spec(), 4);
  const auto p = priors();
  const double one = d_error(d, p);
  auto twice = d;
  twice.tasks.insert(twice.tasks.end(), d.tasks.begin(), d.tasks.end());
  CHECK(d_error(twice, p) == doctest::Approx(one / 2.0).epsilon(1e-12));
}

TEST_CASE("singular designs report the collinear attributes") {
  auto d = random_design(benchmark_spec(), 5);
  for (auto& t : d.tasks)
    for (auto& alt : t.alts) alt[static_cast<std::size_t>(DesignAttribute::market_uptake)] = 0;
  const auto rep = d_error_report(d, priors());
  CHECK(std::isinf(rep.value));
  CHECK(std::find(rep.collinear.begin(), rep.collinear.end(), "market_uptake") != rep.collinear.end());
  CHECK_THROWS_AS(d_error(d, {}), ConfigError);
  CHECK_THROWS_AS(d_error(d, {{"colour", 1.0}}), ConfigError);
}

TEST_CASE("coordinate exchange never worsens the design") {
  const auto d = random_design(benchmark_spec(), 6);
  const auto p = priors();
  const double before = d_error(d, p);
  const auto none = improve_design(d, p, 0, 1);
  CHECK(none.tasks == d.tasks);
  CHECK(d_error(none, p) == before);
  const auto better = improve_design(d, p, 300, 1);
  CHECK(d_error(better, p) <= before);
  CHECK(improve_design(d, p, 300, 1).tasks == better.tasks);
  for (std::size_t t = 0; t < better.tasks.size(); ++t) CHECK(better.tasks[t].block == d.tasks[t].block);
}

TEST_CASE("categorical, ordered-logit and Gumbel samplers") {
  auto rng = make_stream(7, 0, 0);
  const std::vector<double> w{1.0, 0.0, 3.0};
  int counts[3] = {0, 0, 0};
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[sample_categorical(w, rng)];
  CHECK(counts[1] == 0);
  CHECK(static_cast<double>(counts[2]) / n == doctest::Approx(0.75).epsilon(0.02));

  const std::array<double, 4> tau{-1.0, 0.0, 1.0, 2.0};
  std::array<int, 6> lv{};
  for (int i = 0; i < n; ++i) ++lv[static_cast<std::size_t>(sample_ordered_logit(tau, 0.5, rng))];
  CHECK(lv[0] == 0);
  for (int level = 1; level <= 5; ++level)
    CHECK(static_cast<double>(lv[static_cast<std::size_t>(level)]) / n ==
          doctest::Approx(ordered_logit_prob(tau, 0.5, level)).epsilon(0.05));

  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += sample_gumbel(rng);
  CHECK(mean / n == doctest::Approx(0.5772156649).epsilon(0.03));
}

TEST_CASE("covariate sampler respects the marginals") {
  CovariateMarginals m = CovariateMarginals::survey();
  m.female = 1.0;
  const CovariateSampler s(m);
  auto rng = make_stream(1, 1, 1);
  for (int i = 0; i < 200; ++i) {
    const auto z = s(rng);
    CHECK(z.female);
    CHECK_NOTHROW(validate(z));
  }
}

TEST_CASE("simulated datasets are reproducible and thread independent") {
  const auto design = random_design(DesignSpec::paper_default(), 8);
  const auto p = fixture_truth();
  const auto a = simulate_dataset(design, p, 30, CovariateSampler(), 9, 1);
  const auto b = simulate_dataset(design, p, 30, CovariateSampler(), 9, 4);
  CHECK(a == b);
  CHECK(simulate_dataset(design, p, 30, CovariateSampler(), 10) != a);
  CHECK_NOTHROW(validate(a));
  CHECK(a.individuals.size() == 30);
  CHECK(a.indicator_count == 9);
  for (std::size_t n = 0; n < a.individuals.size(); ++n) {
    CHECK(a.individuals[n].id == static_cast<std::int64_t>(n) + 1);
    CHECK(a.individuals[n].tasks.size() == 8);
  }
  const auto empty = simulate_dataset(design, p, 0, CovariateSampler(), 9);
  CHECK(empty.individuals.empty());
}

TEST_CASE("simulated choices follow the model probabilities") {
  // One attribute drives the choice; the share of alt1 must match the logit.
  auto spec = benchmark_spec();
  spec.n_tasks = 8;
  spec.n_blocks = 1;
  const auto design = random_design(spec, 2);
  ParameterSet p;
  p.structural.covariates = {"constant"};
  p.structural.columns = {{0.0, 0.0, 0.0}};
  p.beta = {{"price", -1.0}};
  p.asc = 0.5;
  const auto data = simulate_dataset(design, p, 4000, CovariateSampler(), 3);
  double observed = 0.0, expected = 0.0;
  for (const auto& person : data.individuals)
    for (const auto& t : person.tasks) {
      const std::array<double, 3> v{0.5 - t.alt1.price, 0.5 - t.alt2.price, 0.0};
      expected += choice_prob(v)[0];
      observed += t.chosen == Choice::alt1 ? 1.0 : 0.0;
    }
  CHECK(observed / expected == doctest::Approx(1.0).epsilon(0.03));
}
