#include <array>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "iclv/error.hpp"
#include "iclv/model.hpp"
#include "support.hpp"

using namespace iclv;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ParameterSet small_params() {
  ParameterSet p;
  p.structural.covariates = {"constant", "age", "female"};
  p.structural.columns = {{1.0, 2.0, 3.0}, {0.5, -0.5, 1.0}, {0.25, 0.1, -0.2}};
  p.delta_scale = std::array<double, 3>{0.5, 1.0, 2.0};
  p.beta = {{"price", -2.0}, {"range_km", 0.3}, {"small_suv", 0.4}};
  p.interactions = {{Latent::design, "price", 0.5}, {Latent::safety, "large_suv", 0.2}};
  p.asc = 0.7;
  return p;
}

}  // namespace

TEST_CASE("covariate values follow the dummy coding") {
  CovariateVector z;
  z.age = 0.4;
  z.female = true;
  z.education = Education::postgraduate;
  z.vehicles = Vehicles::three_plus;
  z.tenure = Tenure::renter;
  CHECK(covariate_value(z, "constant") == 1.0);
  CHECK(covariate_value(z, "age") == doctest::Approx(0.4));
  CHECK(covariate_value(z, "age_sq") == doctest::Approx(0.16));
  CHECK(covariate_value(z, "age_cu") == doctest::Approx(0.064));
  CHECK(covariate_value(z, "female") == 1.0);
  CHECK(covariate_value(z, "edu_postgraduate") == 1.0);
  CHECK(covariate_value(z, "edu_certificate") == 0.0);
  CHECK(covariate_value(z, "veh_three_plus") == 1.0);
  CHECK(covariate_value(z, "veh_one") == 0.0);
  CHECK(covariate_value(z, "ten_renter") == 1.0);
  CHECK(covariate_value(z, "inc_low") == 0.0);
  CHECK_THROWS_AS(covariate_value(z, "shoe_size"), ConfigError);
  CHECK(covariate_names().size() == 23);
}

TEST_CASE("covariate validation rejects ages outside the encoding") {
  CovariateVector z;
  z.age = 0.35;
  CHECK_NOTHROW(validate(z));
  z.age = 0.0;
  CHECK_THROWS_AS(validate(z), ParameterError);
  z.age = 35.0;
  CHECK_THROWS_AS(validate(z), ParameterError);
}

TEST_CASE("attribute values and body-type dummies") {
  const auto a = test::vehicle(BodyType::small_suv, 0.8, 3.0);
  CHECK(attribute_value(a, "small_suv") == 1.0);
  CHECK(attribute_value(a, "hatchback") == 0.0);
  CHECK(attribute_value(a, "price") == 0.8);
  CHECK(attribute_value(a, "range_km") == 3.0);
  CHECK(attribute_value(a, "market_uptake") == 0.3);
  CHECK(is_attribute_name("energy_discount"));
  CHECK_FALSE(is_attribute_name("colour"));
  CHECK_THROWS_AS(attribute_value(a, "colour"), ConfigError);
  CHECK(parse_body_type("large_suv") == BodyType::large_suv);
  CHECK(to_string(BodyType::minivan) == "minivan");
  CHECK_THROWS_AS(parse_body_type("truck"), ConfigError);
}

TEST_CASE("attribute validation") {
  auto a = test::vehicle(BodyType::hatchback, 1.0, 2.0);
  CHECK_NOTHROW(validate(a));
  a.energy_discount = 1.5;
  CHECK_THROWS_AS(validate(a), ParameterError);
  a.energy_discount = 0.0;
  a.price = -1.0;
  CHECK_THROWS_AS(validate(a), ParameterError);
}

TEST_CASE("logistic is stable and symmetric") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(800.0) == 1.0);
  CHECK(logistic(-800.0) >= 0.0);
  for (double x : {-30.0, -3.0, -0.5, 0.2, 4.0, 25.0}) {
    CHECK(logistic(x) + logistic(-x) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(logistic(x) == doctest::Approx(sigmoid(x)).epsilon(1e-14));
  }
}

TEST_CASE("structural mean is A times z") {
  const auto p = small_params();
  CovariateVector z;
  z.age = 0.3;
  z.female = true;
  const auto m = structural_mean(p, z);
  CHECK(m.design() == doctest::Approx(1.0 + 0.5 * 0.3 + 0.25));
  CHECK(m.environment() == doctest::Approx(2.0 - 0.5 * 0.3 + 0.1));
  CHECK(m.safety() == doctest::Approx(3.0 + 1.0 * 0.3 - 0.2));
  const std::array<double, 3> dense{1.0, 0.3, 1.0};
  const auto m2 = structural_mean(p, dense);
  for (std::size_t l = 0; l < 3; ++l) CHECK(m2.values[l] == doctest::Approx(m.values[l]));
  const std::array<double, 2> short_z{1.0, 0.3};
  CHECK_THROWS_AS(structural_mean(p, short_z), ConfigError);
}

TEST_CASE("latent draws add the scaled disturbance") {
  const auto p = small_params();
  CovariateVector z;
  z.age = 0.5;
  const std::vector<StandardDraw> draws{{0.0, 0.0, 0.0}, {1.0, -1.0, 0.5}};
  const auto att = draw_latents(p, z, draws);
  const auto m = structural_mean(p, z);
  REQUIRE(att.size() == 2);
  CHECK(att[0].design() == doctest::Approx(m.design()));
  CHECK(att[1].design() == doctest::Approx(m.design() + 0.5));
  CHECK(att[1].environment() == doctest::Approx(m.environment() - 1.0));
  CHECK(att[1].safety() == doctest::Approx(m.safety() + 1.0));
}

TEST_CASE("ordered logit probabilities match the cumulative-logit definition") {
  const std::array<double, 4> tau{-1.0, 0.5, 1.2, 3.0};
  for (double index : {-40.0, -2.0, 0.0, 0.9, 2.5, 40.0}) {
    double total = 0.0;
    for (int level = 1; level <= 5; ++level) {
      const double upper = level == 5 ? 1.0 : sigmoid(tau[level - 1] - index);
      const double lower = level == 1 ? 0.0 : sigmoid(tau[level - 2] - index);
      const double p = ordered_logit_prob(tau, index, level);
      CHECK(p == doctest::Approx(upper - lower).epsilon(1e-12));
      CHECK(p >= 0.0);
      total += p;
      if (upper - lower > 1e-300)
        CHECK(ordered_logit_log_prob(tau, index, level) == doctest::Approx(std::log(p)).epsilon(1e-10));
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(ordered_logit_prob(tau, 0.0, 0), DomainError);
  CHECK_THROWS_AS(ordered_logit_prob(tau, 0.0, 6), DomainError);
}

TEST_CASE("ordered logit log probability stays finite deep in the tails") {
  const std::array<double, 4> tau{1.0, 2.0, 3.0, 4.0};
  const double lp = ordered_logit_log_prob(tau, 1000.0, 1);
  CHECK(std::isfinite(lp));
  CHECK(lp == doctest::Approx(-999.0).epsilon(1e-12));
  CHECK(std::isfinite(ordered_logit_log_prob(tau, -1000.0, 5)));
}

TEST_CASE("indicator probability uses the loading") {
  MeasurementParams m;
  m.indicators.push_back({"I1", Latent::environment, 0.5, {1.0, 2.0, 3.0, 4.0}});
  LatentAttitudes att;
  att[Latent::environment] = 4.0;
  CHECK(indicator_prob(m, 0, att, 3) == doctest::Approx(sigmoid(3.0 - 2.0) - sigmoid(2.0 - 2.0)));
  CHECK_THROWS(indicator_prob(m, 1, att, 3));
}

TEST_CASE("systematic utility sums main effects, interactions and the constant") {
  const auto p = small_params();
  LatentAttitudes att;
  att[Latent::design] = 2.0;
  att[Latent::safety] = 3.0;
  const auto suv = test::vehicle(BodyType::large_suv, 0.9, 4.0);
  CHECK(systematic_utility(p, suv, att) ==
        doctest::Approx(0.7 - 2.0 * 0.9 + 0.3 * 4.0 + 0.5 * 2.0 * 0.9 + 0.2 * 3.0));
  const auto small = test::vehicle(BodyType::small_suv, 0.9, 4.0);
  CHECK(systematic_utility(p, small, att) == doctest::Approx(0.7 - 2.0 * 0.9 + 0.3 * 4.0 + 0.4 + 0.9));
  CHECK(systematic_utility(p, OptOut{}, att) == 0.0);
}

TEST_CASE("choice probabilities are a softmax") {
  const std::array<double, 3> v{1.0, -0.5, 0.0};
  const auto p = choice_prob(v);
  const double den = std::exp(1.0) + std::exp(-0.5) + 1.0;
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / den));
  CHECK(p[1] == doctest::Approx(std::exp(-0.5) / den));
  CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) <= 1e-12);

  const std::array<double, 3> huge{1000.0, 999.0, -1000.0};
  const auto q = choice_prob(huge);
  CHECK(std::isfinite(q[0]));
  CHECK(q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));

  const std::array<bool, 3> avail{true, false, true};
  const auto r = choice_prob(v, avail);
  CHECK(r[1] == 0.0);
  CHECK(r[0] == doctest::Approx(sigmoid(1.0)));
  const std::array<bool, 3> none{false, false, false};
  CHECK_THROWS_AS(choice_prob(v, none), DomainError);
}

TEST_CASE("parameter validation") {
  auto p = small_params();
  CHECK_NOTHROW(validate(p));
  p.delta_scale = std::array<double, 3>{0.5, -1.0, 1.0};
  CHECK_THROWS_AS(validate(p), ParameterError);
  p = small_params();
  MeasurementParams m;
  m.indicators.push_back({"I1", Latent::design, 1.0, {1.0, 0.5, 2.0, 3.0}});
  p.measurement = m;
  CHECK_THROWS_AS(validate(p), ParameterError);
  p = small_params();
  p.beta.push_back({"colour", 1.0});
  CHECK_THROWS_AS(validate(p), ConfigError);
}

TEST_CASE("default model spec") {
  const auto s = ModelSpec::paper_default();
  CHECK(s.covariates.size() == 23);
  CHECK(s.indicators.size() == 10);
  CHECK(s.attributes.size() == 10);
  CHECK(s.interactions.size() == 4);
  CHECK(s.structural_columns().front() == "constant");
  CHECK_NOTHROW(validate(s));
  auto bad = s;
  bad.covariates.push_back("constant");
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = s;
  bad.attributes.push_back("colour");
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("default interactions") {
  const auto d = default_interactions();
  REQUIRE(d.size() == 4);
  CHECK(d[0].latent == Latent::design);
  CHECK(d[0].attribute == "price");
  CHECK(d[1].latent == Latent::environment);
  CHECK(d[1].attribute == "range_km");
  CHECK(d[2].attribute == "large_suv");
  CHECK(d[3].attribute == "large_sedan");
}
