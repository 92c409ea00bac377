#include <cmath>

#include "doctest.h"
#include "iclv/draws.hpp"
#include "iclv/error.hpp"

using namespace iclv;

TEST_CASE("radical inverse reverses digits") {
  CHECK(radical_inverse(1, 2) == 0.5);
  CHECK(radical_inverse(2, 2) == 0.25);
  CHECK(radical_inverse(3, 2) == 0.75);
  CHECK(radical_inverse(6, 2) == 0.375);
  CHECK(radical_inverse(1, 3) == doctest::Approx(1.0 / 3.0));
  CHECK(radical_inverse(5, 3) == doctest::Approx(2.0 / 3.0 + 1.0 / 9.0));
  CHECK(radical_inverse(0, 7) == 0.0);
  const std::vector<unsigned> swap{0, 2, 1};
  CHECK(radical_inverse(1, 3, &swap) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("Halton draws follow the individual block layout") {
  DrawSettings s;
  s.n_draws = 4;
  s.burn_in = 10;
  const auto u = uniform_draws(s, 2, 3);
  REQUIRE(u.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    const std::uint64_t index = 10 + 2 * 4 + r + 1;
    CHECK(u[r][0] == radical_inverse(index, 2));
    CHECK(u[r][1] == radical_inverse(index, 3));
    CHECK(u[r][2] == radical_inverse(index, 5));
  }
  // Without scrambling the seed is irrelevant.
  auto t = s;
  t.seed = 99;
  CHECK(uniform_draws(t, 2, 3) == u);
}

TEST_CASE("scrambled Halton depends on the seed and stays in (0,1)") {
  DrawSettings s;
  s.n_draws = 200;
  s.scramble = true;
  const auto a = uniform_draws(s, 0, 3);
  auto t = s;
  t.seed = s.seed + 1;
  const auto b = uniform_draws(t, 0, 3);
  CHECK(a != b);
  bool inside = true;
  for (const auto& row : a)
    for (double x : row) inside = inside && x > 0.0 && x < 1.0;
  CHECK(inside);
  CHECK(uniform_draws(s, 0, 3) == a);
}

TEST_CASE("pseudo-random draws are reproducible per individual") {
  DrawSettings s;
  s.scheme = DrawScheme::pseudo_random;
  s.n_draws = 50;
  const auto a = generate_draws(s, 7);
  CHECK(generate_draws(s, 7) == a);
  CHECK(generate_draws(s, 8) != a);
  auto t = s;
  t.seed = 1;
  CHECK(generate_draws(t, 7) != a);
}

TEST_CASE("normal draws have the right moments") {
  DrawSettings s;
  s.n_draws = 20000;
  const auto d = generate_draws(s, 0);
  for (std::size_t l = 0; l < kLatentCount; ++l) {
    double m = 0.0, v = 0.0;
    for (const auto& x : d) m += x[l];
    m /= static_cast<double>(d.size());
    for (const auto& x : d) v += (x[l] - m) * (x[l] - m);
    v /= static_cast<double>(d.size());
    CHECK(std::abs(m) < 0.01);
    CHECK(std::abs(v - 1.0) < 0.01);
  }
}

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054));
}

TEST_CASE("uniform_open never hits the endpoints") {
  auto rng = make_stream(1, 2, 3);
  bool inside = true;
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform_open(rng);
    inside = inside && u > 0.0 && u < 1.0;
  }
  CHECK(inside);
  auto a = make_stream(5, 6, 7);
  auto b = make_stream(5, 6, 7);
  CHECK(a() == b());
}

TEST_CASE("draw settings validation") {
  DrawSettings s;
  s.n_draws = 0;
  CHECK_THROWS_AS(generate_draws(s, 0), ConfigError);
  s.n_draws = 5;
  CHECK_THROWS_AS(uniform_draws(s, 0, 11), ConfigError);
  CHECK_THROWS_AS(uniform_draws(s, -1, 3), ConfigError);
  CHECK(parse_draw_scheme("halton") == DrawScheme::quasi_random_low_discrepancy);
  CHECK(parse_draw_scheme(to_string(DrawScheme::pseudo_random)) == DrawScheme::pseudo_random);
  CHECK_THROWS_AS(parse_draw_scheme("sobol"), ConfigError);
}
