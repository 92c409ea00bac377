#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "iclv/model.hpp"

namespace iclv {

enum class DrawScheme : std::uint8_t { quasi_random_low_discrepancy, pseudo_random };

std::string_view to_string(DrawScheme s);
DrawScheme parse_draw_scheme(std::string_view s);

struct DrawSettings {
  int n_draws = 500;
  DrawScheme scheme = DrawScheme::quasi_random_low_discrepancy;
  std::uint64_t seed = 20181026;
  /// Random digit permutation of the Halton sequence (seeded). Without it the
  /// quasi-random draws ignore the seed.
  bool scramble = false;
  /// Leading Halton points skipped before the first individual's block.
  std::uint64_t burn_in = 10;
};

void validate(const DrawSettings& s);

/// Van der Corput radical inverse of `index` in `base`. With a digit
/// permutation (size == base, perm[0] == 0) the digits are scrambled.
double radical_inverse(std::uint64_t index, unsigned base, const std::vector<unsigned>* perm = nullptr);

/// Uniform points in (0,1)^dim for one individual, before the normal
/// transform. Individual `id` gets Halton points burn_in + id·R + 1 … + R, one
/// prime base per dimension; the pseudo-random scheme uses a stream seeded by
/// (seed, id).
std::vector<std::vector<double>> uniform_draws(const DrawSettings& s, std::int64_t id, int dim);

/// n_draws standard-normal 3-vectors for individual `id` (inverse-CDF transform
/// of uniform_draws). Deterministic in (settings, id).
std::vector<StandardDraw> generate_draws(const DrawSettings& s, std::int64_t id);

/// Standard normal quantile.
double normal_quantile(double p);

/// Uniform double in (0,1) with 53 random bits; never returns 0 or 1.
double uniform_open(std::mt19937_64& rng);

/// Engine seeded from (seed, stream, index) through std::seed_seq, so streams
/// are reproducible on every platform.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace iclv
