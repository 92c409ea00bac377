#include "iclv/draws.hpp"

#include <algorithm>
#include <array>
#include <boost/math/distributions/normal.hpp>
#include <numeric>
#include <string>

#include "iclv/error.hpp"

namespace iclv {

namespace {

constexpr std::array<unsigned, 10> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};

// Digit permutations for each dimension; 0 stays fixed so trailing zeros of
// the expansion remain zeros.
std::vector<std::vector<unsigned>> digit_permutations(std::uint64_t seed, int dim) {
  auto rng = make_stream(seed, 0x5c4a3b1eULL, 0);
  std::vector<std::vector<unsigned>> perms(dim);
  for (int d = 0; d < dim; ++d) {
    const unsigned base = kPrimes[d];
    auto& p = perms[d];
    p.resize(base);
    std::iota(p.begin(), p.end(), 0u);
    // Fisher-Yates over 1..base-1 with an explicit uniform so the shuffle is
    // identical across standard libraries.
    for (unsigned i = base - 1; i > 1; --i) {
      const auto j = 1 + static_cast<unsigned>(uniform_open(rng) * i);
      std::swap(p[i], p[std::min(j, i)]);
    }
  }
  return perms;
}

}  // namespace

std::string_view to_string(DrawScheme s) {
  return s == DrawScheme::pseudo_random ? "pseudo_random" : "quasi_random_low_discrepancy";
}

DrawScheme parse_draw_scheme(std::string_view s) {
  if (s == "pseudo_random") return DrawScheme::pseudo_random;
  if (s == "quasi_random_low_discrepancy" || s == "halton") return DrawScheme::quasi_random_low_discrepancy;
  throw ConfigError("unknown draw scheme '" + std::string(s) + "'");
}

void validate(const DrawSettings& s) {
  if (s.n_draws < 1) throw ConfigError("n_draws must be at least 1");
}

double radical_inverse(std::uint64_t index, unsigned base, const std::vector<unsigned>* perm) {
  double result = 0.0;
  const double inv = 1.0 / base;
  double f = inv;
  while (index > 0) {
    auto digit = static_cast<unsigned>(index % base);
    if (perm) digit = (*perm)[digit];
    result += digit * f;
    index /= base;
    f *= inv;
  }
  return result;
}

double uniform_open(std::mt19937_64& rng) {
  // (k + 0.5) / 2^53 for k in [0, 2^53)
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

std::vector<std::vector<double>> uniform_draws(const DrawSettings& s, std::int64_t id, int dim) {
  validate(s);
  if (dim < 1 || dim > static_cast<int>(kPrimes.size()))
    throw ConfigError("draw dimension must be in 1.." + std::to_string(kPrimes.size()));
  const auto n = static_cast<std::size_t>(s.n_draws);
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  if (s.scheme == DrawScheme::pseudo_random) {
    auto rng = make_stream(s.seed, 1, static_cast<std::uint64_t>(id));
    for (auto& row : out)
      for (auto& u : row) u = uniform_open(rng);
    return out;
  }
  if (id < 0) throw ConfigError("quasi-random draws need non-negative individual ids");
  std::vector<std::vector<unsigned>> perms;
  if (s.scramble) perms = digit_permutations(s.seed, dim);
  const std::uint64_t start = s.burn_in + static_cast<std::uint64_t>(id) * n;
  for (std::size_t r = 0; r < n; ++r)
    for (int d = 0; d < dim; ++d)
      out[r][d] = radical_inverse(start + r + 1, kPrimes[d], s.scramble ? &perms[d] : nullptr);
  return out;
}

std::vector<StandardDraw> generate_draws(const DrawSettings& s, std::int64_t id) {
  const auto u = uniform_draws(s, id, static_cast<int>(kLatentCount));
  std::vector<StandardDraw> out(u.size());
  for (std::size_t r = 0; r < u.size(); ++r)
    for (std::size_t l = 0; l < kLatentCount; ++l) out[r][l] = normal_quantile(u[r][l]);
  return out;
}

}  // namespace iclv
