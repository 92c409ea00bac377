#pragma once

// Stated-preference designs over the attribute grid, D-error scoring,
// coordinate-exchange improvement and simulation of complete datasets.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "iclv/model.hpp"

namespace iclv {

/// Design attributes in the order used for level indices.
enum class DesignAttribute : std::uint8_t {
  body_type,
  price,
  setup_cost,
  operating_cost,
  recharge_time,
  range_km,
  charge_spacing,
  bus_lane,
  rebate_upfront,
  parking_rebate,
  energy_discount,
  stamp_duty,
  market_uptake,
};
inline constexpr std::size_t kDesignAttributeCount = 13;

std::string_view to_string(DesignAttribute a);

/// Level sets in model units (see AlternativeAttributes). "NA" support levels
/// are 0. Prices come in budget bands of four levels each.
struct DesignSpec {
  std::vector<BodyType> body_types;
  std::vector<std::vector<double>> price_bands;
  std::vector<double> setup_cost;
  std::vector<double> operating_cost;
  std::vector<double> recharge_time;
  std::vector<double> range_km;
  std::vector<double> charge_spacing;
  std::vector<bool> bus_lane;
  std::vector<double> rebate_upfront;
  std::vector<double> parking_rebate;
  std::vector<double> energy_discount;
  std::vector<double> stamp_duty;
  std::vector<double> market_uptake;
  int n_tasks = 144;
  int n_blocks = 18;
  int tasks_per_respondent = 8;
  /// Budget band used for prices when a design is scored.
  int reference_band = 1;

  /// The published grid with 144 tasks in 18 blocks of 8.
  static DesignSpec paper_default();

  std::size_t level_count(DesignAttribute a) const;
};

/// Throws ConfigError unless n_tasks = n_blocks × tasks_per_respondent, every
/// level set is nonempty, price bands share one level count and values obey
/// the AlternativeAttributes invariants.
void validate(const DesignSpec& spec);

using LevelIndices = std::array<std::uint8_t, kDesignAttributeCount>;

struct DesignTask {
  std::array<LevelIndices, 2> alts{};
  int block = 0;

  friend bool operator==(const DesignTask&, const DesignTask&) = default;
};

struct Design {
  DesignSpec spec;
  std::vector<DesignTask> tasks;

  /// Attributes of alternative `alt` (0/1) of task t with prices from `band`.
  AlternativeAttributes attributes(std::size_t t, std::size_t alt, int band) const;
  AlternativeAttributes attributes(std::size_t t, std::size_t alt) const {
    return attributes(t, alt, spec.reference_band);
  }
};

/// Independent uniform level draws per attribute, alternative and task. Task i
/// belongs to block i / tasks_per_respondent. Deterministic in seed.
Design random_design(const DesignSpec& spec, std::uint64_t seed);

struct DErrorReport {
  double value = 0.0;  ///< +inf when the information matrix is singular
  std::vector<std::string> collinear;
};

struct DErrorOptions {
  /// Include the zero-utility opt-out in the information matrix. Off by
  /// default so that only contrasts between the designed alternatives count.
  bool include_opt_out = false;
};

/// det(Ω)^{1/K} for the MNL estimator of the K prior coefficients, with
/// Ω = (Σ_t Σ_j P_tj (x_tj − x̄_t)(x_tj − x̄_t)ᵀ)^{-1}.
DErrorReport d_error_report(const Design& design, const std::vector<Coefficient>& prior,
                            const DErrorOptions& opts = {});
double d_error(const Design& design, const std::vector<Coefficient>& prior, const DErrorOptions& opts = {});

/// Coordinate exchange: `swaps` proposals of a single attribute level, each
/// accepted iff the D-error decreases.
Design improve_design(const Design& design, const std::vector<Coefficient>& prior, int swaps,
                      std::uint64_t seed, const DErrorOptions& opts = {});

/// Independent categorical marginals for every covariate group plus age
/// bands sampled uniformly within each band.
struct CovariateMarginals {
  std::vector<std::array<double, 2>> age_bands;  ///< [lo, hi) in years
  std::vector<double> age_weights;
  double female = 0.5;
  std::vector<double> education;   ///< indexed by Education
  std::vector<double> employment;  ///< indexed by Employment
  std::vector<double> household;   ///< indexed by Household
  std::vector<double> vehicles;    ///< indexed by Vehicles
  std::vector<double> income;      ///< indexed by Income
  std::vector<double> dwelling;    ///< indexed by Dwelling
  std::vector<double> tenure;      ///< indexed by Tenure

  /// Sample shares of the survey; "income not specified" is merged into the
  /// middle band, unemployed and retired into "other".
  static CovariateMarginals survey();
};

class CovariateSampler {
 public:
  CovariateSampler() : CovariateSampler(CovariateMarginals::survey()) {}
  explicit CovariateSampler(CovariateMarginals m);
  CovariateVector operator()(std::mt19937_64& rng) const;
  const CovariateMarginals& marginals() const { return m_; }

 private:
  CovariateMarginals m_;
};

/// Category index drawn from non-negative weights.
std::size_t sample_categorical(std::span<const double> weights, std::mt19937_64& rng);

/// Level drawn from an ordered logit with the given index.
int sample_ordered_logit(std::span<const double, kThresholdCount> thresholds, double index,
                         std::mt19937_64& rng);

/// Standard Gumbel variate.
double sample_gumbel(std::mt19937_64& rng);

/// Synthetic panel: per individual n (id n+1) draw covariates, latents,
/// indicator levels, block n mod n_blocks and a uniform budget band, then
/// choices by maximising V + Gumbel noise. Individuals use independent seeded
/// streams, so the result does not depend on `threads`.
ChoiceDataset simulate_dataset(const Design& design, const ParameterSet& true_params, int n_individuals,
                               const CovariateSampler& sampler, std::uint64_t seed, int threads = 1);

}  // namespace iclv
