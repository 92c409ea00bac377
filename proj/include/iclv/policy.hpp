#pragma once

// Cohort simulation: representative socio-demographic profiles, their latent
// attitudes, indicator response profiles, the age curve of the latents and
// one-vehicle-versus-opt-out policy sweeps.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclv/model.hpp"

namespace iclv {

struct CohortSpec {
  std::string name;  ///< generation label, e.g. "Gen Y"
  double age_years = 0.0;
  bool female = false;
  Education education = Education::other;
  Employment employment = Employment::other;
  Household household = Household::other;
  Vehicles vehicles = Vehicles::none;
  Income income = Income::middle;
  Dwelling dwelling = Dwelling::other;
  Tenure tenure = Tenure::other;

  std::string_view gender() const { return female ? "female" : "male"; }
  /// "<name> <gender>"
  std::string label() const;
};

/// Age divided by 100 plus the categorical fields. Throws ParameterError when
/// the age leaves (0, 120].
CovariateVector to_covariates(const CohortSpec& c);

/// The six representative profiles: Gen Z, Gen Y and Gen X, male then female.
std::vector<CohortSpec> standard_cohorts();

/// Structural mean at the cohort's covariates (δ = 0). Throws ConfigError
/// naming a covariate that is active for the cohort but has no column in A.
LatentAttitudes cohort_latents(const ParameterSet& params, const CohortSpec& cohort);

struct AgePoint {
  double age_years = 0.0;
  LatentAttitudes latents;
  bool extrapolated = false;  ///< outside the observed 18–85 range
};

/// constant + Σ_k A_age^k · (age/100)^k per latent with every other covariate
/// at zero.
std::vector<AgePoint> age_profile(const ParameterSet& params, std::span<const double> ages_years);

struct IndicatorProfile {
  std::string indicator;
  Latent latent = Latent::design;
  std::array<double, kLikertLevels> probabilities{};
};

/// Ordered-logit level probabilities of every indicator at the cohort latents.
/// Throws ConfigError when params carry no measurement block.
std::vector<IndicatorProfile> measurement_profile(const ParameterSet& params, const CohortSpec& cohort);

/// The reference vehicle of the sweeps, in model units.
struct BaseVehicle {
  BodyType body_type = BodyType::large_sedan;
  double price = 1.0;             ///< $100k
  double setup_cost = 10.0;       ///< $1k
  double range_km = 4.5;          ///< 100 km
  double recharge_time = 0.125;   ///< 10 h
  double operating_cost = 6.12;   ///< c/km
  double rebate_upfront = 0.0;
  double energy_discount = 0.0;
  double market_uptake = 0.01;

  AlternativeAttributes attributes() const;
};

enum class SweptField : std::uint8_t {
  price_subsidy,
  rebate_upfront,
  range_km,
  recharge_time,
  energy_discount,
  market_uptake,
};

std::string_view to_string(SweptField f);
SweptField parse_swept_field(std::string_view s);

/// Field swept by scenario 1..6. Throws ConfigError otherwise.
SweptField scenario_field(int scenario_id);

/// Grid values are in the swept attribute's model units; for price_subsidy
/// the value is the subsidy subtracted from the base price.
struct ScenarioSweep {
  int scenario_id = 1;
  SweptField field = SweptField::price_subsidy;
  std::vector<double> grid;
  std::vector<CohortSpec> cohorts;

  /// The published sweep for a scenario with `points` evenly spaced values:
  /// 1 subsidy 0–$50k, 2 rebate 0–$50k, 3 range 450–700 km, 4 recharge 75–25
  /// min, 5 energy discount 0–100 %, 6 uptake from the base value to 90 %.
  static ScenarioSweep standard(int scenario_id, std::vector<CohortSpec> cohorts, int points = 11,
                                const BaseVehicle& base = {});
};

/// Throws ConfigError unless the field matches the scenario, the grid is
/// nonempty, finite and strictly monotone, and cohorts are present.
void validate(const ScenarioSweep& sweep);

struct ScenarioOptions {
  /// Utility of the opt-out alternative; the calibration constant.
  double opt_out_constant = 0.0;
  /// Draws of the latent disturbance per cohort; 0 evaluates at δ = 0.
  int monte_carlo_draws = 0;
  std::uint64_t seed = 20181026;
  /// Central coverage of the reported probability band.
  double band = 0.9;
};

struct CurvePoint {
  int scenario = 0;
  std::string cohort;
  std::string gender;
  double x = 0.0;
  double probability = 0.0;
  std::optional<double> lower;
  std::optional<double> upper;
  bool extrapolated = false;
};

struct SweepResult {
  std::vector<CurvePoint> points;  ///< by cohort, then grid index
  std::vector<std::string> warnings;
};

/// Plain-attribute bounds of the stated-preference grid; sweep values beyond
/// them are annotated as extrapolation.
struct ExtrapolationBounds {
  double price_lo = 0.25, price_hi = 1.6;
  double rebate_hi = 1.0;
  double range_lo = 1.2, range_hi = 5.4;
  double recharge_lo = 0.05, recharge_hi = 0.75;
};

/// P(EV) against the opt-out for every cohort and grid point. Monte Carlo mode
/// needs delta_scale and reports the mean with a central band of the
/// conditional probabilities. Throws ConfigError naming a coefficient the
/// swept attribute needs but params lack.
SweepResult scenario_sweep(const ParameterSet& params, const ScenarioSweep& sweep, const BaseVehicle& base,
                           const ScenarioOptions& opts = {}, const ExtrapolationBounds& bounds = {});

/// EV utility of the base vehicle for a cohort (δ = 0, no opt-out constant).
double base_utility(const ParameterSet& params, const CohortSpec& cohort, const BaseVehicle& base);

/// Opt-out constant giving `cohort` the probability `target` of choosing the
/// base vehicle.
double calibrate_opt_out_constant(const ParameterSet& params, const CohortSpec& cohort,
                                  const BaseVehicle& base, double target);

}  // namespace iclv
