#include "iclv/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "iclv/draws.hpp"
#include "iclv/error.hpp"

namespace iclv {

namespace {

constexpr double kObservedAgeLo = 18.0;
constexpr double kObservedAgeHi = 85.0;

std::string_view swept_attribute(SweptField f) {
  switch (f) {
    case SweptField::price_subsidy: return "price";
    case SweptField::rebate_upfront: return "rebate_upfront";
    case SweptField::range_km: return "range_km";
    case SweptField::recharge_time: return "recharge_time";
    case SweptField::energy_discount: return "energy_discount";
    case SweptField::market_uptake: return "market_uptake";
  }
  return "";
}

void require_coefficient(const ParameterSet& params, SweptField f) {
  const auto key = swept_attribute(f);
  if (params.find_beta(key)) return;
  for (const auto& i : params.interactions)
    if (i.attribute == key) return;
  throw ConfigError("missing coefficient 'beta." + std::string(key) + "' required by the " +
                    std::string(to_string(f)) + " sweep");
}

AlternativeAttributes apply(const BaseVehicle& base, SweptField f, double x) {
  auto alt = base.attributes();
  switch (f) {
    case SweptField::price_subsidy: alt.price = base.price - x; break;
    case SweptField::rebate_upfront: alt.rebate_upfront = x; break;
    case SweptField::range_km: alt.range_km = x; break;
    case SweptField::recharge_time: alt.recharge_time = x; break;
    case SweptField::energy_discount: alt.energy_discount = x; break;
    case SweptField::market_uptake: alt.market_uptake = x; break;
  }
  validate(alt);
  return alt;
}

std::optional<std::string> extrapolation(SweptField f, const AlternativeAttributes& alt,
                                         const ExtrapolationBounds& b) {
  auto outside = [](std::string_view what, double v, double lo, double hi) -> std::optional<std::string> {
    if (v >= lo && v <= hi) return std::nullopt;
    std::ostringstream os;
    os << what << " = " << v << " outside the surveyed range [" << lo << ", " << hi << "]";
    return os.str();
  };
  switch (f) {
    case SweptField::price_subsidy: return outside("price", alt.price, b.price_lo, b.price_hi);
    case SweptField::rebate_upfront: return outside("rebate_upfront", alt.rebate_upfront, 0.0, b.rebate_hi);
    case SweptField::range_km: return outside("range_km", alt.range_km, b.range_lo, b.range_hi);
    case SweptField::recharge_time:
      return outside("recharge_time", alt.recharge_time, b.recharge_lo, b.recharge_hi);
    case SweptField::energy_discount:
    case SweptField::market_uptake: return std::nullopt;
  }
  return std::nullopt;
}

double quantile(std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(hi), v.end());
  const double b = v[hi];
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

}  // namespace

std::string CohortSpec::label() const { return name + " " + std::string(gender()); }

CovariateVector to_covariates(const CohortSpec& c) {
  if (!(c.age_years > 0.0 && c.age_years <= 120.0))
    throw ParameterError("cohort '" + c.label() + "': age must lie in (0, 120] years");
  CovariateVector z;
  z.age = c.age_years / 100.0;
  z.female = c.female;
  z.education = c.education;
  z.employment = c.employment;
  z.household = c.household;
  z.vehicles = c.vehicles;
  z.income = c.income;
  z.dwelling = c.dwelling;
  z.tenure = c.tenure;
  return z;
}

std::vector<CohortSpec> standard_cohorts() {
  CohortSpec z{.name = "Gen Z",
               .age_years = 20,
               .education = Education::certificate,
               .employment = Employment::part_time,
               .household = Household::other,
               .vehicles = Vehicles::one,
               .income = Income::middle,
               .dwelling = Dwelling::house,
               .tenure = Tenure::renter};
  CohortSpec y{.name = "Gen Y",
               .age_years = 37,
               .education = Education::undergraduate,
               .employment = Employment::full_time,
               .household = Household::couple_kids,
               .vehicles = Vehicles::one,
               .income = Income::high,
               .dwelling = Dwelling::house,
               .tenure = Tenure::owner_mortgage};
  CohortSpec x = y;
  x.name = "Gen X";
  x.age_years = 50;
  x.tenure = Tenure::owner;
  std::vector<CohortSpec> out;
  for (const auto& c : {z, y, x})
    for (bool female : {false, true}) {
      out.push_back(c);
      out.back().female = female;
    }
  return out;
}

LatentAttitudes cohort_latents(const ParameterSet& params, const CohortSpec& cohort) {
  const auto z = to_covariates(cohort);
  if (params.structural.find(kConstant) < 0)
    throw ConfigError("structural coefficients have no 'constant' column");
  for (auto name : covariate_names())
    if (covariate_value(z, name) != 0.0 && params.structural.find(name) < 0)
      throw ConfigError("cohort '" + cohort.label() + "' uses covariate '" + std::string(name) +
                        "' which has no structural coefficient");
  return structural_mean(params, z);
}

std::vector<AgePoint> age_profile(const ParameterSet& params, std::span<const double> ages_years) {
  const auto& s = params.structural;
  auto column = [&](std::string_view name) {
    const int j = s.find(name);
    return j < 0 ? std::array<double, kLatentCount>{} : s.columns[static_cast<std::size_t>(j)];
  };
  if (s.find(kConstant) < 0) throw ConfigError("structural coefficients have no 'constant' column");
  const auto c0 = column(kConstant), c1 = column("age"), c2 = column("age_sq"), c3 = column("age_cu");
  std::vector<AgePoint> out;
  out.reserve(ages_years.size());
  for (double years : ages_years) {
    if (!std::isfinite(years) || years < 0.0) throw ParameterError("age grid values must be finite and >= 0");
    const double a = years / 100.0;
    AgePoint p;
    p.age_years = years;
    p.extrapolated = years < kObservedAgeLo || years > kObservedAgeHi;
    for (std::size_t l = 0; l < kLatentCount; ++l)
      p.latents.values[l] = c0[l] + a * (c1[l] + a * (c2[l] + a * c3[l]));
    out.push_back(p);
  }
  return out;
}

std::vector<IndicatorProfile> measurement_profile(const ParameterSet& params, const CohortSpec& cohort) {
  if (!params.measurement) throw ConfigError("parameters carry no measurement block");
  const auto& meas = *params.measurement;
  validate(meas);
  const auto att = cohort_latents(params, cohort);
  std::vector<IndicatorProfile> out;
  for (std::size_t k = 0; k < meas.indicators.size(); ++k) {
    IndicatorProfile row;
    row.indicator = meas.indicators[k].name;
    row.latent = meas.indicators[k].latent;
    for (int level = 1; level <= kLikertLevels; ++level)
      row.probabilities[static_cast<std::size_t>(level - 1)] = indicator_prob(meas, k, att, level);
    out.push_back(row);
  }
  return out;
}

AlternativeAttributes BaseVehicle::attributes() const {
  AlternativeAttributes a;
  a.body_type = body_type;
  a.price = price;
  a.setup_cost = setup_cost;
  a.operating_cost = operating_cost;
  a.recharge_time = recharge_time;
  a.range_km = range_km;
  a.rebate_upfront = rebate_upfront;
  a.energy_discount = energy_discount;
  a.market_uptake = market_uptake;
  return a;
}

std::string_view to_string(SweptField f) {
  switch (f) {
    case SweptField::price_subsidy: return "price_subsidy";
    case SweptField::rebate_upfront: return "rebate_upfront";
    case SweptField::range_km: return "range_km";
    case SweptField::recharge_time: return "recharge_time";
    case SweptField::energy_discount: return "energy_discount";
    case SweptField::market_uptake: return "market_uptake";
  }
  return "unknown";
}

SweptField parse_swept_field(std::string_view s) {
  for (auto f : {SweptField::price_subsidy, SweptField::rebate_upfront, SweptField::range_km,
                 SweptField::recharge_time, SweptField::energy_discount, SweptField::market_uptake})
    if (to_string(f) == s) return f;
  throw ConfigError("unknown swept field '" + std::string(s) + "'");
}

SweptField scenario_field(int scenario_id) {
  if (scenario_id < 1 || scenario_id > 6)
    throw ConfigError("scenario id must be 1..6, got " + std::to_string(scenario_id));
  return static_cast<SweptField>(scenario_id - 1);
}

ScenarioSweep ScenarioSweep::standard(int scenario_id, std::vector<CohortSpec> cohorts, int points,
                                      const BaseVehicle& base) {
  if (points < 2) throw ConfigError("a sweep needs at least two grid points");
  ScenarioSweep s;
  s.scenario_id = scenario_id;
  s.field = scenario_field(scenario_id);
  s.cohorts = std::move(cohorts);
  double lo = 0.0, hi = 0.0;
  switch (s.field) {
    case SweptField::price_subsidy: lo = 0.0, hi = 0.5; break;
    case SweptField::rebate_upfront: lo = 0.0, hi = 5.0; break;
    case SweptField::range_km: lo = base.range_km, hi = 7.0; break;
    case SweptField::recharge_time: lo = base.recharge_time, hi = 25.0 / 600.0; break;
    case SweptField::energy_discount: lo = 0.0, hi = 1.0; break;
    case SweptField::market_uptake: lo = base.market_uptake, hi = 0.9; break;
  }
  for (int i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    s.grid.push_back(i == points - 1 ? hi : lo + t * (hi - lo));
  }
  return s;
}

void validate(const ScenarioSweep& sweep) {
  if (scenario_field(sweep.scenario_id) != sweep.field)
    throw ConfigError("scenario " + std::to_string(sweep.scenario_id) + " sweeps " +
                      std::string(to_string(scenario_field(sweep.scenario_id))) + ", not " +
                      std::string(to_string(sweep.field)));
  if (sweep.grid.empty()) throw ConfigError("sweep grid is empty");
  if (sweep.cohorts.empty()) throw ConfigError("sweep has no cohorts");
  for (double x : sweep.grid)
    if (!std::isfinite(x)) throw ConfigError("sweep grid values must be finite");
  if (sweep.grid.size() > 1) {
    const bool up = sweep.grid[1] > sweep.grid[0];
    for (std::size_t i = 1; i < sweep.grid.size(); ++i)
      if (up ? !(sweep.grid[i] > sweep.grid[i - 1]) : !(sweep.grid[i] < sweep.grid[i - 1]))
        throw ConfigError("sweep grid must be strictly monotone");
  }
}

double base_utility(const ParameterSet& params, const CohortSpec& cohort, const BaseVehicle& base) {
  return systematic_utility(params, base.attributes(), cohort_latents(params, cohort));
}

double calibrate_opt_out_constant(const ParameterSet& params, const CohortSpec& cohort,
                                  const BaseVehicle& base, double target) {
  if (!(target > 0.0 && target < 1.0)) throw ConfigError("calibration target must lie in (0, 1)");
  return base_utility(params, cohort, base) - std::log(target / (1.0 - target));
}

SweepResult scenario_sweep(const ParameterSet& params, const ScenarioSweep& sweep, const BaseVehicle& base,
                           const ScenarioOptions& opts, const ExtrapolationBounds& bounds) {
  validate(sweep);
  require_coefficient(params, sweep.field);
  const bool mc = opts.monte_carlo_draws > 0;
  if (mc && !params.delta_scale) throw ConfigError("Monte Carlo mode requires delta_scale");
  if (mc && !(opts.band > 0.0 && opts.band < 1.0)) throw ConfigError("probability band must lie in (0, 1)");

  SweepResult out;
  std::vector<AlternativeAttributes> alts;
  for (double x : sweep.grid) {
    alts.push_back(apply(base, sweep.field, x));
    if (auto w = extrapolation(sweep.field, alts.back(), bounds))
      out.warnings.push_back("scenario " + std::to_string(sweep.scenario_id) + ": " + *w);
  }

  const std::array<bool, 3> available{true, false, true};
  auto prob = [&](const AlternativeAttributes& alt, const LatentAttitudes& att) {
    const std::array<double, 3> v{systematic_utility(params, alt, att), 0.0, opts.opt_out_constant};
    return choice_prob(v, available)[0];
  };

  for (std::size_t c = 0; c < sweep.cohorts.size(); ++c) {
    const auto& cohort = sweep.cohorts[c];
    std::vector<LatentAttitudes> atts;
    if (mc) {
      DrawSettings ds;
      ds.n_draws = opts.monte_carlo_draws;
      ds.scheme = DrawScheme::pseudo_random;
      ds.seed = opts.seed;
      atts = draw_latents(params, to_covariates(cohort), generate_draws(ds, static_cast<std::int64_t>(c + 1)));
    }
    const auto mean = cohort_latents(params, cohort);
    for (std::size_t i = 0; i < sweep.grid.size(); ++i) {
      CurvePoint p;
      p.scenario = sweep.scenario_id;
      p.cohort = cohort.name;
      p.gender = std::string(cohort.gender());
      p.x = sweep.grid[i];
      p.extrapolated = extrapolation(sweep.field, alts[i], bounds).has_value();
      if (mc) {
        std::vector<double> ps;
        ps.reserve(atts.size());
        double sum = 0.0;
        for (const auto& a : atts) {
          ps.push_back(prob(alts[i], a));
          sum += ps.back();
        }
        p.probability = sum / static_cast<double>(ps.size());
        p.lower = quantile(ps, 0.5 - opts.band / 2.0);
        p.upper = quantile(ps, 0.5 + opts.band / 2.0);
      } else {
        p.probability = prob(alts[i], mean);
      }
      out.points.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace iclv
