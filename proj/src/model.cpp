#include "iclv/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "iclv/error.hpp"

namespace iclv {

namespace {

constexpr std::array<std::string_view, 23> kCovariates = {
    "age",           "age_sq",         "age_cu",        "female",
    "edu_certificate", "edu_postgraduate", "edu_undergraduate", "emp_full_time",
    "emp_part_time", "hh_couple_kids", "hh_couple_no_kids", "hh_single_parent",
    "hh_single",     "veh_one",        "veh_two",       "veh_three_plus",
    "inc_low",       "inc_high",       "dwell_house",   "dwell_apartment",
    "ten_owner",     "ten_owner_mortgage", "ten_renter"};

constexpr std::array<std::string_view, 18> kAttributes = {
    "hatchback",      "small_sedan",    "large_sedan",     "small_suv",     "large_suv",
    "minivan",        "price",          "setup_cost",      "operating_cost", "recharge_time",
    "range_km",       "rebate_upfront", "energy_discount", "market_uptake", "charge_spacing",
    "bus_lane",       "parking_rebate", "stamp_duty"};

double dummy(bool b) { return b ? 1.0 : 0.0; }

}  // namespace

std::span<const std::string_view> covariate_names() { return kCovariates; }

double covariate_value(const CovariateVector& z, std::string_view name) {
  if (name == kConstant) return 1.0;
  if (name == "age") return z.age;
  if (name == "age_sq") return z.age_sq();
  if (name == "age_cu") return z.age_cu();
  if (name == "female") return dummy(z.female);
  if (name == "edu_certificate") return dummy(z.education == Education::certificate);
  if (name == "edu_postgraduate") return dummy(z.education == Education::postgraduate);
  if (name == "edu_undergraduate") return dummy(z.education == Education::undergraduate);
  if (name == "emp_full_time") return dummy(z.employment == Employment::full_time);
  if (name == "emp_part_time") return dummy(z.employment == Employment::part_time);
  if (name == "hh_couple_kids") return dummy(z.household == Household::couple_kids);
  if (name == "hh_couple_no_kids") return dummy(z.household == Household::couple_no_kids);
  if (name == "hh_single_parent") return dummy(z.household == Household::single_parent);
  if (name == "hh_single") return dummy(z.household == Household::single);
  if (name == "veh_one") return dummy(z.vehicles == Vehicles::one);
  if (name == "veh_two") return dummy(z.vehicles == Vehicles::two);
  if (name == "veh_three_plus") return dummy(z.vehicles == Vehicles::three_plus);
  if (name == "inc_low") return dummy(z.income == Income::low);
  if (name == "inc_high") return dummy(z.income == Income::high);
  if (name == "dwell_house") return dummy(z.dwelling == Dwelling::house);
  if (name == "dwell_apartment") return dummy(z.dwelling == Dwelling::apartment);
  if (name == "ten_owner") return dummy(z.tenure == Tenure::owner);
  if (name == "ten_owner_mortgage") return dummy(z.tenure == Tenure::owner_mortgage);
  if (name == "ten_renter") return dummy(z.tenure == Tenure::renter);
  throw ConfigError("unknown covariate '" + std::string(name) + "'");
}

void validate(const CovariateVector& z) {
  if (!(z.age > 0.0 && z.age <= 1.2))
    throw ParameterError("age must lie in (0, 1.2] (years/100), got " + std::to_string(z.age));
}

std::span<const std::string_view> attribute_names() { return kAttributes; }

bool is_attribute_name(std::string_view key) {
  return std::find(kAttributes.begin(), kAttributes.end(), key) != kAttributes.end();
}

double attribute_value(const AlternativeAttributes& a, std::string_view key) {
  for (std::size_t i = 0; i < kBodyTypeNames.size(); ++i)
    if (key == kBodyTypeNames[i]) return dummy(static_cast<std::size_t>(a.body_type) == i);
  if (key == "price") return a.price;
  if (key == "setup_cost") return a.setup_cost;
  if (key == "operating_cost") return a.operating_cost;
  if (key == "recharge_time") return a.recharge_time;
  if (key == "range_km") return a.range_km;
  if (key == "rebate_upfront") return a.rebate_upfront;
  if (key == "energy_discount") return a.energy_discount;
  if (key == "market_uptake") return a.market_uptake;
  if (key == "charge_spacing") return a.charge_spacing;
  if (key == "bus_lane") return dummy(a.bus_lane);
  if (key == "parking_rebate") return a.parking_rebate;
  if (key == "stamp_duty") return a.stamp_duty;
  throw ConfigError("unknown attribute '" + std::string(key) + "'");
}

void validate(const AlternativeAttributes& a) {
  const std::pair<const char*, double> magnitudes[] = {
      {"price", a.price},          {"setup_cost", a.setup_cost},
      {"operating_cost", a.operating_cost}, {"recharge_time", a.recharge_time},
      {"range_km", a.range_km},    {"rebate_upfront", a.rebate_upfront},
      {"charge_spacing", a.charge_spacing}, {"parking_rebate", a.parking_rebate}};
  for (auto [name, v] : magnitudes)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ParameterError(std::string(name) + " must be a finite non-negative value");
  const std::pair<const char*, double> fractions[] = {{"energy_discount", a.energy_discount},
                                                      {"market_uptake", a.market_uptake},
                                                      {"stamp_duty", a.stamp_duty}};
  for (auto [name, v] : fractions)
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError(std::string(name) + " must lie in [0,1]");
}

std::string_view to_string(BodyType b) { return kBodyTypeNames[static_cast<std::size_t>(b)]; }

BodyType parse_body_type(std::string_view s) {
  for (std::size_t i = 0; i < kBodyTypeNames.size(); ++i)
    if (s == kBodyTypeNames[i]) return static_cast<BodyType>(i);
  throw ConfigError("unknown body type '" + std::string(s) + "'");
}

std::string_view to_string(Latent l) { return kLatentNames[static_cast<std::size_t>(l)]; }

Latent parse_latent(std::string_view s) {
  for (std::size_t i = 0; i < kLatentNames.size(); ++i)
    if (s == kLatentNames[i]) return static_cast<Latent>(i);
  throw ConfigError("unknown latent variable '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

void validate(const MeasurementParams& m) {
  for (const auto& ind : m.indicators) {
    if (!std::isfinite(ind.loading))
      throw ParameterError("indicator " + ind.name + ": loading is not finite");
    for (std::size_t j = 0; j < ind.thresholds.size(); ++j) {
      if (!std::isfinite(ind.thresholds[j]))
        throw ParameterError("indicator " + ind.name + ": threshold " + std::to_string(j + 1) +
                             " is not finite");
      if (j > 0 && !(ind.thresholds[j] > ind.thresholds[j - 1]))
        throw ParameterError("indicator " + ind.name + ": thresholds must be strictly increasing");
    }
  }
}

int StructuralCoefficients::find(std::string_view covariate) const {
  for (std::size_t i = 0; i < covariates.size(); ++i)
    if (covariates[i] == covariate) return static_cast<int>(i);
  return -1;
}

std::optional<double> ParameterSet::find_beta(std::string_view attribute) const {
  for (const auto& c : beta)
    if (c.attribute == attribute) return c.value;
  return std::nullopt;
}

void validate(const ParameterSet& p) {
  if (p.structural.covariates.size() != p.structural.columns.size())
    throw ConfigError("structural block: covariate names and columns differ in length");
  std::set<std::string> seen;
  for (std::size_t j = 0; j < p.structural.size(); ++j) {
    const auto& name = p.structural.covariates[j];
    if (name != kConstant) covariate_value(CovariateVector{}, name);  // throws on unknown
    if (!seen.insert(name).second) throw ConfigError("structural covariate '" + name + "' repeated");
    for (double v : p.structural.columns[j])
      if (!std::isfinite(v)) throw ParameterError("structural coefficient for " + name + " not finite");
  }
  if (p.delta_scale)
    for (std::size_t l = 0; l < kLatentCount; ++l)
      if (!((*p.delta_scale)[l] >= 0.0) || !std::isfinite((*p.delta_scale)[l]))
        throw ParameterError("delta_scale." + std::string(kLatentNames[l]) +
                             " must be finite and non-negative");
  if (p.measurement) validate(*p.measurement);
  for (const auto& c : p.beta) {
    if (!is_attribute_name(c.attribute)) throw ConfigError("unknown attribute '" + c.attribute + "'");
    if (!std::isfinite(c.value)) throw ParameterError("beta." + c.attribute + " not finite");
  }
  for (const auto& i : p.interactions) {
    if (!is_attribute_name(i.attribute))
      throw ConfigError("interaction with unknown attribute '" + i.attribute + "'");
    if (!std::isfinite(i.coefficient)) throw ParameterError("interaction coefficient not finite");
  }
  if (!std::isfinite(p.asc)) throw ParameterError("asc not finite");
}

std::vector<Interaction> default_interactions() {
  return {{Latent::design, "price", 0.0},
          {Latent::environment, "range_km", 0.0},
          {Latent::safety, "large_suv", 0.0},
          {Latent::safety, "large_sedan", 0.0}};
}

// ---------------------------------------------------------------------------

void validate(const ChoiceDataset& data) {
  if (data.panel_length < 1) throw ParameterError("panel length must be at least 1");
  std::set<std::int64_t> ids;
  for (const auto& person : data.individuals) {
    const std::string who = "individual " + std::to_string(person.id);
    if (!ids.insert(person.id).second) throw ParameterError(who + ": duplicate id");
    try {
      validate(person.covariates);
      if (static_cast<int>(person.indicators.size()) != data.indicator_count)
        throw ParameterError("expected " + std::to_string(data.indicator_count) +
                             " indicator responses");
      for (int r : person.indicators)
        if (r != kMissingResponse && (r < 1 || r > kLikertLevels))
          throw ParameterError("indicator response out of range 1..5");
      if (static_cast<int>(person.tasks.size()) != data.panel_length)
        throw ParameterError("expected " + std::to_string(data.panel_length) + " tasks, found " +
                             std::to_string(person.tasks.size()));
      for (const auto& t : person.tasks) {
        validate(t.alt1);
        validate(t.alt2);
        if (static_cast<int>(t.chosen) > 2) throw ParameterError("invalid chosen alternative");
      }
    } catch (const ParameterError& e) {
      throw ParameterError(who + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------

ModelSpec ModelSpec::paper_default() {
  ModelSpec s;
  for (auto c : covariate_names()) s.covariates.emplace_back(c);
  for (int k = 1; k <= 10; ++k) {
    IndicatorSpec ind;
    ind.name = "I" + std::to_string(k);
    ind.latent = k <= 2 ? Latent::safety : (k <= 4 ? Latent::environment : Latent::design);
    ind.anchor = (k == 1 || k == 3 || k == 5);
    s.indicators.push_back(ind);
  }
  s.attributes = {"hatchback",     "small_sedan",    "small_suv",       "price",
                  "setup_cost",    "operating_cost", "recharge_time",   "rebate_upfront",
                  "energy_discount", "market_uptake"};
  for (const auto& i : default_interactions()) s.interactions.push_back({i.latent, i.attribute});
  return s;
}

std::vector<std::string> ModelSpec::structural_columns() const {
  std::vector<std::string> cols{std::string(kConstant)};
  cols.insert(cols.end(), covariates.begin(), covariates.end());
  return cols;
}

bool ModelSpec::is_fixed(std::string_view parameter) const {
  return std::find(fixed.begin(), fixed.end(), parameter) != fixed.end();
}

void validate(const ModelSpec& spec) {
  std::set<std::string> seen;
  for (const auto& c : spec.covariates) {
    if (c == kConstant) throw ConfigError("the constant is implicit; do not list it as a covariate");
    covariate_value(CovariateVector{}, c);
    if (!seen.insert(c).second) throw ConfigError("covariate '" + c + "' listed twice");
  }
  seen.clear();
  std::array<int, kLatentCount> anchors{};
  for (const auto& ind : spec.indicators) {
    if (!seen.insert(ind.name).second) throw ConfigError("indicator '" + ind.name + "' listed twice");
    if (ind.anchor) ++anchors[static_cast<std::size_t>(ind.latent)];
  }
  for (std::size_t l = 0; l < kLatentCount; ++l)
    if (anchors[l] > 1)
      throw ConfigError("latent " + std::string(kLatentNames[l]) + " has more than one anchor indicator");
  seen.clear();
  for (const auto& a : spec.attributes) {
    if (!is_attribute_name(a)) throw ConfigError("unknown attribute '" + a + "'");
    if (!seen.insert(a).second) throw ConfigError("attribute '" + a + "' listed twice");
  }
  for (const auto& i : spec.interactions)
    if (!is_attribute_name(i.attribute))
      throw ConfigError("interaction with unknown attribute '" + i.attribute + "'");
}

// ---------------------------------------------------------------------------

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LatentAttitudes structural_mean(const ParameterSet& params, const CovariateVector& z) {
  LatentAttitudes att;
  const auto& s = params.structural;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double v = covariate_value(z, s.covariates[j]);
    if (v == 0.0) continue;
    for (std::size_t l = 0; l < kLatentCount; ++l) att.values[l] += s.columns[j][l] * v;
  }
  return att;
}

LatentAttitudes structural_mean(const ParameterSet& params, std::span<const double> z) {
  const auto& s = params.structural;
  if (z.size() != s.size()) {
    const std::size_t missing = std::min(z.size(), s.size());
    const std::string name = missing < s.size() ? s.covariates[missing] : "<extra column>";
    throw ConfigError("covariate vector has " + std::to_string(z.size()) + " entries but A has " +
                      std::to_string(s.size()) + " columns; missing covariate: " + name);
  }
  LatentAttitudes att;
  for (std::size_t j = 0; j < s.size(); ++j)
    for (std::size_t l = 0; l < kLatentCount; ++l) att.values[l] += s.columns[j][l] * z[j];
  return att;
}

std::vector<LatentAttitudes> draw_latents(const ParameterSet& params, const CovariateVector& z,
                                          std::span<const StandardDraw> draws) {
  if (!params.delta_scale) throw ConfigError("draw_latents requires delta_scale");
  const auto mean = structural_mean(params, z);
  const auto& scale = *params.delta_scale;
  std::vector<LatentAttitudes> out(draws.size());
  for (std::size_t r = 0; r < draws.size(); ++r)
    for (std::size_t l = 0; l < kLatentCount; ++l)
      out[r].values[l] = mean.values[l] + scale[l] * draws[r][l];
  return out;
}

namespace {

// log(1 + e^x)
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_level(int level) {
  if (level < 1 || level > kLikertLevels)
    throw DomainError("Likert level must be in 1..5, got " + std::to_string(level));
}

}  // namespace

double ordered_logit_prob(std::span<const double, kThresholdCount> tau, double index, int level) {
  check_level(level);
  const bool has_lower = level > 1;
  const bool has_upper = level < kLikertLevels;
  const double a = has_lower ? tau[level - 2] - index : 0.0;
  const double b = has_upper ? tau[level - 1] - index : 0.0;
  if (!has_lower) return logistic(b);
  if (!has_upper) return logistic(-a);
  // Mirror into the lower tail when both cut points are positive so the
  // difference of two numbers near 1 is not formed.
  if (a > 0.0) return logistic(-a) - logistic(-b);
  return logistic(b) - logistic(a);
}

double ordered_logit_log_prob(std::span<const double, kThresholdCount> tau, double index, int level) {
  check_level(level);
  const bool has_lower = level > 1;
  const bool has_upper = level < kLikertLevels;
  const double a = has_lower ? tau[level - 2] - index : 0.0;
  const double b = has_upper ? tau[level - 1] - index : 0.0;
  if (!has_lower) return -softplus(-b);
  if (!has_upper) return -softplus(a);
  // σ(b) − σ(a) = (e^b − e^a) / ((1 + e^a)(1 + e^b))
  return b + std::log1p(-std::exp(a - b)) - softplus(a) - softplus(b);
}

double indicator_prob(const MeasurementParams& meas, std::size_t k, const LatentAttitudes& att,
                      int level) {
  if (k >= meas.indicators.size()) throw ConfigError("indicator index out of range");
  const auto& ind = meas.indicators[k];
  for (std::size_t j = 1; j < ind.thresholds.size(); ++j)
    if (!(ind.thresholds[j] > ind.thresholds[j - 1]))
      throw ParameterError("indicator " + ind.name + ": thresholds must be strictly increasing");
  return ordered_logit_prob(ind.thresholds, ind.loading * att[ind.latent], level);
}

double systematic_utility(const ParameterSet& params, const AlternativeAttributes& alt,
                          const LatentAttitudes& att) {
  double v = params.asc;
  for (const auto& c : params.beta) v += c.value * attribute_value(alt, c.attribute);
  for (const auto& i : params.interactions)
    v += i.coefficient * att[i.latent] * attribute_value(alt, i.attribute);
  return v;
}

std::array<double, 3> choice_prob(std::span<const double, 3> v, std::span<const bool, 3> available) {
  double vmax = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < 3; ++i)
    if (available[i]) {
      any = true;
      vmax = std::max(vmax, v[i]);
    }
  if (!any) throw DomainError("choice_prob: no alternative is available");
  std::array<double, 3> p{};
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    if (available[i]) {
      p[i] = std::exp(v[i] - vmax);
      sum += p[i];
    }
  for (double& x : p) x /= sum;
  return p;
}

std::array<double, 3> choice_prob(std::span<const double, 3> v) {
  constexpr std::array<bool, 3> all{true, true, true};
  return choice_prob(v, all);
}

}  // namespace iclv
