#include "iclv/synthetic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "iclv/draws.hpp"
#include "iclv/error.hpp"
#include "iclv/parallel.hpp"

namespace iclv {

namespace {

constexpr std::array<std::string_view, kDesignAttributeCount> kDesignAttributeNames = {
    "body_type",      "price",          "setup_cost", "operating_cost", "recharge_time",
    "range_km",       "charge_spacing", "bus_lane",   "rebate_upfront", "parking_rebate",
    "energy_discount", "stamp_duty",    "market_uptake"};

// Stream tags for make_stream.
constexpr std::uint64_t kDesignStream = 0x64657369676eULL;
constexpr std::uint64_t kSwapStream = 0x73776170ULL;
constexpr std::uint64_t kPersonStream = 0x706572736f6eULL;

std::size_t index_of(DesignAttribute a) { return static_cast<std::size_t>(a); }

void check_levels(const std::vector<double>& v, const char* name, bool fraction) {
  if (v.empty()) throw ConfigError(std::string("design attribute ") + name + " has no levels");
  for (double x : v) {
    if (!std::isfinite(x) || x < 0.0)
      throw ConfigError(std::string("design attribute ") + name + " has a negative or non-finite level");
    if (fraction && x > 1.0) throw ConfigError(std::string("design attribute ") + name + " has a level above 1");
  }
}

}  // namespace

std::string_view to_string(DesignAttribute a) { return kDesignAttributeNames[index_of(a)]; }

DesignSpec DesignSpec::paper_default() {
  DesignSpec s;
  s.body_types = {BodyType::hatchback, BodyType::small_sedan, BodyType::large_sedan,
                  BodyType::small_suv, BodyType::large_suv,   BodyType::minivan};
  s.price_bands = {{0.25, 0.35, 0.45, 0.55}, {0.55, 0.70, 0.85, 1.00}, {1.00, 1.20, 1.40, 1.60}};
  s.setup_cost = {1.0, 1.75, 2.5, 3.25};
  s.operating_cost = {3.0, 6.0, 9.0, 12.0};
  s.recharge_time = {0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75};
  s.range_km = {1.2, 1.8, 2.4, 3.0, 3.6, 4.2, 4.8, 5.4};
  s.charge_spacing = {0.5, 1.0, 1.5, 2.0};
  s.bus_lane = {false, true};
  s.rebate_upfront = {0.0, 0.3, 0.65, 1.0};
  s.parking_rebate = {0.0, 1.0, 2.5, 4.0};
  s.energy_discount = {0.0, 0.25, 0.75, 1.0};
  s.stamp_duty = {0.0, 0.05, 0.15, 0.25};
  s.market_uptake = {0.01, 0.30, 0.60, 0.90};
  return s;
}

std::size_t DesignSpec::level_count(DesignAttribute a) const {
  switch (a) {
    case DesignAttribute::body_type: return body_types.size();
    case DesignAttribute::price: return price_bands.empty() ? 0 : price_bands.front().size();
    case DesignAttribute::setup_cost: return setup_cost.size();
    case DesignAttribute::operating_cost: return operating_cost.size();
    case DesignAttribute::recharge_time: return recharge_time.size();
    case DesignAttribute::range_km: return range_km.size();
    case DesignAttribute::charge_spacing: return charge_spacing.size();
    case DesignAttribute::bus_lane: return bus_lane.size();
    case DesignAttribute::rebate_upfront: return rebate_upfront.size();
    case DesignAttribute::parking_rebate: return parking_rebate.size();
    case DesignAttribute::energy_discount: return energy_discount.size();
    case DesignAttribute::stamp_duty: return stamp_duty.size();
    case DesignAttribute::market_uptake: return market_uptake.size();
  }
  return 0;
}

void validate(const DesignSpec& s) {
  if (s.n_tasks < 1 || s.n_blocks < 1 || s.tasks_per_respondent < 1)
    throw ConfigError("design sizes must be positive");
  if (s.n_tasks != s.n_blocks * s.tasks_per_respondent)
    throw ConfigError("n_tasks (" + std::to_string(s.n_tasks) + ") must equal n_blocks × tasks_per_respondent (" +
                      std::to_string(s.n_blocks) + " × " + std::to_string(s.tasks_per_respondent) + ")");
  if (s.body_types.empty()) throw ConfigError("design attribute body_type has no levels");
  if (s.bus_lane.empty()) throw ConfigError("design attribute bus_lane has no levels");
  if (s.price_bands.empty()) throw ConfigError("design needs at least one price band");
  for (const auto& band : s.price_bands) {
    check_levels(band, "price", false);
    if (band.size() != s.price_bands.front().size())
      throw ConfigError("all price bands must have the same number of levels");
  }
  if (s.reference_band < 0 || s.reference_band >= static_cast<int>(s.price_bands.size()))
    throw ConfigError("reference_band is outside the price bands");
  check_levels(s.setup_cost, "setup_cost", false);
  check_levels(s.operating_cost, "operating_cost", false);
  check_levels(s.recharge_time, "recharge_time", false);
  check_levels(s.range_km, "range_km", false);
  check_levels(s.charge_spacing, "charge_spacing", false);
  check_levels(s.rebate_upfront, "rebate_upfront", false);
  check_levels(s.parking_rebate, "parking_rebate", false);
  check_levels(s.energy_discount, "energy_discount", true);
  check_levels(s.stamp_duty, "stamp_duty", true);
  check_levels(s.market_uptake, "market_uptake", true);
  for (std::size_t a = 0; a < kDesignAttributeCount; ++a)
    if (s.level_count(static_cast<DesignAttribute>(a)) > 255)
      throw ConfigError("design attribute " + std::string(kDesignAttributeNames[a]) + " has too many levels");
}

AlternativeAttributes Design::attributes(std::size_t t, std::size_t alt, int band) const {
  const LevelIndices& lv = tasks.at(t).alts.at(alt);
  auto at = [&](std::size_t a) { return static_cast<std::size_t>(lv[a]); };
  AlternativeAttributes x;
  x.body_type = spec.body_types.at(at(0));
  x.price = spec.price_bands.at(static_cast<std::size_t>(band)).at(at(1));
  x.setup_cost = spec.setup_cost.at(at(2));
  x.operating_cost = spec.operating_cost.at(at(3));
  x.recharge_time = spec.recharge_time.at(at(4));
  x.range_km = spec.range_km.at(at(5));
  x.charge_spacing = spec.charge_spacing.at(at(6));
  x.bus_lane = spec.bus_lane.at(at(7));
  x.rebate_upfront = spec.rebate_upfront.at(at(8));
  x.parking_rebate = spec.parking_rebate.at(at(9));
  x.energy_discount = spec.energy_discount.at(at(10));
  x.stamp_duty = spec.stamp_duty.at(at(11));
  x.market_uptake = spec.market_uptake.at(at(12));
  return x;
}

Design random_design(const DesignSpec& spec, std::uint64_t seed) {
  validate(spec);
  Design d;
  d.spec = spec;
  auto rng = make_stream(seed, kDesignStream, 0);
  d.tasks.resize(static_cast<std::size_t>(spec.n_tasks));
  for (std::size_t t = 0; t < d.tasks.size(); ++t) {
    d.tasks[t].block = static_cast<int>(t) / spec.tasks_per_respondent;
    for (auto& alt : d.tasks[t].alts)
      for (std::size_t a = 0; a < kDesignAttributeCount; ++a) {
        const auto n = spec.level_count(static_cast<DesignAttribute>(a));
        alt[a] = static_cast<std::uint8_t>(std::min<std::size_t>(
            n - 1, static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(n))));
      }
  }
  return d;
}

DErrorReport d_error_report(const Design& design, const std::vector<Coefficient>& prior,
                            const DErrorOptions& opts) {
  const auto K = static_cast<Eigen::Index>(prior.size());
  if (K == 0) throw ConfigError("d_error: the prior has no coefficients");
  for (const auto& c : prior)
    if (!is_attribute_name(c.attribute)) throw ConfigError("d_error: unknown prior attribute '" + c.attribute + "'");
  Eigen::VectorXd beta(K);
  for (Eigen::Index k = 0; k < K; ++k) beta[k] = prior[static_cast<std::size_t>(k)].value;

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(K, K);
  const Eigen::Index J = opts.include_opt_out ? 3 : 2;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(J, K);
  for (std::size_t t = 0; t < design.tasks.size(); ++t) {
    for (std::size_t j = 0; j < 2; ++j) {
      const auto alt = design.attributes(t, j);
      for (Eigen::Index k = 0; k < K; ++k)
        X(static_cast<Eigen::Index>(j), k) = attribute_value(alt, prior[static_cast<std::size_t>(k)].attribute);
    }
    Eigen::VectorXd v = X * beta;
    v.array() -= v.maxCoeff();
    Eigen::VectorXd p = v.array().exp();
    p /= p.sum();
    const Eigen::RowVectorXd xbar = p.transpose() * X;
    for (Eigen::Index j = 0; j < J; ++j) {
      const Eigen::RowVectorXd dx = X.row(j) - xbar;
      info.noalias() += p[j] * dx.transpose() * dx;
    }
  }

  DErrorReport rep;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  if (ev.minCoeff() <= 1e-10 * top) {
    rep.value = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      bool involved = false;
      for (Eigen::Index m = 0; m < K; ++m)
        if (ev[m] <= 1e-10 * top && std::abs(eig.eigenvectors()(k, m)) > 1e-6) involved = true;
      if (involved) rep.collinear.push_back(prior[static_cast<std::size_t>(k)].attribute);
    }
    return rep;
  }
  // det(Ω)^{1/K} = exp(−Σ log λ / K)
  rep.value = std::exp(-ev.array().log().sum() / static_cast<double>(K));
  return rep;
}

double d_error(const Design& design, const std::vector<Coefficient>& prior, const DErrorOptions& opts) {
  return d_error_report(design, prior, opts).value;
}

Design improve_design(const Design& design, const std::vector<Coefficient>& prior, int swaps,
                      std::uint64_t seed, const DErrorOptions& opts) {
  Design best = design;
  if (swaps <= 0 || best.tasks.empty()) return best;
  double best_err = d_error(best, prior, opts);
  auto rng = make_stream(seed, kSwapStream, 0);
  auto pick = [&](std::size_t n) {
    return std::min<std::size_t>(n - 1, static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(n)));
  };
  for (int s = 0; s < swaps; ++s) {
    const std::size_t t = pick(best.tasks.size());
    const std::size_t j = pick(2);
    const std::size_t a = pick(kDesignAttributeCount);
    const std::size_t n = best.spec.level_count(static_cast<DesignAttribute>(a));
    if (n < 2) continue;
    auto& slot = best.tasks[t].alts[j][a];
    const std::uint8_t old = slot;
    // a level different from the current one
    std::size_t lv = pick(n - 1);
    if (lv >= old) ++lv;
    slot = static_cast<std::uint8_t>(lv);
    const double err = d_error(best, prior, opts);
    if (err < best_err)
      best_err = err;
    else
      slot = old;
  }
  return best;
}

// ---------------------------------------------------------------------------

CovariateMarginals CovariateMarginals::survey() {
  CovariateMarginals m;
  m.age_bands = {{18.0, 31.0}, {31.0, 46.0}, {46.0, 66.0}, {66.0, 86.0}};
  m.age_weights = {0.2314, 0.2807, 0.3420, 0.1459};
  m.female = 0.5102;
  m.education = {0.0771, 0.3188, 0.2100, 0.3941};
  m.employment = {0.1998 + 0.1794, 0.4275, 0.1933};
  m.household = {0.1069, 0.3076, 0.3578, 0.0539, 0.1738};
  m.vehicles = {0.0353, 0.4981, 0.3550, 0.1115};
  m.income = {0.2928 + 0.1041, 0.2900, 0.3132};
  m.dwelling = {0.1097, 0.6710, 0.2193};
  m.tenure = {0.0186, 0.3615, 0.3253, 0.2946};
  return m;
}

CovariateSampler::CovariateSampler(CovariateMarginals m) : m_(std::move(m)) {
  auto check = [](const std::vector<double>& w, std::size_t n, const char* name) {
    if (w.size() != n) throw ConfigError(std::string("covariate marginals: ") + name + " needs " +
                                         std::to_string(n) + " weights");
    double s = 0.0;
    for (double x : w) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(std::string("covariate marginals: bad weight for ") + name);
      s += x;
    }
    if (!(s > 0.0)) throw ConfigError(std::string("covariate marginals: weights for ") + name + " sum to zero");
  };
  check(m_.age_weights, m_.age_bands.size(), "age");
  for (const auto& b : m_.age_bands)
    if (!(b[0] > 0.0 && b[1] > b[0] && b[1] <= 120.0)) throw ConfigError("covariate marginals: bad age band");
  if (!(m_.female >= 0.0 && m_.female <= 1.0)) throw ConfigError("covariate marginals: female share outside [0,1]");
  check(m_.education, 4, "education");
  check(m_.employment, 3, "employment");
  check(m_.household, 5, "household");
  check(m_.vehicles, 4, "vehicles");
  check(m_.income, 3, "income");
  check(m_.dwelling, 3, "dwelling");
  check(m_.tenure, 4, "tenure");
}

std::size_t sample_categorical(std::span<const double> weights, std::mt19937_64& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = uniform_open(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // rounding at the top end
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

CovariateVector CovariateSampler::operator()(std::mt19937_64& rng) const {
  CovariateVector z;
  const auto& band = m_.age_bands[sample_categorical(m_.age_weights, rng)];
  z.age = (band[0] + uniform_open(rng) * (band[1] - band[0])) / 100.0;
  z.female = uniform_open(rng) < m_.female;
  z.education = static_cast<Education>(sample_categorical(m_.education, rng));
  z.employment = static_cast<Employment>(sample_categorical(m_.employment, rng));
  z.household = static_cast<Household>(sample_categorical(m_.household, rng));
  z.vehicles = static_cast<Vehicles>(sample_categorical(m_.vehicles, rng));
  z.income = static_cast<Income>(sample_categorical(m_.income, rng));
  z.dwelling = static_cast<Dwelling>(sample_categorical(m_.dwelling, rng));
  z.tenure = static_cast<Tenure>(sample_categorical(m_.tenure, rng));
  return z;
}

int sample_ordered_logit(std::span<const double, kThresholdCount> thresholds, double index,
                         std::mt19937_64& rng) {
  const double u = uniform_open(rng);
  for (int j = 0; j < kThresholdCount; ++j)
    if (u < logistic(thresholds[static_cast<std::size_t>(j)] - index)) return j + 1;
  return kLikertLevels;
}

double sample_gumbel(std::mt19937_64& rng) { return -std::log(-std::log(uniform_open(rng))); }

ChoiceDataset simulate_dataset(const Design& design, const ParameterSet& true_params, int n_individuals,
                               const CovariateSampler& sampler, std::uint64_t seed, int threads) {
  validate(design.spec);
  validate(true_params);
  if (n_individuals < 0) throw ConfigError("n_individuals must be >= 0");
  const auto& spec = design.spec;
  if (design.tasks.size() != static_cast<std::size_t>(spec.n_tasks))
    throw ConfigError("design has " + std::to_string(design.tasks.size()) + " tasks, expected " +
                      std::to_string(spec.n_tasks));
  std::vector<std::vector<std::size_t>> blocks(static_cast<std::size_t>(spec.n_blocks));
  for (std::size_t t = 0; t < design.tasks.size(); ++t) {
    const int b = design.tasks[t].block;
    if (b < 0 || b >= spec.n_blocks) throw ConfigError("design task " + std::to_string(t) + " has an invalid block");
    blocks[static_cast<std::size_t>(b)].push_back(t);
  }
  for (const auto& b : blocks)
    if (b.size() != static_cast<std::size_t>(spec.tasks_per_respondent))
      throw ConfigError("every block must hold tasks_per_respondent tasks");

  ChoiceDataset data;
  data.panel_length = spec.tasks_per_respondent;
  data.indicator_count =
      true_params.measurement ? static_cast<int>(true_params.measurement->indicators.size()) : 0;
  data.individuals.resize(static_cast<std::size_t>(n_individuals));
  const auto scale = true_params.delta_scale.value_or(std::array<double, kLatentCount>{});
  const std::vector<double> band_weights(spec.price_bands.size(), 1.0);

  parallel_for(data.individuals.size(), threads, [&](std::size_t n) {
    auto rng = make_stream(seed, kPersonStream, n);
    Individual& person = data.individuals[n];
    person.id = static_cast<std::int64_t>(n) + 1;
    person.covariates = sampler(rng);
    LatentAttitudes att = structural_mean(true_params, person.covariates);
    for (std::size_t l = 0; l < kLatentCount; ++l) att.values[l] += scale[l] * normal_quantile(uniform_open(rng));
    if (true_params.measurement)
      for (const auto& ind : true_params.measurement->indicators)
        person.indicators.push_back(sample_ordered_logit(ind.thresholds, ind.loading * att[ind.latent], rng));
    const auto& block = blocks[n % blocks.size()];
    const int band = static_cast<int>(sample_categorical(band_weights, rng));
    for (std::size_t t : block) {
      ChoiceTask task;
      task.alt1 = design.attributes(t, 0, band);
      task.alt2 = design.attributes(t, 1, band);
      const double u1 = systematic_utility(true_params, task.alt1, att) + sample_gumbel(rng);
      const double u2 = systematic_utility(true_params, task.alt2, att) + sample_gumbel(rng);
      const double u0 = sample_gumbel(rng);
      task.chosen = u1 >= u2 && u1 >= u0 ? Choice::alt1 : (u2 >= u0 ? Choice::alt2 : Choice::opt_out);
      person.tasks.push_back(task);
    }
  });
  return data;
}

}  // namespace iclv
