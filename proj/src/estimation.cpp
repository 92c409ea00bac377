#include "iclv/estimation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "iclv/error.hpp"
#include "iclv/likelihood.hpp"

namespace iclv {

namespace {

constexpr std::size_t L = kLatentCount;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// logistic quantiles at 0.2, 0.4, 0.6, 0.8
const std::array<double, kThresholdCount> kQuintiles = {-std::log(4.0), -std::log(1.5), std::log(1.5),
                                                        std::log(4.0)};

std::string latent_name(std::size_t l) { return std::string(kLatentNames[l]); }

std::array<double, kThresholdCount> to_working(const std::array<double, kThresholdCount>& tau,
                                               const std::string& indicator) {
  std::array<double, kThresholdCount> w{};
  w[0] = tau[0];
  for (std::size_t j = 1; j < kThresholdCount; ++j) {
    const double gap = tau[j] - tau[j - 1];
    if (!(gap > 0.0)) throw ParameterError("indicator " + indicator + ": thresholds must be strictly increasing");
    w[j] = std::log(gap);
  }
  return w;
}

std::array<double, kThresholdCount> from_working(const std::array<double, kThresholdCount>& w) {
  std::array<double, kThresholdCount> tau{};
  tau[0] = w[0];
  for (std::size_t j = 1; j < kThresholdCount; ++j) tau[j] = tau[j - 1] + std::exp(w[j]);
  return tau;
}

bool anchor_location_fixed(const ModelSpec& spec, const IndicatorSpec& ind) {
  return ind.anchor && spec.anchor_threshold.has_value();
}

}  // namespace

std::string_view to_string(StartingValues s) {
  return s == StartingValues::user_supplied ? "user_supplied" : "zeros_with_unit_scales";
}

StartingValues parse_starting_values(std::string_view s) {
  if (s == "zeros_with_unit_scales") return StartingValues::zeros_with_unit_scales;
  if (s == "user_supplied") return StartingValues::user_supplied;
  throw ConfigError("unknown starting_values '" + std::string(s) + "'");
}

void validate(const EstimationSettings& s) {
  if (s.max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (!(s.gradient_step > 0.0)) throw ConfigError("gradient_step must be > 0");
  if (!(s.convergence_tol > 0.0)) throw ConfigError("convergence_tol must be > 0");
  if (!(s.hessian_step > 0.0)) throw ConfigError("hessian_step must be > 0");
  if (s.threads < 1) throw ConfigError("threads must be >= 1");
  validate(s.draw_settings);
  if (s.starting_values == StartingValues::user_supplied && !s.start)
    throw ConfigError("starting_values = user_supplied requires a starting parameter set");
}

// ---------------------------------------------------------------------------

FreeParameterMap::FreeParameterMap(const ModelSpec& spec) : spec_(spec) {
  validate(spec);
  const auto columns = spec.structural_columns();

  std::array<int, L> n_ind{};
  std::array<bool, L> has_anchor{};
  std::array<bool, L> interacts{};
  for (const auto& ind : spec.indicators) {
    ++n_ind[static_cast<std::size_t>(ind.latent)];
    if (ind.anchor) has_anchor[static_cast<std::size_t>(ind.latent)] = true;
  }
  for (const auto& i : spec.interactions) interacts[static_cast<std::size_t>(i.latent)] = true;

  std::vector<FreeParameter> candidates;
  for (std::size_t l = 0; l < L; ++l) {
    // A latent with neither indicators nor interactions does not enter the
    // likelihood and has nothing to estimate.
    if (n_ind[l] == 0 && !interacts[l]) continue;
    bool any_free = false;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      FreeParameter p{"structural." + latent_name(l) + "." + columns[j], ParamKind::structural, l, j, 0};
      any_free = any_free || !spec.is_fixed(p.name);
      candidates.push_back(std::move(p));
    }
    FreeParameter s{"delta_scale." + latent_name(l), ParamKind::delta_scale, l, 0, 0};
    any_free = any_free || !spec.is_fixed(s.name);
    candidates.push_back(std::move(s));
    if (any_free && n_ind[l] < 2)
      throw IdentificationError("latent " + latent_name(l) + " has " + std::to_string(n_ind[l]) +
                                " indicator(s); at least two are needed to identify it");
    if (n_ind[l] > 0 && !has_anchor[l])
      throw IdentificationError("latent " + latent_name(l) + " has no anchor indicator with a unit loading");
  }
  for (std::size_t k = 0; k < spec.indicators.size(); ++k) {
    const auto& ind = spec.indicators[k];
    const auto l = static_cast<std::size_t>(ind.latent);
    if (!ind.anchor) candidates.push_back({"loading." + ind.name, ParamKind::loading, l, k, 0});
    for (std::size_t j = 0; j < kThresholdCount; ++j) {
      if (j == 0 && anchor_location_fixed(spec, ind)) continue;
      candidates.push_back(
          {"threshold." + ind.name + "." + std::to_string(j + 1), ParamKind::threshold, l, k, j});
    }
  }
  for (std::size_t b = 0; b < spec.attributes.size(); ++b)
    candidates.push_back({"beta." + spec.attributes[b], ParamKind::beta, 0, b, 0});
  for (std::size_t i = 0; i < spec.interactions.size(); ++i) {
    const auto& it = spec.interactions[i];
    const auto l = static_cast<std::size_t>(it.latent);
    candidates.push_back({"interaction." + latent_name(l) + "." + it.attribute, ParamKind::interaction, l, i, 0});
  }
  if (spec.free_asc) candidates.push_back({"asc", ParamKind::asc, 0, 0, 0});

  for (const auto& f : spec.fixed) {
    const bool known = std::any_of(candidates.begin(), candidates.end(),
                                   [&](const FreeParameter& p) { return p.name == f; });
    if (!known) throw ConfigError("fixed parameter '" + f + "' does not name a free parameter of this model");
  }
  for (auto& p : candidates)
    if (!spec.is_fixed(p.name)) params_.push_back(std::move(p));
}

FreeParameterMap free_parameter_map(const ModelSpec& spec) { return FreeParameterMap(spec); }

std::vector<std::string> FreeParameterMap::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

std::optional<std::size_t> FreeParameterMap::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

std::vector<double> FreeParameterMap::to_vector(const ParameterSet& p) const {
  std::vector<double> theta;
  theta.reserve(params_.size());
  std::map<std::size_t, std::array<double, kThresholdCount>> work;
  for (const auto& fp : params_) {
    switch (fp.kind) {
      case ParamKind::structural:
        theta.push_back(p.structural.columns.at(fp.index)[fp.latent]);
        break;
      case ParamKind::delta_scale: {
        const double s = p.delta_scale ? (*p.delta_scale)[fp.latent] : 0.0;
        if (!(s > 0.0)) throw ParameterError(fp.name + " must be > 0 when it is estimated");
        theta.push_back(std::log(s));
        break;
      }
      case ParamKind::loading:
        theta.push_back(p.measurement.value().indicators.at(fp.index).loading);
        break;
      case ParamKind::threshold: {
        auto it = work.find(fp.index);
        if (it == work.end()) {
          const auto& ind = p.measurement.value().indicators.at(fp.index);
          it = work.emplace(fp.index, to_working(ind.thresholds, ind.name)).first;
        }
        theta.push_back(it->second[fp.slot]);
        break;
      }
      case ParamKind::beta:
        theta.push_back(p.beta.at(fp.index).value);
        break;
      case ParamKind::interaction:
        theta.push_back(p.interactions.at(fp.index).coefficient);
        break;
      case ParamKind::asc:
        theta.push_back(p.asc);
        break;
    }
  }
  return theta;
}

ParameterSet FreeParameterMap::to_params(std::span<const double> theta, const ParameterSet& base) const {
  if (theta.size() != params_.size())
    throw ConfigError("parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                      std::to_string(params_.size()));
  ParameterSet p = base;
  std::map<std::size_t, std::array<double, kThresholdCount>> work;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& fp = params_[i];
    const double v = theta[i];
    switch (fp.kind) {
      case ParamKind::structural:
        p.structural.columns.at(fp.index)[fp.latent] = v;
        break;
      case ParamKind::delta_scale:
        if (!p.delta_scale) p.delta_scale = std::array<double, L>{};
        (*p.delta_scale)[fp.latent] = std::exp(v);
        break;
      case ParamKind::loading:
        p.measurement.value().indicators.at(fp.index).loading = v;
        break;
      case ParamKind::threshold: {
        auto it = work.find(fp.index);
        if (it == work.end()) {
          const auto& ind = p.measurement.value().indicators.at(fp.index);
          it = work.emplace(fp.index, to_working(ind.thresholds, ind.name)).first;
        }
        it->second[fp.slot] = v;
        break;
      }
      case ParamKind::beta:
        p.beta.at(fp.index).value = v;
        break;
      case ParamKind::interaction:
        p.interactions.at(fp.index).coefficient = v;
        break;
      case ParamKind::asc:
        p.asc = v;
        break;
    }
  }
  for (const auto& [k, w] : work) p.measurement->indicators[k].thresholds = from_working(w);
  return p;
}

std::vector<double> FreeParameterMap::natural_values(std::span<const double> theta,
                                                     const ParameterSet& base) const {
  const ParameterSet p = to_params(theta, base);
  std::vector<double> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& fp = params_[i];
    switch (fp.kind) {
      case ParamKind::delta_scale:
        out.push_back((*p.delta_scale)[fp.latent]);
        break;
      case ParamKind::threshold:
        out.push_back(p.measurement->indicators[fp.index].thresholds[fp.slot]);
        break;
      default:
        out.push_back(theta[i]);
    }
  }
  return out;
}

Eigen::MatrixXd FreeParameterMap::natural_jacobian(std::span<const double> theta,
                                                   const ParameterSet& base) const {
  (void)base;
  const auto n = static_cast<Eigen::Index>(params_.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  // θ index of each (indicator, slot) threshold coordinate
  std::map<std::pair<std::size_t, std::size_t>, Eigen::Index> where;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& fp = params_[static_cast<std::size_t>(i)];
    if (fp.kind == ParamKind::threshold) where[{fp.index, fp.slot}] = i;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& fp = params_[static_cast<std::size_t>(i)];
    switch (fp.kind) {
      case ParamKind::delta_scale:
        J(i, i) = std::exp(theta[static_cast<std::size_t>(i)]);
        break;
      case ParamKind::threshold:
        // τ_j = τ1 + Σ_{m=2..j} exp(w_m)
        for (std::size_t m = 0; m <= fp.slot; ++m) {
          auto it = where.find({fp.index, m});
          if (it == where.end()) continue;
          const double w = theta[static_cast<std::size_t>(it->second)];
          J(i, it->second) = m == 0 ? 1.0 : std::exp(w);
        }
        break;
      default:
        J(i, i) = 1.0;
    }
  }
  return J;
}

// ---------------------------------------------------------------------------

ParameterSet starting_values(const ModelSpec& spec) {
  validate(spec);
  ParameterSet p;
  const auto columns = spec.structural_columns();
  p.structural.covariates = columns;
  p.structural.columns.assign(columns.size(), {0.0, 0.0, 0.0});
  p.delta_scale = std::array<double, L>{1.0, 1.0, 1.0};

  std::array<double, L> offset{};
  if (spec.anchor_threshold)
    for (const auto& ind : spec.indicators)
      if (ind.anchor) offset[static_cast<std::size_t>(ind.latent)] = *spec.anchor_threshold - kQuintiles[0];
  for (std::size_t l = 0; l < L; ++l) p.structural.columns[0][l] = offset[l];

  if (!spec.indicators.empty()) {
    MeasurementParams m;
    for (const auto& ind : spec.indicators) {
      IndicatorParams ip;
      ip.name = ind.name;
      ip.latent = ind.latent;
      ip.loading = 1.0;
      const double c = offset[static_cast<std::size_t>(ind.latent)];
      for (std::size_t j = 0; j < kThresholdCount; ++j) ip.thresholds[j] = c + kQuintiles[j];
      if (anchor_location_fixed(spec, ind)) ip.thresholds[0] = *spec.anchor_threshold;
      m.indicators.push_back(std::move(ip));
    }
    p.measurement = std::move(m);
  }
  for (const auto& a : spec.attributes) p.beta.push_back({a, 0.0});
  for (const auto& i : spec.interactions) p.interactions.push_back({i.latent, i.attribute, 0.0});
  p.asc = 0.0;
  return p;
}

ParameterSet conform_to_spec(const ParameterSet& src, const ModelSpec& spec) {
  ParameterSet p = starting_values(spec);
  for (std::size_t j = 0; j < p.structural.size(); ++j) {
    const int idx = src.structural.find(p.structural.covariates[j]);
    if (idx < 0) throw ConfigError("parameters lack structural column '" + p.structural.covariates[j] + "'");
    p.structural.columns[j] = src.structural.columns[static_cast<std::size_t>(idx)];
  }
  p.delta_scale = src.delta_scale.value_or(std::array<double, L>{0.0, 0.0, 0.0});
  if (p.measurement) {
    if (!src.measurement) throw ConfigError("parameters lack a measurement block");
    for (std::size_t k = 0; k < spec.indicators.size(); ++k) {
      const auto& want = spec.indicators[k];
      auto it = std::find_if(src.measurement->indicators.begin(), src.measurement->indicators.end(),
                             [&](const IndicatorParams& ip) { return ip.name == want.name; });
      if (it == src.measurement->indicators.end())
        throw ConfigError("parameters lack indicator '" + want.name + "'");
      if (it->latent != want.latent)
        throw ConfigError("indicator '" + want.name + "' loads on a different latent than the model specifies");
      if (want.anchor && it->loading != 1.0)
        throw ConfigError("anchor indicator '" + want.name + "' must have loading 1");
      if (anchor_location_fixed(spec, want) && it->thresholds[0] != *spec.anchor_threshold)
        throw ConfigError("anchor indicator '" + want.name + "' must have its first threshold at " +
                          std::to_string(*spec.anchor_threshold));
      p.measurement->indicators[k] = *it;
    }
    validate(*p.measurement);
  }
  for (auto& b : p.beta) {
    const auto v = src.find_beta(b.attribute);
    if (!v) throw ConfigError("parameters lack a coefficient for '" + b.attribute + "'");
    b.value = *v;
  }
  for (auto& i : p.interactions) {
    auto it = std::find_if(src.interactions.begin(), src.interactions.end(), [&](const Interaction& s) {
      return s.latent == i.latent && s.attribute == i.attribute;
    });
    if (it == src.interactions.end())
      throw ConfigError("parameters lack the interaction " + latent_name(static_cast<std::size_t>(i.latent)) +
                        "*" + i.attribute);
    i.coefficient = it->coefficient;
  }
  p.asc = src.asc;
  return p;
}

const ParameterEstimate* EstimationResult::find(std::string_view name) const {
  for (const auto& e : estimates)
    if (e.name == name) return &e;
  return nullptr;
}

// ---------------------------------------------------------------------------

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double safe_total(const SimulatedLikelihood& engine, const ParameterSet& p) {
  try {
    return sum(engine.evaluate(p));
  } catch (const ParameterError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

std::vector<double> likelihood_gradient(SimulatedLikelihood& engine, const FreeParameterMap& map,
                                        std::span<const double> theta, const ParameterSet& base,
                                        double rel_step, Eigen::MatrixXd* scores_out) {
  const auto& params = map.parameters();
  std::vector<double> g(params.size(), 0.0);
  const std::size_t N = engine.size();
  if (scores_out) scores_out->setZero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(params.size()));
  std::vector<double> per;
  auto store = [&](std::size_t i, const std::vector<double>& v, double scale) {
    if (!scores_out) return;
    for (std::size_t n = 0; n < N; ++n)
      (*scores_out)(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = v[n] * scale;
  };
  std::vector<double>* per_ptr = scores_out ? &per : nullptr;
  const ParameterSet at = map.to_params(theta, base);
  engine.set_base(at);

  const bool any_latent = std::any_of(params.begin(), params.end(), [](const FreeParameter& p) {
    return p.kind == ParamKind::structural || p.kind == ParamKind::delta_scale;
  });
  LatentScores scores;
  if (any_latent) scores = engine.latent_scores(rel_step);

  // Natural-threshold derivatives per indicator, filled on demand.
  struct ThresholdDerivs {
    std::array<double, kThresholdCount> total{};
    std::array<std::vector<double>, kThresholdCount> per;
  };
  std::map<std::size_t, ThresholdDerivs> dtau;
  auto threshold_derivs = [&](std::size_t k) -> const ThresholdDerivs& {
    auto it = dtau.find(k);
    if (it != dtau.end()) return it->second;
    const auto& ind = at.measurement->indicators[k];
    ThresholdDerivs d;
    for (std::size_t j = 0; j < kThresholdCount; ++j) {
      double h = rel_step * std::max(1.0, std::abs(ind.thresholds[j]));
      // stay inside the neighbouring gaps
      if (j > 0) h = std::min(h, 0.25 * (ind.thresholds[j] - ind.thresholds[j - 1]));
      if (j + 1 < kThresholdCount) h = std::min(h, 0.25 * (ind.thresholds[j + 1] - ind.thresholds[j]));
      auto up = ind.thresholds, down = ind.thresholds;
      up[j] += h;
      down[j] -= h;
      d.total[j] = engine.indicator_difference(k, ind.loading, up, ind.loading, down, per_ptr) / (2.0 * h);
      if (scores_out) {
        d.per[j] = per;
        for (double& v : d.per[j]) v /= 2.0 * h;
      }
    }
    return dtau.emplace(k, d).first->second;
  };

  std::vector<double> point(theta.begin(), theta.end());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& fp = params[i];
    switch (fp.kind) {
      case ParamKind::structural: {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const double v = scores.mean[n][fp.latent] * engine.covariates(n)[fp.index];
          s += v;
          if (scores_out) (*scores_out)(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = v;
        }
        g[i] = s;
        break;
      }
      case ParamKind::delta_scale: {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          s += scores.log_scale[n][fp.latent];
          if (scores_out) (*scores_out)(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = scores.log_scale[n][fp.latent];
        }
        g[i] = s;
        break;
      }
      case ParamKind::loading: {
        const auto& ind = at.measurement->indicators[fp.index];
        const double h = rel_step * std::max(1.0, std::abs(ind.loading));
        g[i] = engine.indicator_difference(fp.index, ind.loading + h, ind.thresholds, ind.loading - h,
                                           ind.thresholds, per_ptr) /
               (2.0 * h);
        store(i, per, 1.0 / (2.0 * h));
        break;
      }
      case ParamKind::threshold: {
        // τ_1 coordinate moves every threshold; a log gap w_m moves τ_m.. by e^{w_m}.
        const auto& d = threshold_derivs(fp.index);
        const double scale = fp.slot == 0 ? 1.0 : std::exp(theta[i]);
        double s = 0.0;
        for (std::size_t j = fp.slot; j < kThresholdCount; ++j) s += d.total[j];
        g[i] = s * scale;
        if (scores_out)
          for (std::size_t j = fp.slot; j < kThresholdCount; ++j)
            for (std::size_t n = 0; n < N; ++n)
              (*scores_out)(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) += d.per[j][n] * scale;
        break;
      }
      default: {
        const double h = rel_step * std::max(1.0, std::abs(theta[i]));
        point[i] = theta[i] + h;
        const ParameterSet plus = map.to_params(point, base);
        point[i] = theta[i] - h;
        const ParameterSet minus = map.to_params(point, base);
        point[i] = theta[i];
        g[i] = engine.choice_difference(plus, minus, per_ptr) / (2.0 * h);
        store(i, per, 1.0 / (2.0 * h));
      }
    }
    if (!std::isfinite(g[i])) throw ParameterError("gradient is not finite for " + fp.name);
  }
  return g;
}

EstimationResult estimate(const ChoiceDataset& data, const ModelSpec& spec, const EstimationSettings& settings,
                          const IterationCallback& on_iteration) {
  validate(settings);
  validate(data);
  if (data.individuals.empty()) throw ConfigError("estimate: dataset is empty");
  const FreeParameterMap map(spec);
  if (!spec.indicators.empty() && static_cast<std::size_t>(data.indicator_count) != spec.indicators.size())
    throw ConfigError("the model lists " + std::to_string(spec.indicators.size()) +
                      " indicators but the dataset carries " + std::to_string(data.indicator_count));

  const ParameterSet base = settings.starting_values == StartingValues::user_supplied
                                ? conform_to_spec(*settings.start, spec)
                                : starting_values(spec);
  SimulatedLikelihood engine(data, base, settings.draw_settings, settings.threads);

  EstimationResult res;
  res.spec = spec;
  res.settings = settings;

  const Objective objective = [&](std::span<const double> theta) {
    return safe_total(engine, map.to_params(theta, base));
  };
  const GradientFn gradient = [&](std::span<const double> theta) {
    return likelihood_gradient(engine, map, theta, base, settings.gradient_step);
  };
  const StepCallback on_step = [&](const OptimizerStep& s, std::span<const double> x) {
    IterationRecord rec{s.iteration, s.value, s.gradient_norm, s.step_length};
    res.trace.push_back(rec);
    if (on_iteration) on_iteration(rec, map.to_params(x, base));
  };

  OptimizerOptions opts;
  opts.max_iterations = settings.max_iterations;
  opts.gradient_tol = settings.convergence_tol;
  // BHHH outer product of per-individual scores as the starting curvature.
  opts.initial_inverse_hessian = [&](std::span<const double> theta) -> Eigen::MatrixXd {
    Eigen::MatrixXd S;
    try {
      likelihood_gradient(engine, map, theta, base, settings.gradient_step, &S);
    } catch (const ParameterError&) {
      return {};
    }
    Eigen::MatrixXd B = S.transpose() * S;
    const Eigen::Index p = B.rows();
    const double floor = 1e-8 * std::max(1.0, B.diagonal().maxCoeff());
    for (Eigen::Index i = 0; i < p; ++i) B(i, i) = B(i, i) * 1.01 + floor;
    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success) return {};
    return llt.solve(Eigen::MatrixXd::Identity(p, p));
  };
  const std::vector<double> theta0 = map.to_vector(base);
  OptimizerResult opt;
  if (map.size() == 0) {
    opt.x = theta0;
    opt.value = objective(theta0);
    opt.converged = true;
    opt.message = "no free parameters";
  } else {
    opt = maximize_bfgs(objective, gradient, theta0, opts, on_step);
  }
  if (!std::isfinite(opt.value)) throw ParameterError("log likelihood is not finite at the starting values");

  res.params = map.to_params(opt.x, base);
  res.final_ll = opt.value;
  res.null_ll = null_log_likelihood(data);
  res.rho_square = rho_square(res.final_ll, res.null_ll);
  res.iterations = opt.iterations;
  res.converged = opt.converged;
  res.message = opt.message;

  const auto n = static_cast<Eigen::Index>(map.size());
  const std::vector<double> natural = map.natural_values(opt.x, base);
  std::vector<double> se(map.size(), kNaN);
  if (settings.compute_std_errors && n > 0) {
    Eigen::MatrixXd H(n, n);
    std::vector<double> point = opt.x;
    bool finite = true;
    try {
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double h = settings.hessian_step * std::max(1.0, std::abs(opt.x[ju]));
        point[ju] = opt.x[ju] + h;
        const auto gp = gradient(point);
        point[ju] = opt.x[ju] - h;
        const auto gm = gradient(point);
        point[ju] = opt.x[ju];
        for (Eigen::Index i = 0; i < n; ++i)
          H(i, j) = (gp[static_cast<std::size_t>(i)] - gm[static_cast<std::size_t>(i)]) / (2.0 * h);
      }
    } catch (const ParameterError&) {
      finite = false;
    }
    if (finite && H.allFinite()) {
      const Eigen::MatrixXd info = -0.5 * (H + H.transpose());
      Eigen::LLT<Eigen::MatrixXd> llt(info);
      if (llt.info() == Eigen::Success) {
        const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(n, n));
        const Eigen::MatrixXd J = map.natural_jacobian(opt.x, base);
        const Eigen::MatrixXd cov_nat = J * cov * J.transpose();
        bool ok = true;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double v = cov_nat(i, i);
          if (!(v > 0.0) || !std::isfinite(v)) ok = false;
          se[static_cast<std::size_t>(i)] = v > 0.0 ? std::sqrt(v) : kNaN;
        }
        res.std_errors_available = ok;
        if (!ok) std::fill(se.begin(), se.end(), kNaN);
      }
    }
    if (!res.std_errors_available) {
      if (!res.message.empty()) res.message += "; ";
      res.message += "Hessian is not negative definite, standard errors unavailable";
    }
  }

  // std_errors mirrors params with NaN everywhere except the free entries.
  ParameterSet s = res.params;
  for (auto& c : s.structural.columns) c.fill(kNaN);
  if (s.delta_scale) s.delta_scale->fill(kNaN);
  if (s.measurement)
    for (auto& ind : s.measurement->indicators) {
      ind.loading = kNaN;
      ind.thresholds.fill(kNaN);
    }
  for (auto& b : s.beta) b.value = kNaN;
  for (auto& i : s.interactions) i.coefficient = kNaN;
  s.asc = kNaN;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto& fp = map.parameters()[i];
    const double v = se[i];
    switch (fp.kind) {
      case ParamKind::structural: s.structural.columns[fp.index][fp.latent] = v; break;
      case ParamKind::delta_scale: (*s.delta_scale)[fp.latent] = v; break;
      case ParamKind::loading: s.measurement->indicators[fp.index].loading = v; break;
      case ParamKind::threshold: s.measurement->indicators[fp.index].thresholds[fp.slot] = v; break;
      case ParamKind::beta: s.beta[fp.index].value = v; break;
      case ParamKind::interaction: s.interactions[fp.index].coefficient = v; break;
      case ParamKind::asc: s.asc = v; break;
    }
    ParameterEstimate e;
    e.name = fp.name;
    e.value = natural[i];
    if (std::isfinite(v) && v > 0.0) {
      e.std_error = v;
      e.t_stat = natural[i] / v;
    }
    res.estimates.push_back(std::move(e));
  }
  res.std_errors = std::move(s);
  return res;
}

}  // namespace iclv
