#include "iclv/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iclv/error.hpp"
#include "iclv/parallel.hpp"

namespace iclv {

namespace {

constexpr std::size_t L = kLatentCount;

// Below this magnitude utilities and probabilities are multiplied in linear
// space; anything larger takes the log path.
constexpr double kLinearLimit = 30.0;
constexpr double kRescaleBelow = 1e-250;

struct IndicatorDense {
  std::size_t latent = 0;
  double loading = 0.0;
  std::array<double, kThresholdCount> tau{};
};

// ParameterSet resolved against a fixed layout.
struct Dense {
  std::vector<std::array<double, L>> A;      // per structural column
  std::array<double, L> scale{};
  bool stochastic = false;                   // any scale > 0
  std::vector<IndicatorDense> indicators;    // empty when no measurement block
  std::vector<double> beta;                  // per attribute key
  std::vector<std::array<double, L>> inter;  // per attribute key
  double asc = 0.0;
};

struct Layout {
  std::vector<std::string> columns;
  std::vector<std::string> keys;
  bool measurement = false;
  std::size_t indicator_count = 0;
};

struct Person {
  std::int64_t id = 0;
  std::vector<double> z;
  std::vector<std::uint8_t> responses;
  int tasks = 0;
  std::vector<double> x;  // tasks × 2 × keys
  std::vector<std::uint8_t> chosen;
  std::vector<StandardDraw> draws;
};

Layout make_layout(const ParameterSet& p, std::size_t indicator_count) {
  Layout lay;
  lay.columns = p.structural.covariates;
  for (const auto& c : p.beta) lay.keys.push_back(c.attribute);
  for (const auto& i : p.interactions)
    if (std::find(lay.keys.begin(), lay.keys.end(), i.attribute) == lay.keys.end())
      lay.keys.push_back(i.attribute);
  for (const auto& k : lay.keys)
    if (!is_attribute_name(k)) throw ConfigError("unknown attribute key '" + k + "' in interactions");
  lay.measurement = p.measurement.has_value();
  lay.indicator_count = indicator_count;
  if (lay.measurement && p.measurement->indicators.size() != indicator_count)
    throw ConfigError("measurement block has " + std::to_string(p.measurement->indicators.size()) +
                      " indicators but the dataset carries " + std::to_string(indicator_count));
  return lay;
}

Dense make_dense(const ParameterSet& p, const Layout& lay) {
  Dense d;
  d.A.resize(lay.columns.size());
  if (p.structural.size() != lay.columns.size()) {
    for (const auto& c : lay.columns)
      if (p.structural.find(c) < 0) throw ConfigError("structural block is missing covariate '" + c + "'");
    throw ConfigError("structural block has unexpected extra columns");
  }
  for (std::size_t j = 0; j < lay.columns.size(); ++j) {
    const int idx = p.structural.find(lay.columns[j]);
    if (idx < 0) throw ConfigError("structural block is missing covariate '" + lay.columns[j] + "'");
    d.A[j] = p.structural.columns[static_cast<std::size_t>(idx)];
  }
  if (p.delta_scale) d.scale = *p.delta_scale;
  for (double s : d.scale) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ParameterError("delta_scale must be finite and >= 0");
    d.stochastic = d.stochastic || s > 0.0;
  }
  if (lay.measurement) {
    if (!p.measurement || p.measurement->indicators.size() != lay.indicator_count)
      throw ConfigError("measurement block does not match the compiled layout");
    validate(*p.measurement);
    for (const auto& ind : p.measurement->indicators)
      d.indicators.push_back({static_cast<std::size_t>(ind.latent), ind.loading, ind.thresholds});
  }
  d.beta.assign(lay.keys.size(), 0.0);
  d.inter.assign(lay.keys.size(), {0.0, 0.0, 0.0});
  auto key_index = [&](const std::string& k) -> std::size_t {
    auto it = std::find(lay.keys.begin(), lay.keys.end(), k);
    if (it == lay.keys.end()) throw ConfigError("attribute '" + k + "' is not part of the compiled layout");
    return static_cast<std::size_t>(it - lay.keys.begin());
  };
  for (const auto& c : p.beta) d.beta[key_index(c.attribute)] += c.value;
  for (const auto& i : p.interactions)
    d.inter[key_index(i.attribute)][static_cast<std::size_t>(i.latent)] += i.coefficient;
  d.asc = p.asc;
  return d;
}

Person make_person(const Individual& ind, const Layout& lay) {
  Person p;
  p.id = ind.id;
  p.z.reserve(lay.columns.size());
  for (const auto& c : lay.columns) p.z.push_back(covariate_value(ind.covariates, c));
  if (lay.measurement) {
    if (ind.indicators.size() != lay.indicator_count)
      throw ConfigError("individual " + std::to_string(ind.id) + " has " +
                        std::to_string(ind.indicators.size()) + " indicator responses, expected " +
                        std::to_string(lay.indicator_count));
    for (int r : ind.indicators) p.responses.push_back(static_cast<std::uint8_t>(r));
  }
  p.tasks = static_cast<int>(ind.tasks.size());
  const std::size_t K = lay.keys.size();
  p.x.resize(static_cast<std::size_t>(p.tasks) * 2 * K);
  for (int t = 0; t < p.tasks; ++t) {
    const auto& task = ind.tasks[static_cast<std::size_t>(t)];
    for (std::size_t k = 0; k < K; ++k) {
      p.x[(t * 2 + 0) * K + k] = attribute_value(task.alt1, lay.keys[k]);
      p.x[(t * 2 + 1) * K + k] = attribute_value(task.alt2, lay.keys[k]);
    }
    p.chosen.push_back(static_cast<std::uint8_t>(task.chosen));
  }
  return p;
}

std::array<double, L> mean_of(const Dense& d, const Person& p) {
  std::array<double, L> mu{};
  for (std::size_t j = 0; j < p.z.size(); ++j) {
    const double v = p.z[j];
    if (v == 0.0) continue;
    for (std::size_t l = 0; l < L; ++l) mu[l] += d.A[j][l] * v;
  }
  return mu;
}

// Draw-independent parts of the two EV utilities of every task:
// V = base + Σ_l slope_l · att_l.
struct TaskTerms {
  std::vector<double> base;   // tasks × 2
  std::vector<double> slope;  // tasks × 2 × L
};

void task_terms(const Dense& d, const Person& p, TaskTerms& out) {
  const std::size_t K = d.beta.size();
  const std::size_t n = static_cast<std::size_t>(p.tasks) * 2;
  out.base.assign(n, d.asc);
  out.slope.assign(n * L, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const double* x = p.x.data() + a * K;
    double b = d.asc;
    double s[L] = {0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < K; ++k) {
      if (x[k] == 0.0) continue;
      b += d.beta[k] * x[k];
      for (std::size_t l = 0; l < L; ++l) s[l] += d.inter[k][l] * x[k];
    }
    out.base[a] = b;
    for (std::size_t l = 0; l < L; ++l) out.slope[a * L + l] = s[l];
  }
}

double log_choice_part(const TaskTerms& tt, const Person& p, const double* att) {
  double prod = 1.0;
  double logacc = 0.0;
  for (int t = 0; t < p.tasks; ++t) {
    const std::size_t a1 = static_cast<std::size_t>(t) * 2;
    const std::size_t a2 = a1 + 1;
    const double v1 = tt.base[a1] + tt.slope[a1 * L] * att[0] + tt.slope[a1 * L + 1] * att[1] +
                      tt.slope[a1 * L + 2] * att[2];
    const double v2 = tt.base[a2] + tt.slope[a2 * L] * att[0] + tt.slope[a2 * L + 1] * att[1] +
                      tt.slope[a2 * L + 2] * att[2];
    const auto chosen = p.chosen[static_cast<std::size_t>(t)];
    if (std::abs(v1) < kLinearLimit && std::abs(v2) < kLinearLimit) {
      const double e1 = std::exp(v1);
      const double e2 = std::exp(v2);
      const double num = chosen == 0 ? e1 : (chosen == 1 ? e2 : 1.0);
      prod *= num / (1.0 + e1 + e2);
      if (prod < kRescaleBelow) {
        logacc += std::log(prod);
        prod = 1.0;
      }
    } else {
      const double m = std::max({0.0, v1, v2});
      const double lse = m + std::log(std::exp(-m) + std::exp(v1 - m) + std::exp(v2 - m));
      const double vc = chosen == 0 ? v1 : (chosen == 1 ? v2 : 0.0);
      logacc += vc - lse;
    }
  }
  return logacc + std::log(prod);
}

double log_indicator_part(const Dense& d, const Person& p, const double* att) {
  double prod = 1.0;
  double logacc = 0.0;
  for (std::size_t k = 0; k < d.indicators.size(); ++k) {
    const int level = p.responses[k];
    if (level == kMissingResponse) continue;
    const auto& ind = d.indicators[k];
    const double idx = ind.loading * att[ind.latent];
    const double pr = ordered_logit_prob(ind.tau, idx, level);
    if (pr > 1e-200) {
      prod *= pr;
      if (prod < kRescaleBelow) {
        logacc += std::log(prod);
        prod = 1.0;
      }
    } else {
      logacc += ordered_logit_log_prob(ind.tau, idx, level);
    }
  }
  return logacc + std::log(prod);
}

// log (1/R) Σ_r exp(v_r)
double log_mean_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

struct Scratch {
  TaskTerms tt;
  std::vector<double> ell;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

// Per-individual log likelihood with an explicit latent mean. When `total`
// and `choice` are given they receive the per-draw log factors.
double person_loglik(const Dense& d, const Person& p, const std::array<double, L>& mu,
                     double* total = nullptr, double* choice = nullptr) {
  auto& s = scratch();
  task_terms(d, p, s.tt);
  const std::size_t R = d.stochastic ? p.draws.size() : 1;
  s.ell.resize(R);
  for (std::size_t r = 0; r < R; ++r) {
    double att[L];
    if (d.stochastic)
      for (std::size_t l = 0; l < L; ++l) att[l] = mu[l] + d.scale[l] * p.draws[r][l];
    else
      for (std::size_t l = 0; l < L; ++l) att[l] = mu[l];
    const double c = log_choice_part(s.tt, p, att);
    const double m = d.indicators.empty() ? 0.0 : log_indicator_part(d, p, att);
    s.ell[r] = c + m;
    if (total) total[r] = c + m;
    if (choice) choice[r] = c;
  }
  return R == 1 ? s.ell[0] : log_mean_exp(s.ell);
}

void check_finite(const std::vector<double>& ll, const std::vector<Person>& persons) {
  for (std::size_t n = 0; n < ll.size(); ++n)
    if (!std::isfinite(ll[n]))
      throw ParameterError("log likelihood of individual " + std::to_string(persons[n].id) +
                           " is not finite");
}

}  // namespace

// ---------------------------------------------------------------------------

namespace {

// Exponents below this magnitude at the base point allow the cached
// exponentials to be rescaled instead of recomputed.
constexpr double kCacheLimit = 200.0;

// exp(v), with a Taylor polynomial for the tiny arguments produced by
// finite-difference steps (truncation error below 1e-17 relative).
double exp_step(double v) {
  if (std::abs(v) < 1e-3) return 1.0 + v * (1.0 + v * 0.5 * (1.0 + v / 3.0 * (1.0 + v * 0.25)));
  return std::exp(v);
}

// For a response level L and thresholds τ', the multipliers turning the cached
// q = exp(x − τ_ref) into exp(x − τ'_{L−1}) and exp(x − τ'_L), and the gap
// factor 1 − exp(τ'_{L−1} − τ'_L). τ_ref is the base τ_{L−1} (τ_1 for L = 1).
struct LevelConst {
  double lo = 0.0;
  double hi = 0.0;
  double gap = 0.0;
};

using LevelTable = std::array<LevelConst, kLikertLevels + 1>;

double tau_ref(const std::array<double, kThresholdCount>& base_tau, int level) {
  return level >= 2 ? base_tau[static_cast<std::size_t>(level - 2)] : base_tau[0];
}

LevelTable level_table(const std::array<double, kThresholdCount>& base_tau,
                       std::span<const double, kThresholdCount> tau) {
  LevelTable t{};
  for (int level = 1; level <= kLikertLevels; ++level) {
    const double ref = tau_ref(base_tau, level);
    auto& c = t[static_cast<std::size_t>(level)];
    if (level >= 2) c.lo = std::exp(ref - tau[static_cast<std::size_t>(level - 2)]);
    if (level <= kThresholdCount) c.hi = std::exp(ref - tau[static_cast<std::size_t>(level - 1)]);
    if (level >= 2 && level <= kThresholdCount)
      c.gap = -std::expm1(tau[static_cast<std::size_t>(level - 2)] - tau[static_cast<std::size_t>(level - 1)]);
  }
  return t;
}

// P(level) from E = q·s (s the factor for a shifted index).
double level_prob(int level, double E, const LevelConst& c) {
  if (level == 1) return 1.0 / (1.0 + E * c.hi);
  const double elo = E * c.lo;
  if (level == kLikertLevels) return elo / (1.0 + elo);
  return elo * c.gap / ((1.0 + elo) * (1.0 + E * c.hi));
}

struct BaseCache {
  std::array<double, L> mu{};
  std::vector<double> att;  // R × L
  std::vector<double> w;    // R, log-mean-exp weights
  std::vector<double> e;    // R × tasks × 2, exp of the EV utilities
  std::vector<double> q;    // R × indicators, exp(index − τ_ref)
  bool fast_choice = false;
  bool fast_indicators = false;
  TaskTerms tt;
};

// log P(level | a, att_a) − log P(level | b, att_b) for one indicator.
double indicator_log_diff(const IndicatorDense& a, double att_a, const IndicatorDense& b, double att_b,
                          int level) {
  const double pa = ordered_logit_prob(a.tau, a.loading * att_a, level);
  const double pb = ordered_logit_prob(b.tau, b.loading * att_b, level);
  if (pa > 1e-200 && pb > 1e-200) return std::log(pa / pb);
  return ordered_logit_log_prob(a.tau, a.loading * att_a, level) -
         ordered_logit_log_prob(b.tau, b.loading * att_b, level);
}

// Σ_t log P_t(plus) − log P_t(minus) given the factors multiplying the cached
// base exponentials of each alternative.
double cached_choice_diff(const double* e, const std::uint8_t* chosen, int tasks, const double* fp,
                          const double* fm) {
  double ratio = 1.0;
  for (int t = 0; t < tasks; ++t) {
    const double e1 = e[2 * t], e2 = e[2 * t + 1];
    const double p1 = e1 * fp[2 * t], p2 = e2 * fp[2 * t + 1];
    const double m1 = e1 * fm[2 * t], m2 = e2 * fm[2 * t + 1];
    const auto c = chosen[t];
    const double np = c == 0 ? p1 : (c == 1 ? p2 : 1.0);
    const double nm = c == 0 ? m1 : (c == 1 ? m2 : 1.0);
    ratio *= (np * (1.0 + m1 + m2)) / (nm * (1.0 + p1 + p2));
  }
  return std::log(ratio);
}

double ordered_sum(const std::vector<double>& per_person) {
  double s = 0.0;
  for (double v : per_person) s += v;
  return s;
}

}  // namespace

struct SimulatedLikelihood::Impl {
  Layout layout;
  std::vector<Person> persons;
  int threads = 1;
  int n_draws = 1;

  bool has_base = false;
  Dense base;
  std::vector<LevelTable> base_levels;  // per indicator
  std::vector<BaseCache> cache;

  std::size_t draws_used() const { return base.stochastic ? static_cast<std::size_t>(n_draws) : 1; }

  void require_base(const char* what) const {
    if (!has_base) throw ConfigError(std::string(what) + " called before set_base");
  }
};

SimulatedLikelihood::SimulatedLikelihood(const ChoiceDataset& data, const ParameterSet& layout,
                                         const DrawSettings& draws, int threads)
    : impl_(std::make_unique<Impl>()) {
  validate(draws);
  impl_->layout = make_layout(layout, static_cast<std::size_t>(data.indicator_count));
  impl_->threads = std::max(1, threads);
  impl_->n_draws = draws.n_draws;
  impl_->persons.resize(data.individuals.size());
  parallel_for(data.individuals.size(), impl_->threads, [&](std::size_t n) {
    auto p = make_person(data.individuals[n], impl_->layout);
    p.draws = generate_draws(draws, p.id);
    impl_->persons[n] = std::move(p);
  });
}

SimulatedLikelihood::~SimulatedLikelihood() = default;
SimulatedLikelihood::SimulatedLikelihood(SimulatedLikelihood&&) noexcept = default;
SimulatedLikelihood& SimulatedLikelihood::operator=(SimulatedLikelihood&&) noexcept = default;

std::size_t SimulatedLikelihood::size() const { return impl_->persons.size(); }
std::int64_t SimulatedLikelihood::id(std::size_t n) const { return impl_->persons.at(n).id; }
int SimulatedLikelihood::draws() const { return impl_->n_draws; }

std::span<const double> SimulatedLikelihood::covariates(std::size_t n) const {
  return impl_->persons.at(n).z;
}

std::vector<double> SimulatedLikelihood::evaluate(const ParameterSet& params) const {
  const Dense d = make_dense(params, impl_->layout);
  const auto& persons = impl_->persons;
  std::vector<double> out(persons.size());
  parallel_for(persons.size(), impl_->threads,
               [&](std::size_t n) { out[n] = person_loglik(d, persons[n], mean_of(d, persons[n])); });
  check_finite(out, persons);
  return out;
}

std::vector<double> SimulatedLikelihood::set_base(const ParameterSet& params) {
  auto& im = *impl_;
  im.has_base = false;
  im.base = make_dense(params, im.layout);
  im.base_levels.clear();
  for (const auto& ind : im.base.indicators) im.base_levels.push_back(level_table(ind.tau, ind.tau));
  const std::size_t N = im.persons.size();
  const std::size_t R = im.draws_used();
  const std::size_t K = im.base.indicators.size();
  im.cache.resize(N);
  std::vector<double> out(N);
  parallel_for(N, im.threads, [&](std::size_t n) {
    const auto& p = im.persons[n];
    auto& c = im.cache[n];
    c.mu = mean_of(im.base, p);
    task_terms(im.base, p, c.tt);
    const std::size_t T = static_cast<std::size_t>(p.tasks);
    c.att.resize(R * L);
    c.w.resize(R);
    c.e.resize(R * T * 2);
    c.q.resize(R * K);
    c.fast_choice = true;
    c.fast_indicators = true;
    for (std::size_t r = 0; r < R; ++r) {
      double* att = &c.att[r * L];
      for (std::size_t l = 0; l < L; ++l)
        att[l] = c.mu[l] + (im.base.stochastic ? im.base.scale[l] * p.draws[r][l] : 0.0);
      double* e = &c.e[r * T * 2];
      for (std::size_t a = 0; a < 2 * T; ++a) {
        const double v = c.tt.base[a] + c.tt.slope[a * L] * att[0] + c.tt.slope[a * L + 1] * att[1] +
                         c.tt.slope[a * L + 2] * att[2];
        if (std::abs(v) >= kCacheLimit) c.fast_choice = false;
        e[a] = std::exp(std::clamp(v, -kCacheLimit, kCacheLimit));
      }
      double ll = 0.0;
      if (c.fast_choice) {
        double prod = 1.0;
        for (std::size_t t = 0; t < T; ++t) {
          const double e1 = e[2 * t], e2 = e[2 * t + 1];
          const auto ch = p.chosen[t];
          prod *= (ch == 0 ? e1 : (ch == 1 ? e2 : 1.0)) / (1.0 + e1 + e2);
          if (prod < kRescaleBelow) {
            ll += std::log(prod);
            prod = 1.0;
          }
        }
        ll += std::log(prod);
      } else {
        ll += log_choice_part(c.tt, p, att);
      }
      if (K > 0) {
        double prod = 1.0;
        for (std::size_t k = 0; k < K; ++k) {
          const int level = p.responses[k];
          if (level == kMissingResponse) continue;
          const auto& ind = im.base.indicators[k];
          const double d = ind.loading * att[ind.latent] - tau_ref(ind.tau, level);
          if (std::abs(d) >= kCacheLimit) c.fast_indicators = false;
          const double qv = std::exp(std::clamp(d, -kCacheLimit, kCacheLimit));
          c.q[r * K + k] = qv;
          const double pr = level_prob(level, qv, im.base_levels[k][static_cast<std::size_t>(level)]);
          if (std::abs(d) < kCacheLimit && pr > 1e-200) {
            prod *= pr;
            if (prod < kRescaleBelow) {
              ll += std::log(prod);
              prod = 1.0;
            }
          } else {
            ll += ordered_logit_log_prob(ind.tau, ind.loading * att[ind.latent], level);
          }
        }
        ll += std::log(prod);
      }
      c.w[r] = ll;
    }
    out[n] = R == 1 ? c.w[0] : log_mean_exp(c.w);
    for (auto& x : c.w) x = std::exp(x - out[n]) / static_cast<double>(R);
    if (!c.fast_choice) c.e.clear();
    if (!c.fast_indicators) c.q.clear();
  });
  check_finite(out, im.persons);
  im.has_base = true;
  return out;
}

LatentScores SimulatedLikelihood::latent_scores(double rel_step) const {
  const auto& im = *impl_;
  im.require_base("latent_scores");
  const std::size_t N = im.persons.size();
  const std::size_t R = im.draws_used();
  const std::size_t K = im.base.indicators.size();
  LatentScores out;
  out.mean.assign(N, {0.0, 0.0, 0.0});
  out.log_scale.assign(N, {0.0, 0.0, 0.0});
  parallel_for(N, im.threads, [&](std::size_t n) {
    const auto& p = im.persons[n];
    const auto& c = im.cache[n];
    const std::size_t T = static_cast<std::size_t>(p.tasks);
    std::vector<double> fp(2 * T), fm(2 * T);
    std::vector<std::size_t> on_latent;
    std::vector<double> sp, sm;
    for (std::size_t l = 0; l < L; ++l) {
      const double h = rel_step * std::max(1.0, std::abs(c.mu[l]));
      bool enters = false;
      for (std::size_t a = 0; a < 2 * T; ++a) {
        const double s = c.tt.slope[a * L + l];
        enters = enters || s != 0.0;
        fp[a] = exp_step(s * h);
        fm[a] = exp_step(-s * h);
      }
      on_latent.clear();
      sp.clear();
      sm.clear();
      for (std::size_t k = 0; k < K; ++k) {
        const auto& ind = im.base.indicators[k];
        if (ind.latent != l || p.responses[k] == kMissingResponse) continue;
        on_latent.push_back(k);
        sp.push_back(exp_step(ind.loading * h));
        sm.push_back(exp_step(-ind.loading * h));
        enters = enters || ind.loading != 0.0;
      }
      if (!enters) continue;
      double dmean = 0.0, dscale = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        const double* att = &c.att[r * L];
        double diff = 0.0;
        if (c.fast_choice) {
          diff = cached_choice_diff(&c.e[r * T * 2], p.chosen.data(), p.tasks, fp.data(), fm.data());
        } else {
          double up[L] = {att[0], att[1], att[2]};
          double down[L] = {att[0], att[1], att[2]};
          up[l] += h;
          down[l] -= h;
          diff = log_choice_part(c.tt, p, up) - log_choice_part(c.tt, p, down);
        }
        if (c.fast_indicators) {
          double ratio = 1.0;
          for (std::size_t i = 0; i < on_latent.size(); ++i) {
            const std::size_t k = on_latent[i];
            const int level = p.responses[k];
            const auto& lc = im.base_levels[k][static_cast<std::size_t>(level)];
            const double qv = c.q[r * K + k];
            ratio *= level_prob(level, qv * sp[i], lc) / level_prob(level, qv * sm[i], lc);
          }
          diff += std::log(ratio);
        } else {
          for (std::size_t k : on_latent) {
            const auto& ind = im.base.indicators[k];
            diff += indicator_log_diff(ind, att[l] + h, ind, att[l] - h, p.responses[k]);
          }
        }
        const double d = c.w[r] * diff / (2.0 * h);
        dmean += d;
        if (im.base.stochastic) dscale += d * im.base.scale[l] * p.draws[r][l];
      }
      out.mean[n][l] = dmean;
      out.log_scale[n][l] = dscale;
    }
  });
  return out;
}

double SimulatedLikelihood::choice_difference(const ParameterSet& plus, const ParameterSet& minus,
                                              std::vector<double>* per_person) const {
  const auto& im = *impl_;
  im.require_base("choice_difference");
  const Dense dp = make_dense(plus, im.layout);
  const Dense dm = make_dense(minus, im.layout);
  const std::size_t N = im.persons.size();
  const std::size_t R = im.draws_used();
  std::vector<double> per(N, 0.0);
  parallel_for(N, im.threads, [&](std::size_t n) {
    const auto& p = im.persons[n];
    const auto& c = im.cache[n];
    const std::size_t T = static_cast<std::size_t>(p.tasks);
    TaskTerms tp, tm;
    task_terms(dp, p, tp);
    task_terms(dm, p, tm);
    // Per alternative: utility change = db + ds·att.
    std::vector<double> dbp(2 * T), dbm(2 * T), dsp(2 * T * L), dsm(2 * T * L);
    bool slopes_equal = true;
    for (std::size_t a = 0; a < 2 * T; ++a) {
      dbp[a] = tp.base[a] - c.tt.base[a];
      dbm[a] = tm.base[a] - c.tt.base[a];
      for (std::size_t l = 0; l < L; ++l) {
        dsp[a * L + l] = tp.slope[a * L + l] - c.tt.slope[a * L + l];
        dsm[a * L + l] = tm.slope[a * L + l] - c.tt.slope[a * L + l];
        slopes_equal = slopes_equal && dsp[a * L + l] == 0.0 && dsm[a * L + l] == 0.0;
      }
    }
    std::vector<double> fp(2 * T), fm(2 * T);
    if (slopes_equal)
      for (std::size_t a = 0; a < 2 * T; ++a) {
        fp[a] = exp_step(dbp[a]);
        fm[a] = exp_step(dbm[a]);
      }
    double acc = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      const double* att = &c.att[r * L];
      double diff;
      if (!c.fast_choice) {
        diff = log_choice_part(tp, p, att) - log_choice_part(tm, p, att);
      } else {
        if (!slopes_equal)
          for (std::size_t a = 0; a < 2 * T; ++a) {
            const double* s1 = &dsp[a * L];
            const double* s2 = &dsm[a * L];
            fp[a] = exp_step(dbp[a] + s1[0] * att[0] + s1[1] * att[1] + s1[2] * att[2]);
            fm[a] = exp_step(dbm[a] + s2[0] * att[0] + s2[1] * att[1] + s2[2] * att[2]);
          }
        diff = cached_choice_diff(&c.e[r * T * 2], p.chosen.data(), p.tasks, fp.data(), fm.data());
      }
      acc += c.w[r] * diff;
    }
    per[n] = acc;
  });
  const double total = ordered_sum(per);
  if (per_person) *per_person = per;
  if (!std::isfinite(total)) throw ParameterError("choice log factor is not finite at a perturbed point");
  return total;
}

double SimulatedLikelihood::indicator_difference(std::size_t k, double loading_plus,
                                                 std::span<const double, kThresholdCount> tau_plus,
                                                 double loading_minus,
                                                 std::span<const double, kThresholdCount> tau_minus,
                                                 std::vector<double>* per_person) const {
  const auto& im = *impl_;
  im.require_base("indicator_difference");
  if (k >= im.base.indicators.size()) throw ConfigError("indicator index out of range");
  for (std::size_t j = 1; j < kThresholdCount; ++j)
    if (!(tau_plus[j] > tau_plus[j - 1]) || !(tau_minus[j] > tau_minus[j - 1]))
      throw ParameterError("thresholds must be strictly increasing");
  const IndicatorDense& base = im.base.indicators[k];
  IndicatorDense a = base, b = base;
  a.loading = loading_plus;
  b.loading = loading_minus;
  std::copy(tau_plus.begin(), tau_plus.end(), a.tau.begin());
  std::copy(tau_minus.begin(), tau_minus.end(), b.tau.begin());
  const LevelTable ta = level_table(base.tau, tau_plus);
  const LevelTable tb = level_table(base.tau, tau_minus);
  // Levels whose probability is the same under both parameter sets.
  std::array<bool, kLikertLevels + 1> same{};
  for (int level = 1; level <= kLikertLevels; ++level) {
    const auto j = static_cast<std::size_t>(level);
    const bool lower = level == 1 || a.tau[j - 2] == b.tau[j - 2];
    const bool upper = level == kLikertLevels || a.tau[j - 1] == b.tau[j - 1];
    same[j] = a.loading == b.loading && lower && upper;
  }
  const double dla = loading_plus - base.loading;
  const double dlb = loading_minus - base.loading;
  const std::size_t N = im.persons.size();
  const std::size_t R = im.draws_used();
  const std::size_t K = im.base.indicators.size();
  const std::size_t l = base.latent;
  std::vector<double> per(N, 0.0);
  parallel_for(N, im.threads, [&](std::size_t n) {
    const auto& p = im.persons[n];
    const int level = p.responses[k];
    if (level == kMissingResponse || same[static_cast<std::size_t>(level)]) return;
    const auto& c = im.cache[n];
    const auto& la = ta[static_cast<std::size_t>(level)];
    const auto& lb = tb[static_cast<std::size_t>(level)];
    double acc = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      const double x = c.att[r * L + l];
      double d;
      if (c.fast_indicators) {
        const double qv = c.q[r * K + k];
        const double sa = dla == 0.0 ? 1.0 : exp_step(dla * x);
        const double sb = dlb == 0.0 ? 1.0 : exp_step(dlb * x);
        d = std::log(level_prob(level, qv * sa, la) / level_prob(level, qv * sb, lb));
      } else {
        d = indicator_log_diff(a, x, b, x, level);
      }
      acc += c.w[r] * d;
    }
    per[n] = acc;
  });
  const double total = ordered_sum(per);
  if (per_person) *per_person = per;
  if (!std::isfinite(total)) throw ParameterError("indicator log factor is not finite at a perturbed point");
  return total;
}

// ---------------------------------------------------------------------------

double individual_log_likelihood(const ParameterSet& params, const Individual& person,
                                 std::span<const StandardDraw> draws) {
  if (person.tasks.empty()) throw ConfigError("individual has no choice tasks");
  if (draws.empty()) throw ConfigError("at least one draw is required");
  const Layout lay = make_layout(params, params.measurement ? params.measurement->indicators.size() : 0);
  const Dense d = make_dense(params, lay);
  Person p = make_person(person, lay);
  p.draws.assign(draws.begin(), draws.end());
  const double ll = person_loglik(d, p, mean_of(d, p));
  if (!std::isfinite(ll))
    throw ParameterError("log likelihood of individual " + std::to_string(person.id) + " is not finite");
  return ll;
}

double individual_likelihood(const ParameterSet& params, const Individual& person,
                             std::span<const StandardDraw> draws) {
  return std::exp(individual_log_likelihood(params, person, draws));
}

LogLikelihood log_likelihood(const ParameterSet& params, const ChoiceDataset& data,
                             const DrawSettings& settings, int threads) {
  if (data.individuals.empty()) throw ConfigError("log_likelihood: dataset is empty");
  SimulatedLikelihood sim(data, params, settings, threads);
  LogLikelihood out;
  out.per_individual = sim.evaluate(params);
  std::vector<std::size_t> order(out.per_individual.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data.individuals[a].id < data.individuals[b].id; });
  for (std::size_t i : order) out.total += out.per_individual[i];
  return out;
}

double null_log_likelihood(const ChoiceDataset& data) {
  const double lc = std::log(1.0 / 3.0);
  const double li = std::log(1.0 / kLikertLevels);
  double ll = 0.0;
  for (const auto& person : data.individuals) {
    ll += lc * static_cast<double>(person.tasks.size());
    for (int r : person.indicators)
      if (r != kMissingResponse) ll += li;
  }
  return ll;
}

double rho_square(double ll, double null_ll) {
  if (null_ll == 0.0) throw DomainError("rho_square: null log likelihood is zero");
  return 1.0 - ll / null_ll;
}

}  // namespace iclv
