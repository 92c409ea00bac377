#pragma once

// Joint simulated likelihood of choices and Likert indicators for panel data.
// All tasks of an individual share one latent draw; the average over draws is
// taken in log space.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "iclv/draws.hpp"
#include "iclv/model.hpp"

namespace iclv {

struct LogLikelihood {
  double total = 0.0;
  std::vector<double> per_individual;  ///< in dataset order
};

/// log of the simulated likelihood of one individual:
///   log (1/R) Σ_r Π_t P(chosen_t | att_r) · Π_k P(I_k | att_r).
/// A missing delta_scale, or one that is zero everywhere, makes the latents
/// deterministic and the draws are not used.
double individual_log_likelihood(const ParameterSet& params, const Individual& person,
                                 std::span<const StandardDraw> draws);

/// exp of individual_log_likelihood (may underflow to 0 for long panels).
double individual_likelihood(const ParameterSet& params, const Individual& person,
                             std::span<const StandardDraw> draws);

/// Σ_n log L_n with draws from generate_draws(settings, id). The sum runs in
/// ascending id order after a parallel evaluation, so any thread count gives the
/// same bits. Throws ParameterError naming an individual whose contribution
/// is not finite.
LogLikelihood log_likelihood(const ParameterSet& params, const ChoiceDataset& data,
                             const DrawSettings& settings, int threads = 1);

/// Equal-probability choices over three alternatives and uniform 1/5
/// indicator responses; non-missing responses only.
double null_log_likelihood(const ChoiceDataset& data);

/// 1 − LL/LL₀.
double rho_square(double ll, double null_ll);

/// Per-person derivatives of log L_n with respect to the latent means and the
/// log disturbance scales.
struct LatentScores {
  std::vector<std::array<double, kLatentCount>> mean;
  std::vector<std::array<double, kLatentCount>> log_scale;
};

/// A dataset compiled against a fixed parameter layout, with draws generated
/// once and reused (common random numbers) for every evaluation.
///
/// Besides full evaluations it caches a base point. Derivatives at the base
/// point combine central differences of the per-draw log factors through the
/// log-mean-exp weights w_nr = L_nr / Σ_r L_nr, which agrees with the central
/// difference of the simulated log likelihood to O(h²) while only
/// recomputing the factors a parameter touches.
class SimulatedLikelihood {
 public:
  /// `layout` fixes the structural columns, the attribute keys (β keys plus
  /// interaction attributes) and whether indicators enter. Later parameter
  /// sets must use the same names.
  SimulatedLikelihood(const ChoiceDataset& data, const ParameterSet& layout,
                      const DrawSettings& draws, int threads = 1);
  ~SimulatedLikelihood();
  SimulatedLikelihood(SimulatedLikelihood&&) noexcept;
  SimulatedLikelihood& operator=(SimulatedLikelihood&&) noexcept;

  std::size_t size() const;
  std::int64_t id(std::size_t n) const;
  int draws() const;

  /// Per-individual log likelihood.
  std::vector<double> evaluate(const ParameterSet& params) const;

  /// Evaluates at `params` and caches per-draw quantities for the
  /// derivative routines below. Returns the per-individual log likelihood.
  std::vector<double> set_base(const ParameterSet& params);

  /// ∂ log L_n / ∂ mean_nl and ∂ log L_n / ∂ log σ_l at the base point. Each
  /// latent is shifted by ±rel_step·max(1, |mean_nl|).
  LatentScores latent_scores(double rel_step) const;

  /// Σ_n Σ_r w_nr (C_nr(plus) − C_nr(minus)) where C is the log choice factor.
  /// `plus` and `minus` may differ from the base only in β, interactions and
  /// asc.
  double choice_difference(const ParameterSet& plus, const ParameterSet& minus,
                           std::vector<double>* per_person = nullptr) const;

  /// The same for the log factor of indicator k with the given loadings and
  /// thresholds.
  double indicator_difference(std::size_t k, double loading_plus,
                              std::span<const double, kThresholdCount> tau_plus, double loading_minus,
                              std::span<const double, kThresholdCount> tau_minus,
                              std::vector<double>* per_person = nullptr) const;

  /// Dense structural covariates of individual n (aligned with the layout).
  std::span<const double> covariates(std::size_t n) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iclv
