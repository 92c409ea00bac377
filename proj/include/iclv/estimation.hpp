#pragma once

// Joint maximum simulated likelihood estimation with identification
// constraints, numerical standard errors and fit statistics.

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iclv/draws.hpp"
#include "iclv/model.hpp"
#include "iclv/optimizer.hpp"

namespace iclv {

enum class StartingValues { zeros_with_unit_scales, user_supplied };

std::string_view to_string(StartingValues s);
StartingValues parse_starting_values(std::string_view s);

struct EstimationSettings {
  int max_iterations = 500;
  double gradient_step = 1e-5;     ///< relative central-difference step
  double convergence_tol = 1e-4;   ///< max-norm of the gradient
  double hessian_step = 1e-4;      ///< relative step for the numerical Hessian
  DrawSettings draw_settings;
  StartingValues starting_values = StartingValues::zeros_with_unit_scales;
  std::optional<ParameterSet> start;  ///< required for user_supplied
  int threads = 1;
  bool compute_std_errors = true;
};

/// Throws ConfigError unless tolerances and steps are positive, the iteration
/// limit is non-negative and user-supplied starting values are present.
void validate(const EstimationSettings& s);

enum class ParamKind { structural, delta_scale, loading, threshold, beta, interaction, asc };

struct FreeParameter {
  std::string name;
  ParamKind kind = ParamKind::beta;
  std::size_t latent = 0;
  std::size_t index = 0;  ///< structural column, indicator, β or interaction slot
  std::size_t slot = 0;   ///< threshold position 0..3
};

/// Bijection between a flat vector θ and the free entries of a ParameterSet.
///
/// Working scale: delta scales are log σ; thresholds of an indicator are
/// (τ1, log(τ2−τ1), log(τ3−τ2), log(τ4−τ3)), with the τ1 coordinate absent for
/// anchors whose location is fixed. Everything else is on its natural scale.
///
/// Names: "structural.<latent>.<column>", "delta_scale.<latent>",
/// "loading.<indicator>", "threshold.<indicator>.<1..4>", "beta.<attribute>",
/// "interaction.<latent>.<attribute>", "asc".
class FreeParameterMap {
 public:
  /// Throws IdentificationError for a latent with free structural or scale
  /// entries and fewer than two indicators, or with indicators but no anchor.
  explicit FreeParameterMap(const ModelSpec& spec);

  const std::vector<FreeParameter>& parameters() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::vector<std::string> names() const;
  /// Position of a named parameter or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
  const ModelSpec& spec() const { return spec_; }

  /// Working-scale vector of the free entries of `p`.
  std::vector<double> to_vector(const ParameterSet& p) const;

  /// Copy of `base` with the free entries replaced from θ. Fixed entries keep
  /// the values in `base`.
  ParameterSet to_params(std::span<const double> theta, const ParameterSet& base) const;

  /// Natural-scale value of every free parameter (σ rather than log σ, τ_j
  /// rather than log gaps).
  std::vector<double> natural_values(std::span<const double> theta, const ParameterSet& base) const;

  /// ∂ natural / ∂ θ, used for delta-method standard errors.
  Eigen::MatrixXd natural_jacobian(std::span<const double> theta, const ParameterSet& base) const;

 private:
  ModelSpec spec_;
  std::vector<FreeParameter> params_;
};

/// Convenience wrapper around the FreeParameterMap constructor.
FreeParameterMap free_parameter_map(const ModelSpec& spec);

/// Full parameter set for a spec: zero coefficients, unit loadings and
/// scales, thresholds at the logistic quintiles. When anchors pin the location,
/// structural constants start where each anchor's first threshold equals
/// spec.anchor_threshold.
ParameterSet starting_values(const ModelSpec& spec);

/// `p` rearranged into the layout of starting_values(spec): entries are
/// matched by name, the measurement block is dropped when the spec has no
/// indicators. Throws ConfigError for a missing entry or an anchor whose
/// loading (or pinned first threshold) differs from its fixed value.
ParameterSet conform_to_spec(const ParameterSet& p, const ModelSpec& spec);

struct ParameterEstimate {
  std::string name;
  double value = 0.0;                 ///< natural scale
  std::optional<double> std_error;
  std::optional<double> t_stat;
};

struct IterationRecord {
  int iteration = 0;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  double step_length = 0.0;
};

struct EstimationResult {
  ParameterSet params;
  /// Same shape as params; NaN for fixed entries or when unavailable.
  ParameterSet std_errors;
  /// Free parameters in map order with standard errors and t statistics.
  std::vector<ParameterEstimate> estimates;
  double final_ll = 0.0;
  double null_ll = 0.0;
  double rho_square = 0.0;
  int iterations = 0;
  bool converged = false;
  bool std_errors_available = false;
  std::string message;
  ModelSpec spec;
  EstimationSettings settings;
  std::vector<IterationRecord> trace;

  const ParameterEstimate* find(std::string_view name) const;
};

/// Called after every accepted step with the iterate in both forms.
using IterationCallback = std::function<void(const IterationRecord&, const ParameterSet&)>;

class SimulatedLikelihood;

/// Gradient of the simulated log likelihood with respect to θ by central
/// differences, evaluated with the partial re-evaluation machinery of
/// SimulatedLikelihood. `base` must be in the layout of starting_values and
/// `engine` compiled against it. When `scores` is given it receives the
/// N × P matrix of per-individual contributions.
std::vector<double> likelihood_gradient(SimulatedLikelihood& engine, const FreeParameterMap& map,
                                        std::span<const double> theta, const ParameterSet& base,
                                        double rel_step, Eigen::MatrixXd* scores = nullptr);

/// Maximum simulated likelihood. Non-convergence returns the best iterate with
/// converged = false; a Hessian that is not negative definite leaves
/// std_errors_available = false.
EstimationResult estimate(const ChoiceDataset& data, const ModelSpec& spec,
                          const EstimationSettings& settings, const IterationCallback& on_iteration = {});

}  // namespace iclv
