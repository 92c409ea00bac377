#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace iclv {

using Objective = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Central-difference gradient with step rel_step·max(1, |x_i|). Throws
/// ParameterError naming the coordinate when a perturbed value is not finite.
std::vector<double> numerical_gradient(const Objective& f, std::span<const double> x,
                                       double rel_step = 1e-5);

struct OptimizerOptions {
  int max_iterations = 500;
  double gradient_tol = 1e-4;  ///< max-norm of the gradient
  double max_step = 2.0;       ///< cap on max |Δx_i| of the first trial step
  double armijo = 1e-4;
  int max_backtracks = 40;
  /// Inverse-curvature guess at a point, used at the start and on restarts.
  /// Identity (with Shanno scaling at the first update) when empty.
  std::function<Eigen::MatrixXd(std::span<const double>)> initial_inverse_hessian;
};

struct OptimizerStep {
  int iteration = 0;
  double value = 0.0;          ///< objective after the step
  double gradient_norm = 0.0;  ///< max-norm after the step
  double step_length = 0.0;
};

struct OptimizerResult {
  std::vector<double> x;
  double value = 0.0;
  std::vector<double> gradient;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<OptimizerStep> trace;
};

using StepCallback = std::function<void(const OptimizerStep&, std::span<const double> x)>;

/// Quasi-Newton ascent: BFGS inverse-Hessian updates with Armijo backtracking.
/// Every accepted step increases f. Converged when max |∇f| < gradient_tol.
OptimizerResult maximize_bfgs(const Objective& f, const GradientFn& grad, std::vector<double> x0,
                              const OptimizerOptions& opts, const StepCallback& on_step = {});

}  // namespace iclv
