#include "iclv/optimizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "iclv/error.hpp"

namespace iclv {

namespace {

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

std::vector<double> numerical_gradient(const Objective& f, std::span<const double> x, double rel_step) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    point[i] = x[i] + h;
    const double up = f(point);
    point[i] = x[i] - h;
    const double down = f(point);
    point[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw ParameterError("objective is not finite when perturbing coordinate " + std::to_string(i));
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

OptimizerResult maximize_bfgs(const Objective& f, const GradientFn& grad, std::vector<double> x0,
                              const OptimizerOptions& opts, const StepCallback& on_step) {
  using Eigen::Map;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;

  const auto n = static_cast<Eigen::Index>(x0.size());
  OptimizerResult res;
  res.x = std::move(x0);
  res.value = f(res.x);
  if (!std::isfinite(res.value)) throw ParameterError("objective is not finite at the starting point");
  if (opts.max_iterations <= 0) {
    res.message = "iteration limit is zero";
    return res;
  }
  res.gradient = grad(res.x);

  MatrixXd hinv;
  bool scaled = false;
  auto reset = [&](bool allow_guess) {
    if (allow_guess && opts.initial_inverse_hessian) {
      hinv = opts.initial_inverse_hessian(res.x);
      if (hinv.rows() == n && hinv.cols() == n && hinv.allFinite()) {
        scaled = true;
        return;
      }
    }
    hinv = MatrixXd::Identity(n, n);
    scaled = false;
  };
  reset(true);
  int guesses_left = 3;
  std::vector<double> trial(res.x.size());

  for (int it = 1;; ++it) {
    if (max_abs(res.gradient) < opts.gradient_tol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }
    if (it > opts.max_iterations) {
      res.message = "iteration limit reached";
      break;
    }
    Map<const VectorXd> g(res.gradient.data(), n);
    // Ascent direction for f; hinv approximates (−∇²f)^{-1}.
    VectorXd d = hinv * g;
    double slope = g.dot(d);
    if (!(slope > 0.0)) {
      reset(guesses_left-- > 0);
      d = hinv * g;
      slope = g.dot(d);
      if (!(slope > 0.0)) {
        reset(false);
        d = g;
        slope = g.dot(d);
      }
    }

    bool accepted = false;
    double alpha = 0.0;
    double fnew = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const double dmax = d.cwiseAbs().maxCoeff();
      alpha = dmax > opts.max_step ? opts.max_step / dmax : 1.0;
      for (int b = 0; b < opts.max_backtracks; ++b) {
        for (Eigen::Index i = 0; i < n; ++i) trial[i] = res.x[i] + alpha * d[i];
        fnew = f(trial);
        if (std::isfinite(fnew) && fnew >= res.value + opts.armijo * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted && scaled) {
        // Curvature model went stale: restart from steepest ascent once.
        reset(false);
        d = g;
        slope = g.dot(d);
      } else if (!accepted) {
        break;
      }
    }
    if (!accepted) {
      res.message = "line search failed to improve the objective";
      break;
    }

    std::vector<double> gnew = grad(trial);
    Map<const VectorXd> x_old(res.x.data(), n);
    Map<const VectorXd> x_new(trial.data(), n);
    Map<const VectorXd> g_new(gnew.data(), n);
    const VectorXd s = x_new - x_old;
    // y for the minimisation of −f
    const VectorXd y = g - g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        hinv = MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const VectorXd hy = hinv * y;
      hinv += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) -
              rho * (hy * s.transpose() + s * hy.transpose());
    }
    res.x = trial;
    res.value = fnew;
    res.gradient = std::move(gnew);
    res.iterations = it;
    OptimizerStep step{it, res.value, max_abs(res.gradient), alpha};
    res.trace.push_back(step);
    if (on_step) on_step(step, res.x);
  }
  return res;
}

}  // namespace iclv
