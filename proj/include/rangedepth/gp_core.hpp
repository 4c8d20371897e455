#pragma once

// Exact GP regression over angular coordinates with a squared-exponential
// (RBF) kernel and zero prior mean.
//
//   k(a, a')  = sf2 * exp(-|a - a'|^2 / (2 l^2))
//   mean(a*)  = k*^T (K + sn2 I)^-1 z
//   var(a*)   = k(a*, a*) - k*^T (K + sn2 I)^-1 k*
//   log p(z)  = -1/2 z^T (K + sn2 I)^-1 z - 1/2 log|K + sn2 I| - n/2 log(2 pi)
//
// Every solve goes through one Cholesky factor of K + (sn2 + eps * sf2) I,
// where the jitter eps starts at 1e-10 and grows x10 up to 1e-6.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include "rangedepth/camera.hpp"
#include "rangedepth/errors.hpp"

namespace rangedepth {

struct KernelParams {
  double signal_variance = 1.0;  // sf2, m^2
  double length_scale = 0.1;     // l, rad
  double noise_variance = 0.01;  // sn2, m^2

  void validate() const {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
      throw InputError("kernel: signal variance must be positive");
    if (!(length_scale > 0.0) || !std::isfinite(length_scale))
      throw InputError("kernel: length scale must be positive");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
      throw InputError("kernel: noise variance must be non-negative");
  }

  bool operator==(const KernelParams&) const = default;
};

inline nlohmann::json to_json(const KernelParams& p) {
  return {{"sigma_f2", p.signal_variance}, {"ell", p.length_scale}, {"sigma_n2", p.noise_variance}};
}

inline KernelParams kernel_params_from_json(const nlohmann::json& j, KernelParams base = {}) {
  try {
    if (j.contains("sigma_f2")) base.signal_variance = j.at("sigma_f2").get<double>();
    if (j.contains("ell")) base.length_scale = j.at("ell").get<double>();
    if (j.contains("sigma_n2")) base.noise_variance = j.at("sigma_n2").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("kernel: ") + e.what());
  }
  base.validate();
  return base;
}

struct GPPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

inline double rbf_kernel(const AngularCoord& a, const AngularCoord& b, const KernelParams& p) {
  return p.signal_variance * std::exp(-angular_distance_sq(a, b) / (2.0 * p.length_scale * p.length_scale));
}

inline Eigen::MatrixXd gram_matrix(std::span<const AngularCoord> inputs, const KernelParams& p) {
  if (inputs.empty()) throw InputError("gram_matrix: no inputs");
  const auto n = static_cast<Eigen::Index>(inputs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = p.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = rbf_kernel(inputs[static_cast<std::size_t>(i)], inputs[static_cast<std::size_t>(j)], p);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-6;

/// A GP conditioned on a fixed training set. Holds the Cholesky factor and
/// the weight vector (K + sn2 I)^-1 z, so predictions cost O(n^2) each.
class GaussianProcess {
 public:
  GaussianProcess(std::span<const AngularCoord> inputs, std::span<const double> targets, const KernelParams& params)
      : inputs_(inputs.begin(), inputs.end()), params_(params) {
    params_.validate();
    if (inputs.empty()) throw InputError("gaussian process: no training data");
    if (inputs.size() != targets.size()) throw InputError("gaussian process: input/target size mismatch");
    targets_ = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));

    Eigen::MatrixXd k = gram_matrix(inputs_, params_);
    k.diagonal().array() += params_.noise_variance;
    for (double eps = kJitterStart; eps <= kJitterMax * 1.0000001; eps *= 10.0) {
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += eps * params_.signal_variance;
      llt_.compute(kj);
      if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().allFinite() &&
          (llt_.matrixLLT().diagonal().array() > 0.0).all()) {
        jitter_ = eps;
        alpha_ = llt_.solve(targets_);
        return;
      }
    }
    throw NumericalError("gaussian process: Gram matrix is not positive definite even with jitter " +
                         std::to_string(kJitterMax) + " * sigma_f2; inputs are too ill-conditioned");
  }

  [[nodiscard]] GPPosterior predict(const AngularCoord& query) const {
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    Eigen::VectorXd kq(n);
    for (Eigen::Index i = 0; i < n; ++i) kq(i) = rbf_kernel(inputs_[static_cast<std::size_t>(i)], query, params_);
    GPPosterior out;
    out.mean = kq.dot(alpha_);
    llt_.matrixL().solveInPlace(kq);
    const double sf2 = params_.signal_variance;
    out.variance = std::clamp(sf2 - kq.squaredNorm(), 0.0, sf2);
    return out;
  }

  [[nodiscard]] double log_marginal_likelihood() const {
    const double data_fit = targets_.dot(alpha_);
    const double half_log_det = llt_.matrixLLT().diagonal().array().log().sum();
    const double n = static_cast<double>(inputs_.size());
    return -0.5 * data_fit - half_log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
  }

  /// Jitter fraction of sf2 that made the factorisation succeed.
  [[nodiscard]] double jitter() const { return jitter_; }
  [[nodiscard]] const KernelParams& params() const { return params_; }
  [[nodiscard]] std::size_t size() const { return inputs_.size(); }

 private:
  std::vector<AngularCoord> inputs_;
  Eigen::VectorXd targets_;
  KernelParams params_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

inline std::vector<GPPosterior> gp_posterior(std::span<const AngularCoord> inputs, std::span<const double> targets,
                                             std::span<const AngularCoord> queries, const KernelParams& params) {
  const GaussianProcess gp(inputs, targets, params);
  std::vector<GPPosterior> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(gp.predict(q));
  return out;
}

inline double log_marginal_likelihood(std::span<const AngularCoord> inputs, std::span<const double> targets,
                                      const KernelParams& params) {
  return GaussianProcess(inputs, targets, params).log_marginal_likelihood();
}

// ---------------------------------------------------------------------------
// Length-scale selection

struct LengthScaleSearch {
  double ell_min = 0.005;
  double ell_max = 1.0;
  int n_grid = 25;
  int refine_iters = 40;

  void validate() const {
    if (!(ell_min > 0.0)) throw InputError("length-scale search: ell_min must be positive");
    if (!(ell_max > ell_min)) throw InputError("length-scale search: ell_max must exceed ell_min");
    if (n_grid < 3) throw InputError("length-scale search: n_grid must be at least 3");
    if (refine_iters < 0) throw InputError("length-scale search: refine_iters must be non-negative");
  }
};

struct LengthScaleFit {
  std::vector<double> grid;
  std::vector<double> log_ml;  // -inf where the factorisation failed
  double length_scale = 0.0;
  double log_ml_at_fit = -std::numeric_limits<double>::infinity();
  bool degenerate = false;
  bool refined = false;
};

inline nlohmann::json to_json(const LengthScaleFit& fit) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json lml = nlohmann::json::array();
  for (double v : fit.log_ml) lml.push_back(finite_or_null(v));
  return {{"grid", fit.grid},
          {"log_ml", lml},
          {"ell", fit.length_scale},
          {"log_ml_at_fit", finite_or_null(fit.log_ml_at_fit)},
          {"degenerate", fit.degenerate},
          {"refined", fit.refined}};
}

/// Maximises the log marginal likelihood over l with everything else in
/// `params` held fixed: a log-spaced grid over [ell_min, ell_max], then
/// golden-section search on log l between the argmax's grid neighbours.
///
/// Degenerate inputs, flagged in the result:
///   * fewer than two points or all points at one angle: the evidence does
///     not depend on l, so the grid midpoint is returned;
///   * all targets identical with sn2 == 0: the grid argmax is returned
///     unrefined.
inline LengthScaleFit fit_length_scale(std::span<const AngularCoord> inputs, std::span<const double> targets,
                                       KernelParams params, const LengthScaleSearch& search) {
  search.validate();
  if (inputs.empty() || inputs.size() != targets.size())
    throw InputError("fit_length_scale: need matching, non-empty inputs and targets");

  auto evaluate = [&](double ell) {
    params.length_scale = ell;
    try {
      return log_marginal_likelihood(inputs, targets, params);
    } catch (const NumericalError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  LengthScaleFit fit;
  const double log_lo = std::log(search.ell_min);
  const double log_hi = std::log(search.ell_max);
  for (int i = 0; i < search.n_grid; ++i) {
    const double t = static_cast<double>(i) / (search.n_grid - 1);
    const double ell = i == 0 ? search.ell_min : (i == search.n_grid - 1 ? search.ell_max : std::exp(log_lo + t * (log_hi - log_lo)));
    fit.grid.push_back(ell);
    fit.log_ml.push_back(evaluate(ell));
  }

  const bool single_location = std::all_of(inputs.begin(), inputs.end(), [&](const AngularCoord& a) { return a == inputs.front(); });
  if (inputs.size() < 2 || single_location) {
    const auto mid = static_cast<std::size_t>((search.n_grid - 1) / 2);
    fit.degenerate = true;
    fit.length_scale = fit.grid[mid];
    fit.log_ml_at_fit = fit.log_ml[mid];
    return fit;
  }

  const auto best = static_cast<std::size_t>(std::max_element(fit.log_ml.begin(), fit.log_ml.end()) - fit.log_ml.begin());
  fit.length_scale = fit.grid[best];
  fit.log_ml_at_fit = fit.log_ml[best];
  if (!std::isfinite(fit.log_ml_at_fit))
    throw NumericalError("fit_length_scale: log marginal likelihood is not finite anywhere on the grid");

  const bool constant_targets = std::all_of(targets.begin(), targets.end(), [&](double z) { return z == targets.front(); });
  if (constant_targets && params.noise_variance == 0.0) {
    fit.degenerate = true;
    return fit;
  }

  double a = std::log(fit.grid[best == 0 ? 0 : best - 1]);
  double b = std::log(fit.grid[std::min(best + 1, fit.grid.size() - 1)]);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = evaluate(std::exp(c));
  double fd = evaluate(std::exp(d));
  for (int it = 0; it < search.refine_iters; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = evaluate(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = evaluate(std::exp(d));
    }
  }
  const double cand_log = fc >= fd ? c : d;
  const double cand_val = std::max(fc, fd);
  if (cand_val >= fit.log_ml_at_fit) {
    fit.length_scale = std::exp(cand_log);
    fit.log_ml_at_fit = cand_val;
    fit.refined = true;
  }
  return fit;
}

}  // namespace rangedepth
