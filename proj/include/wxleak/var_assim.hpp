#pragma once

// 3DVar analysis with an augmented (state, bias-coefficient) control vector:
//
//   J(x, b) = 1/2 (x - x_b)^T B^-1 (x - x_b)
//           + 1/2 (b - b_b)^T Bb^-1 (b - b_b)
//           + 1/2 [y - H^(x, b)]^T R^-1 [y - H^(x, b)]
//
// The bias vector is packed as [beta_0, beta_1, ..., beta_Np].

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "wxleak/error.hpp"
#include "wxleak/radiance_forward.hpp"

namespace wxleak::var {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Covariance {
 public:
  enum class Kind { diagonal, full };

  /// Throws ValidationError unless every variance is finite and > 0.
  static Covariance diagonal(VectorXd variances);
  static Covariance scaled_identity(std::size_t n, double variance);
  /// Throws ValidationError unless symmetric positive definite (checked by Cholesky).
  static Covariance full(MatrixXd matrix);

  Kind kind() const { return kind_; }
  std::size_t size() const;

  /// C^-1 v
  VectorXd solve(const VectorXd& v) const;
  MatrixXd dense() const;
  MatrixXd inverse() const;

 private:
  Covariance() = default;
  Kind kind_ = Kind::diagonal;
  VectorXd variances_;
  MatrixXd matrix_;
  Eigen::LLT<MatrixXd> llt_;
};

/// R = diag(error_stddev^2).
Covariance observation_covariance(std::span<const radiance::RadianceObservation> obs);
VectorXd observation_values(std::span<const radiance::RadianceObservation> obs);

/// Binding between the control vector and the observations.
class ObservationOperator {
 public:
  virtual ~ObservationOperator() = default;

  virtual std::size_t state_size() const = 0;
  virtual std::size_t observation_count() const = 0;
  /// 1 + number of predictors.
  virtual std::size_t bias_size() const = 0;

  /// H^(x, beta), one entry per observation. Entries may be NaN when the
  /// state is outside the operator's domain.
  virtual VectorXd apply(const VectorXd& state, const VectorXd& bias,
                         std::span<const radiance::RadianceObservation> obs) const = 0;

  /// Accumulates (dH^/dx)^T w into grad_state and (dH^/dbeta)^T w into grad_bias.
  virtual void apply_adjoint(const VectorXd& state, const VectorXd& bias,
                             std::span<const radiance::RadianceObservation> obs, const VectorXd& w,
                             VectorXd& grad_state, VectorXd& grad_bias) const = 0;
};

/// Radiance operator on the forecast grid. State layout is
/// [T_0 .. T_{N-1}, q_0 .. q_{N-1}]; observation i samples grid point locations[i].
class GridColumnOperator final : public ObservationOperator {
 public:
  GridColumnOperator(std::size_t grid_size, std::vector<std::size_t> locations,
                     radiance::BiasModel bias_template, radiance::ForwardOperatorParams params,
                     radiance::ColumnMapping mapping = {});

  std::size_t state_size() const override { return 2 * grid_size_; }
  std::size_t observation_count() const override { return locations_.size(); }
  std::size_t bias_size() const override { return 1 + bias_.predictor_count(); }

  VectorXd apply(const VectorXd& state, const VectorXd& bias,
                 std::span<const radiance::RadianceObservation> obs) const override;
  void apply_adjoint(const VectorXd& state, const VectorXd& bias,
                     std::span<const radiance::RadianceObservation> obs, const VectorXd& w,
                     VectorXd& grad_state, VectorXd& grad_bias) const override;

  const std::vector<std::size_t>& locations() const { return locations_; }
  radiance::ColumnState column(const VectorXd& state, std::size_t i) const;

 private:
  std::size_t grid_size_;
  std::vector<std::size_t> locations_;
  radiance::BiasModel bias_;
  radiance::ForwardOperatorParams params_;
  radiance::ColumnMapping mapping_;
};

/// H^ = H x + offset + beta_0 + P [beta_1 .. beta_Np]. Used for closed-form checks.
class LinearOperator final : public ObservationOperator {
 public:
  LinearOperator(MatrixXd h, VectorXd offset, MatrixXd predictors);

  std::size_t state_size() const override { return static_cast<std::size_t>(h_.cols()); }
  std::size_t observation_count() const override { return static_cast<std::size_t>(h_.rows()); }
  std::size_t bias_size() const override { return 1 + static_cast<std::size_t>(p_.cols()); }

  VectorXd apply(const VectorXd& state, const VectorXd& bias,
                 std::span<const radiance::RadianceObservation> obs) const override;
  void apply_adjoint(const VectorXd& state, const VectorXd& bias,
                     std::span<const radiance::RadianceObservation> obs, const VectorXd& w,
                     VectorXd& grad_state, VectorXd& grad_bias) const override;

  const MatrixXd& h() const { return h_; }
  const VectorXd& offset() const { return offset_; }
  const MatrixXd& predictor_matrix() const { return p_; }

 private:
  MatrixXd h_;
  VectorXd offset_;
  MatrixXd p_;
};

struct Control {
  VectorXd state;
  VectorXd bias;
};

class AssimilationProblem {
 public:
  /// Throws ValidationError on any dimension mismatch.
  AssimilationProblem(VectorXd background_state, VectorXd background_bias, Covariance state_cov,
                      Covariance bias_cov, Covariance obs_cov,
                      std::vector<radiance::RadianceObservation> observations,
                      std::shared_ptr<const ObservationOperator> op, bool hold_bias = false);

  const VectorXd& background_state() const { return xb_; }
  const VectorXd& background_bias() const { return bb_; }
  const Covariance& state_covariance() const { return b_; }
  const Covariance& bias_covariance() const { return bb_cov_; }
  const Covariance& observation_covariance() const { return r_; }
  const std::vector<radiance::RadianceObservation>& observations() const { return obs_; }
  const VectorXd& y() const { return y_; }
  const ObservationOperator& op() const { return *op_; }
  bool hold_bias() const { return hold_bias_; }

  Control background() const { return {xb_, bb_}; }
  void check_control(const Control& c) const;

 private:
  VectorXd xb_;
  VectorXd bb_;
  Covariance b_;
  Covariance bb_cov_;
  Covariance r_;
  std::vector<radiance::RadianceObservation> obs_;
  VectorXd y_;
  std::shared_ptr<const ObservationOperator> op_;
  bool hold_bias_;
};

/// y - H^(x, beta)
VectorXd innovation(const AssimilationProblem& problem, const Control& control);

double cost(const Control& control, const AssimilationProblem& problem);

/// Analytic gradient. When the problem holds bias fixed the bias part is zero.
Control gradient(const Control& control, const AssimilationProblem& problem);

struct CostAndGradient {
  double cost;
  Control gradient;
};
CostAndGradient cost_and_gradient(const Control& control, const AssimilationProblem& problem);

struct MinimizerOptions {
  double relative_tolerance = 1e-8;
  int max_iterations = 500;
  double armijo = 1e-4;
  double shrink = 0.5;
  std::ostream* trace = nullptr;  // one line per iteration when set
};

struct AnalysisResult {
  Control analysis;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double gradient_norm = 0.0;
  double tolerance = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Thrown when the cost stops being finite; carries the last finite iterate.
class NonFiniteCostError : public RuntimeError {
 public:
  NonFiniteCostError(const std::string& what, Control last) : RuntimeError(what), last_(std::move(last)) {}
  const Control& last_finite() const { return last_; }

 private:
  Control last_;
};

/// Polak-Ribiere (PR+) nonlinear conjugate gradient with Armijo backtracking.
/// Converged when |grad J| <= tol * max(1, |grad J_0|).
AnalysisResult minimize(const AssimilationProblem& problem, const Control& init,
                        const MinimizerOptions& options = {});

}  // namespace wxleak::var
