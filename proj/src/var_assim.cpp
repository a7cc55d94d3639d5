#include "wxleak/var_assim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

namespace wxleak::var {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string dims(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace

// -----------------------------------------------------------------------------
Covariance Covariance::diagonal(VectorXd variances) {
  for (Eigen::Index i = 0; i < variances.size(); ++i)
    if (!(variances[i] > 0.0) || !std::isfinite(variances[i]))
      throw ValidationError("diagonal covariance entry " + std::to_string(i) + " must be finite and > 0");
  Covariance c;
  c.kind_ = Kind::diagonal;
  c.variances_ = std::move(variances);
  return c;
}

Covariance Covariance::scaled_identity(std::size_t n, double variance) {
  return diagonal(VectorXd::Constant(static_cast<Eigen::Index>(n), variance));
}

Covariance Covariance::full(MatrixXd matrix) {
  if (matrix.rows() != matrix.cols()) throw ValidationError("covariance matrix must be square");
  if (!matrix.allFinite()) throw ValidationError("covariance matrix must be finite");
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValidationError("covariance matrix must be symmetric");
  Covariance c;
  c.kind_ = Kind::full;
  c.matrix_ = std::move(matrix);
  c.llt_.compute(c.matrix_);
  if (c.llt_.info() != Eigen::Success) throw ValidationError("covariance matrix is not positive definite");
  return c;
}

std::size_t Covariance::size() const {
  return static_cast<std::size_t>(kind_ == Kind::diagonal ? variances_.size() : matrix_.rows());
}

VectorXd Covariance::solve(const VectorXd& v) const {
  if (kind_ == Kind::diagonal) return v.cwiseQuotient(variances_);
  return llt_.solve(v);
}

MatrixXd Covariance::dense() const {
  if (kind_ == Kind::diagonal) return variances_.asDiagonal();
  return matrix_;
}

MatrixXd Covariance::inverse() const {
  if (kind_ == Kind::diagonal) return variances_.cwiseInverse().asDiagonal();
  return llt_.solve(MatrixXd::Identity(matrix_.rows(), matrix_.cols()));
}

Covariance observation_covariance(std::span<const radiance::RadianceObservation> obs) {
  VectorXd v(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) v[static_cast<Eigen::Index>(i)] = obs[i].error_stddev * obs[i].error_stddev;
  return Covariance::diagonal(std::move(v));
}

VectorXd observation_values(std::span<const radiance::RadianceObservation> obs) {
  VectorXd v(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) v[static_cast<Eigen::Index>(i)] = obs[i].value;
  return v;
}

// -----------------------------------------------------------------------------
GridColumnOperator::GridColumnOperator(std::size_t grid_size, std::vector<std::size_t> locations,
                                       radiance::BiasModel bias_template,
                                       radiance::ForwardOperatorParams params,
                                       radiance::ColumnMapping mapping)
    : grid_size_(grid_size),
      locations_(std::move(locations)),
      bias_(std::move(bias_template)),
      params_(params),
      mapping_(mapping) {
  for (std::size_t loc : locations_)
    if (loc >= grid_size_)
      throw ValidationError("observation location " + std::to_string(loc) + " outside grid of " +
                            std::to_string(grid_size_));
}

radiance::ColumnState GridColumnOperator::column(const VectorXd& state, std::size_t i) const {
  const auto loc = static_cast<Eigen::Index>(locations_[i]);
  return mapping_.column(state[loc], state[static_cast<Eigen::Index>(grid_size_) + loc]);
}

VectorXd GridColumnOperator::apply(const VectorXd& state, const VectorXd& bias,
                                   std::span<const radiance::RadianceObservation> obs) const {
  VectorXd out(static_cast<Eigen::Index>(locations_.size()));
  for (std::size_t i = 0; i < locations_.size(); ++i) {
    const auto col = column(state, i);
    if (!(col.surface_temperature > 0.0 && col.atmosphere_temperature > 0.0) ||
        !std::isfinite(col.water_vapor)) {
      out[static_cast<Eigen::Index>(i)] = kNaN;
      continue;
    }
    // below q = 0 the operator continues linearly along its tangent, keeping J smooth
    const double q_neg = std::min(state[static_cast<Eigen::Index>(grid_size_ + locations_[i])], 0.0);
    double h = radiance::forward(col, params_) + radiance::forward_tangent(col, params_) * q_neg + bias[0];
    const auto& preds = bias_.predictors();
    for (std::size_t j = 0; j < preds.size(); ++j)
      h += bias[static_cast<Eigen::Index>(j + 1)] * preds[j].evaluate(col, obs[i]).value;
    out[static_cast<Eigen::Index>(i)] = h;
  }
  return out;
}

void GridColumnOperator::apply_adjoint(const VectorXd& state, const VectorXd& bias,
                                       std::span<const radiance::RadianceObservation> obs,
                                       const VectorXd& w, VectorXd& grad_state,
                                       VectorXd& grad_bias) const {
  const auto n = static_cast<Eigen::Index>(grid_size_);
  for (std::size_t i = 0; i < locations_.size(); ++i) {
    const auto loc = static_cast<Eigen::Index>(locations_[i]);
    const double wi = w[static_cast<Eigen::Index>(i)];
    const auto col = column(state, i);
    const auto jac = radiance::forward_jacobian(col, params_);
    // T_surf and T_atm both move one-for-one with the grid temperature
    double d_t = jac.d_surface_temperature + jac.d_atmosphere_temperature;
    double d_q = jac.d_water_vapor;
    grad_bias[0] += wi;
    const auto& preds = bias_.predictors();
    for (std::size_t j = 0; j < preds.size(); ++j) {
      const auto p = preds[j].evaluate(col, obs[i]);
      const double bj = bias[static_cast<Eigen::Index>(j + 1)];
      d_t += bj * (p.d_surface_temperature + p.d_atmosphere_temperature);
      d_q += bj * p.d_water_vapor;
      grad_bias[static_cast<Eigen::Index>(j + 1)] += wi * p.value;
    }
    // the continuation slope k (T_atm - T_surf) depends only on the fixed lapse, so
    // below q = 0 the q derivative is that slope and the T derivative is unchanged
    grad_state[loc] += wi * d_t;
    grad_state[n + loc] += wi * d_q;
  }
}

// -----------------------------------------------------------------------------
LinearOperator::LinearOperator(MatrixXd h, VectorXd offset, MatrixXd predictors)
    : h_(std::move(h)), offset_(std::move(offset)), p_(std::move(predictors)) {
  if (offset_.size() != h_.rows()) throw ValidationError("linear operator offset length mismatch");
  if (p_.rows() != h_.rows()) throw ValidationError("linear operator predictor rows mismatch");
}

VectorXd LinearOperator::apply(const VectorXd& state, const VectorXd& bias,
                               std::span<const radiance::RadianceObservation>) const {
  VectorXd out = h_ * state + offset_;
  out.array() += bias[0];
  if (p_.cols() > 0) out += p_ * bias.tail(p_.cols());
  return out;
}

void LinearOperator::apply_adjoint(const VectorXd&, const VectorXd&,
                                   std::span<const radiance::RadianceObservation>, const VectorXd& w,
                                   VectorXd& grad_state, VectorXd& grad_bias) const {
  grad_state += h_.transpose() * w;
  grad_bias[0] += w.sum();
  if (p_.cols() > 0) grad_bias.tail(p_.cols()) += p_.transpose() * w;
}

// -----------------------------------------------------------------------------
AssimilationProblem::AssimilationProblem(VectorXd background_state, VectorXd background_bias,
                                         Covariance state_cov, Covariance bias_cov,
                                         Covariance obs_cov,
                                         std::vector<radiance::RadianceObservation> observations,
                                         std::shared_ptr<const ObservationOperator> op,
                                         bool hold_bias)
    : xb_(std::move(background_state)),
      bb_(std::move(background_bias)),
      b_(std::move(state_cov)),
      bb_cov_(std::move(bias_cov)),
      r_(std::move(obs_cov)),
      obs_(std::move(observations)),
      op_(std::move(op)),
      hold_bias_(hold_bias) {
  if (!op_) throw ValidationError("assimilation problem needs an observation operator");
  const auto nx = static_cast<std::size_t>(xb_.size());
  const auto nb = static_cast<std::size_t>(bb_.size());
  if (op_->state_size() != nx)
    throw ValidationError("background state length vs operator state size: " + dims(nx, op_->state_size()));
  if (b_.size() != nx) throw ValidationError("B size vs state length: " + dims(b_.size(), nx));
  if (op_->bias_size() != nb)
    throw ValidationError("background bias length vs operator bias size: " + dims(nb, op_->bias_size()));
  if (bb_cov_.size() != nb) throw ValidationError("B_beta size vs bias length: " + dims(bb_cov_.size(), nb));
  if (op_->observation_count() != obs_.size())
    throw ValidationError("observation count vs operator: " + dims(obs_.size(), op_->observation_count()));
  if (r_.size() != obs_.size()) throw ValidationError("R size vs observation count: " + dims(r_.size(), obs_.size()));
  for (const auto& o : obs_) o.validate();
  if (!all_finite(xb_) || !all_finite(bb_)) throw ValidationError("background must be finite");
  y_ = observation_values(obs_);
}

void AssimilationProblem::check_control(const Control& c) const {
  if (c.state.size() != xb_.size())
    throw ValidationError("control state length: " + dims(static_cast<std::size_t>(c.state.size()),
                                                           static_cast<std::size_t>(xb_.size())));
  if (c.bias.size() != bb_.size())
    throw ValidationError("control bias length: " + dims(static_cast<std::size_t>(c.bias.size()),
                                                          static_cast<std::size_t>(bb_.size())));
}

VectorXd innovation(const AssimilationProblem& problem, const Control& control) {
  problem.check_control(control);
  return problem.y() - problem.op().apply(control.state, control.bias, problem.observations());
}

double cost(const Control& control, const AssimilationProblem& problem) {
  const VectorXd d = innovation(problem, control);
  const VectorXd dx = control.state - problem.background_state();
  const VectorXd db = control.bias - problem.background_bias();
  return 0.5 * dx.dot(problem.state_covariance().solve(dx)) +
         0.5 * db.dot(problem.bias_covariance().solve(db)) +
         0.5 * d.dot(problem.observation_covariance().solve(d));
}

CostAndGradient cost_and_gradient(const Control& control, const AssimilationProblem& problem) {
  const VectorXd d = innovation(problem, control);
  const VectorXd dx = control.state - problem.background_state();
  const VectorXd db = control.bias - problem.background_bias();
  const VectorXd bx = problem.state_covariance().solve(dx);
  const VectorXd bb = problem.bias_covariance().solve(db);
  const VectorXd rd = problem.observation_covariance().solve(d);

  CostAndGradient out;
  out.cost = 0.5 * dx.dot(bx) + 0.5 * db.dot(bb) + 0.5 * d.dot(rd);
  if (!std::isfinite(out.cost)) {
    // outside the operator's domain; the adjoint is undefined there
    out.gradient = {VectorXd::Constant(dx.size(), kNaN), VectorXd::Constant(db.size(), kNaN)};
    return out;
  }

  // dJ/dz = B^-1 dz - (dH^/dz)^T R^-1 d
  Control g{bx, bb};
  VectorXd hx = VectorXd::Zero(dx.size());
  VectorXd hb = VectorXd::Zero(db.size());
  problem.op().apply_adjoint(control.state, control.bias, problem.observations(), rd, hx, hb);
  g.state -= hx;
  g.bias -= hb;
  if (problem.hold_bias()) g.bias.setZero();
  out.gradient = std::move(g);
  return out;
}

Control gradient(const Control& control, const AssimilationProblem& problem) {
  return cost_and_gradient(control, problem).gradient;
}

// -----------------------------------------------------------------------------
namespace {

struct Point {
  VectorXd z;
  double f;
  VectorXd g;
};

class Packed {
 public:
  explicit Packed(const AssimilationProblem& p)
      : problem_(p), nx_(p.background_state().size()), nb_(p.background_bias().size()) {}

  VectorXd pack(const Control& c) const {
    VectorXd z(nx_ + nb_);
    z << c.state, c.bias;
    return z;
  }
  Control unpack(const VectorXd& z) const { return {z.head(nx_), z.tail(nb_)}; }

  Point eval(const VectorXd& z) const {
    auto cg = cost_and_gradient(unpack(z), problem_);
    Point p{z, cg.cost, pack(cg.gradient)};
    if (!std::isfinite(p.f) || !p.g.allFinite()) p.f = std::numeric_limits<double>::quiet_NaN();
    return p;
  }

 private:
  const AssimilationProblem& problem_;
  Eigen::Index nx_;
  Eigen::Index nb_;
};

bool finite(const Point& p) { return std::isfinite(p.f); }

// Armijo backtracking seeded with a derivative-secant step, which is exact on
// quadratics. Returns false when no acceptable step exists.
bool line_search(const Packed& packed, const Point& x, const VectorXd& d, double trial,
                 const MinimizerOptions& opt, Point& out, double& step) {
  const double f0 = x.f;
  const double slope0 = x.g.dot(d);
  const double flat = 1e-12 * std::max(1.0, std::abs(f0));

  auto acceptable = [&](const Point& p, double a) {
    if (!finite(p)) return false;
    if (p.f <= f0 + opt.armijo * a * slope0) return true;
    // cost difference lost in rounding: fall back on the directional derivative
    return p.f <= f0 + flat && std::abs(p.g.dot(d)) < std::abs(slope0);
  };

  Point probe = packed.eval(x.z + trial * d);
  double alpha = trial;
  Point cand = probe;
  // secant refinement on the directional derivative; on a quadratic the first
  // pass lands on the exact minimizer along d
  double a_lo = 0.0, s_lo = slope0;
  for (int k = 0; k < 6 && finite(cand); ++k) {
    const double s = cand.g.dot(d);
    if (std::abs(s) <= 0.1 * std::abs(slope0) && acceptable(cand, alpha)) break;
    if (!(s > s_lo)) {
      if (s < 0.0 && acceptable(cand, alpha)) {
        a_lo = alpha;
        s_lo = s;
        alpha *= 4.0;
        cand = packed.eval(x.z + alpha * d);
        continue;
      }
      break;
    }
    const double next = a_lo + (alpha - a_lo) * s_lo / (s_lo - s);
    if (!(next > 0.0) || !std::isfinite(next) || std::abs(next - alpha) <= 1e-12 * alpha) break;
    if (s < 0.0) {
      a_lo = alpha;
      s_lo = s;
    }
    alpha = next;
    cand = packed.eval(x.z + alpha * d);
  }
  for (int k = 0; k < 80; ++k) {
    if (acceptable(cand, alpha)) {
      out = std::move(cand);
      step = alpha;
      return true;
    }
    if (alpha != trial && acceptable(probe, trial) && probe.f < cand.f) {
      out = std::move(probe);
      step = trial;
      return true;
    }
    alpha *= opt.shrink;
    cand = packed.eval(x.z + alpha * d);
  }
  return false;
}

}  // namespace

AnalysisResult minimize(const AssimilationProblem& problem, const Control& init,
                        const MinimizerOptions& options) {
  problem.check_control(init);
  const Packed packed(problem);
  const VectorXd z0 = packed.pack(init);

  Point x = packed.eval(z0);
  if (!finite(x)) throw NonFiniteCostError("cost is not finite at the initial control", init);

  AnalysisResult result;
  result.initial_cost = x.f;
  const double g0 = x.g.norm();
  result.tolerance = options.relative_tolerance * std::max(1.0, g0);

  const auto dim = static_cast<int>(z0.size());
  VectorXd d = -x.g;
  double prev_step = 0.0;
  double prev_slope = 0.0;
  int since_restart = 0;
  int it = 0;
  bool converged = x.g.norm() <= result.tolerance;

  while (!converged && it < options.max_iterations) {
    double slope = x.g.dot(d);
    if (!(slope < 0.0)) {
      d = -x.g;
      slope = -x.g.squaredNorm();
      since_restart = 0;
    }
    double trial = prev_step > 0.0 ? prev_step * prev_slope / slope : 1.0 / std::max(1.0, x.g.norm());
    if (!(trial > 0.0) || !std::isfinite(trial)) trial = 1.0 / std::max(1.0, x.g.norm());

    Point next;
    double step = 0.0;
    if (!line_search(packed, x, d, trial, options, next, step)) {
      if (since_restart == 0) {
        // steepest descent failed too; check whether the trouble is non-finite cost
        if (!finite(packed.eval(x.z + 1e-12 * d)))
          throw NonFiniteCostError("cost became non-finite during line search", packed.unpack(x.z));
        break;
      }
      d = -x.g;
      since_restart = 0;
      prev_step = 0.0;
      continue;
    }
    ++it;
    ++since_restart;

    const double gg = x.g.squaredNorm();
    double beta = gg > 0.0 ? next.g.dot(next.g - x.g) / gg : 0.0;
    beta = std::max(0.0, beta);
    if (since_restart >= dim) {
      beta = 0.0;
      since_restart = 0;
    }
    prev_step = step;
    prev_slope = slope;
    d = -next.g + beta * d;
    x = std::move(next);
    converged = x.g.norm() <= result.tolerance;

    if (options.trace) {
      *options.trace << "  iter " << std::setw(4) << it << "  J=" << std::setprecision(12) << x.f
                     << "  |g|=" << std::setprecision(4) << x.g.norm() << "  step=" << step << '\n';
    }
  }

  if (x.f > result.initial_cost) {
    x = packed.eval(z0);
    converged = x.g.norm() <= result.tolerance;
  }
  result.analysis = packed.unpack(x.z);
  result.final_cost = x.f;
  result.gradient_norm = x.g.norm();
  result.iterations = it;
  result.converged = converged;
  return result;
}

}  // namespace wxleak::var
