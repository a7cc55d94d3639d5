#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "wxleak/error.hpp"
#include "wxleak/toy_nwp.hpp"
#include "wxleak/var_assim.hpp"

using namespace wxleak;
using namespace wxleak::var;
using radiance::RadianceObservation;

namespace {

std::vector<RadianceObservation> make_obs(const VectorXd& y, double sd = 1.0) {
  std::vector<RadianceObservation> out(static_cast<std::size_t>(y.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].value = y[static_cast<Eigen::Index>(i)];
    out[i].error_stddev = sd;
    out[i].scan_position = static_cast<double>(i);
  }
  return out;
}

// bias-only scalar: H^ = x_fixed + beta with x_fixed = 5, y = 6, B_beta = 1, R = r
AssimilationProblem scalar_problem(double r = 1.0, double x_fixed = 5.0) {
  auto op = std::make_shared<LinearOperator>(MatrixXd(1, 0), VectorXd::Constant(1, x_fixed), MatrixXd(1, 0));
  return AssimilationProblem(VectorXd(0), VectorXd::Zero(1), Covariance::scaled_identity(0, 1.0),
                             Covariance::scaled_identity(1, 1.0), Covariance::scaled_identity(1, r),
                             make_obs(VectorXd::Constant(1, x_fixed + 1.0)), op);
}

Control scalar_control(double beta) { return {VectorXd(0), VectorXd::Constant(1, beta)}; }

struct LinearCase {
  std::shared_ptr<LinearOperator> op;
  AssimilationProblem problem;
};

MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = z(rng);
  MatrixXd s = a * a.transpose() / static_cast<double>(n) + MatrixXd::Identity(n, n);
  return 0.5 * (s + s.transpose());
}

LinearCase random_linear(std::mt19937_64& rng, bool full_b) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> nx_d(0, 12), ny_d(1, 15), np_d(0, 3);
  const Eigen::Index nx = nx_d(rng), ny = ny_d(rng), np = np_d(rng);
  MatrixXd h(ny, nx), p(ny, np);
  VectorXd off(ny), y(ny), xb(nx), bb(np + 1);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = z(rng);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = z(rng);
  for (auto* v : {&off, &y, &xb, &bb})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = z(rng);
  auto op = std::make_shared<LinearOperator>(h, off, p);
  VectorXd rv(ny);
  for (Eigen::Index i = 0; i < ny; ++i) rv[i] = 0.2 + std::abs(z(rng));
  Covariance b = full_b && nx > 0 ? Covariance::full(random_spd(rng, nx))
                                  : Covariance::scaled_identity(static_cast<std::size_t>(nx), 1.5);
  auto obs = make_obs(y);
  for (Eigen::Index i = 0; i < ny; ++i) obs[static_cast<std::size_t>(i)].error_stddev = std::sqrt(rv[i]);
  return {op, AssimilationProblem(xb, bb, std::move(b), Covariance::scaled_identity(static_cast<std::size_t>(np + 1), 0.7),
                                  Covariance::diagonal(rv), obs, op)};
}

// Normal equations for the quadratic cost, solved densely with QR.
VectorXd dense_solution(const LinearCase& c) {
  const auto& pr = c.problem;
  const auto& op = *c.op;
  const Eigen::Index nx = op.h().cols(), nb = op.predictor_matrix().cols() + 1, ny = op.h().rows();
  MatrixXd g(ny, nx + nb);
  g << op.h(), VectorXd::Ones(ny), op.predictor_matrix();
  MatrixXd binv = MatrixXd::Zero(nx + nb, nx + nb);
  binv.topLeftCorner(nx, nx) = pr.state_covariance().dense().inverse();
  binv.bottomRightCorner(nb, nb) = pr.bias_covariance().dense().inverse();
  const MatrixXd rinv = pr.observation_covariance().dense().inverse();
  VectorXd zb(nx + nb);
  zb << pr.background_state(), pr.background_bias();
  const MatrixXd a = binv + g.transpose() * rinv * g;
  const VectorXd rhs = binv * zb + g.transpose() * rinv * (pr.y() - op.offset());
  return a.colPivHouseholderQr().solve(rhs);
}

VectorXd packed(const Control& c) {
  VectorXd z(c.state.size() + c.bias.size());
  z << c.state, c.bias;
  return z;
}

struct GridCase {
  std::shared_ptr<GridColumnOperator> op;
  AssimilationProblem problem;
  Control probe;
};

GridCase random_grid(std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> n_d(4, 20);
  const std::size_t n = n_d(rng);
  std::uniform_int_distribution<std::size_t> m_d(1, std::min<std::size_t>(n, 20));
  std::vector<std::size_t> locs(n);
  std::iota(locs.begin(), locs.end(), 0);
  std::shuffle(locs.begin(), locs.end(), rng);
  locs.resize(m_d(rng));
  auto bias = radiance::BiasModel::from_names(0.0, {0.0, 0.0}, {"surface_temperature", "scan_position"});
  auto op = std::make_shared<GridColumnOperator>(n, locs, bias, radiance::ForwardOperatorParams{});
  VectorXd xb(static_cast<Eigen::Index>(2 * n));
  for (std::size_t k = 0; k < n; ++k) {
    xb[static_cast<Eigen::Index>(k)] = 3.0 * z(rng);
    xb[static_cast<Eigen::Index>(n + k)] = 22.0 + 6.0 * z(rng);
  }
  VectorXd y(static_cast<Eigen::Index>(locs.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = 262.0 + 4.0 * z(rng);
  VectorXd bb(3);
  bb << 0.2 * z(rng), 0.001 * z(rng), 0.01 * z(rng);
  auto obs = make_obs(y, 0.5);
  AssimilationProblem pr(xb, bb, Covariance::scaled_identity(2 * n, 2.0), Covariance::scaled_identity(3, 0.5),
                         observation_covariance(obs), obs, op);
  Control c{xb, bb};
  for (Eigen::Index i = 0; i < c.state.size(); ++i) c.state[i] += 0.7 * z(rng);
  for (Eigen::Index i = 0; i < c.bias.size(); ++i) c.bias[i] += 0.003 * z(rng);
  return {op, std::move(pr), c};
}

}  // namespace

TEST_CASE("covariance construction") {
  CHECK_THROWS_AS(Covariance::diagonal(VectorXd::Constant(2, 0.0)), ValidationError);
  CHECK_THROWS_AS(Covariance::diagonal(VectorXd::Constant(2, -1.0)), ValidationError);
  CHECK_THROWS_AS(Covariance::scaled_identity(3, NAN), ValidationError);
  MatrixXd asym(2, 2);
  asym << 2, 1, 0, 2;
  CHECK_THROWS_AS(Covariance::full(asym), ValidationError);
  MatrixXd indef(2, 2);
  indef << 1, 2, 2, 1;
  CHECK_THROWS_AS(Covariance::full(indef), ValidationError);
  CHECK_THROWS_AS(Covariance::full(MatrixXd(2, 3)), ValidationError);

  MatrixXd spd(2, 2);
  spd << 4, 1, 1, 3;
  const auto c = Covariance::full(spd);
  const VectorXd v = VectorXd::Constant(2, 1.0);
  CHECK((spd * c.solve(v) - v).norm() < 1e-12);
  CHECK((c.inverse() * spd - MatrixXd::Identity(2, 2)).norm() < 1e-12);
  CHECK(Covariance::scaled_identity(3, 2.0).solve(VectorXd::Constant(3, 4.0)) == VectorXd::Constant(3, 2.0));
}

TEST_CASE("problem dimension checks") {
  auto op = std::make_shared<LinearOperator>(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd(2, 0));
  const auto obs = make_obs(VectorXd::Zero(2));
  auto build = [&](Eigen::Index nx, Eigen::Index nb, std::size_t nr, std::size_t nbcov) {
    return AssimilationProblem(VectorXd::Zero(nx), VectorXd::Zero(nb),
                               Covariance::scaled_identity(static_cast<std::size_t>(nx), 1.0),
                               Covariance::scaled_identity(nbcov, 1.0), Covariance::scaled_identity(nr, 1.0), obs, op);
  };
  CHECK_NOTHROW(build(2, 1, 2, 1));
  CHECK_THROWS_AS(build(3, 1, 2, 1), ValidationError);
  CHECK_THROWS_AS(build(2, 2, 2, 2), ValidationError);
  CHECK_THROWS_AS(build(2, 1, 3, 1), ValidationError);
  CHECK_THROWS_AS(build(2, 1, 2, 2), ValidationError);
  const auto p = build(2, 1, 2, 1);
  CHECK_THROWS_AS(cost({VectorXd::Zero(3), VectorXd::Zero(1)}, p), ValidationError);
  CHECK_THROWS_AS(gradient({VectorXd::Zero(2), VectorXd::Zero(2)}, p), ValidationError);
}

TEST_CASE("scalar bias-only case in closed form") {
  const auto p = scalar_problem();
  CHECK(cost(scalar_control(0.0), p) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cost(scalar_control(0.5), p) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(gradient(scalar_control(0.0), p).bias[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(gradient(scalar_control(0.5), p).bias[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));

  const auto r = minimize(p, scalar_control(0.0));
  CHECK(r.converged);
  CHECK(std::abs(r.analysis.bias[0] - 0.5) <= 1e-6);
  CHECK(std::abs(r.final_cost - 0.25) <= 1e-8);
  CHECK(r.analysis.state.size() == 0);
}

TEST_CASE("perfect background is stationary") {
  auto op = std::make_shared<LinearOperator>(MatrixXd::Identity(3, 3), VectorXd::Constant(3, 1.0), MatrixXd::Ones(3, 1));
  VectorXd xb(3), bb(2);
  xb << 1, 2, 3;
  bb << 0.5, -0.25;
  const VectorXd y = op->apply(xb, bb, {});
  const AssimilationProblem p(xb, bb, Covariance::scaled_identity(3, 1.0), Covariance::scaled_identity(2, 1.0),
                              Covariance::scaled_identity(3, 1.0), make_obs(y), op);
  CHECK(cost(p.background(), p) == 0.0);
  CHECK(packed(gradient(p.background(), p)).norm() == 0.0);
  CHECK(innovation(p, p.background()).norm() == 0.0);
  const auto r = minimize(p, p.background());
  CHECK(r.iterations == 0);
  CHECK(r.converged);
  CHECK(r.analysis.state == xb);
  CHECK(r.analysis.bias == bb);
}

TEST_CASE("innovation examples") {
  // T_surf = 17 + 273 = 290, T_atm = 290 - 40 = 250, q = 20
  radiance::ColumnMapping mapping;
  mapping.atmosphere_lapse_k = -40.0;
  auto op = std::make_shared<GridColumnOperator>(4, std::vector<std::size_t>{0}, radiance::BiasModel{},
                                                 radiance::ForwardOperatorParams{}, mapping);
  VectorXd x(8);
  x << 17, 0, 0, 0, 20, 20, 20, 20;
  const AssimilationProblem p(x, VectorXd::Zero(1), Covariance::scaled_identity(8, 1.0),
                              Covariance::scaled_identity(1, 1.0), Covariance::scaled_identity(1, 1.0),
                              make_obs(VectorXd::Constant(1, 260.0)), op);
  CHECK(innovation(p, p.background())[0] == doctest::Approx(260.0 - 264.7151776468577).epsilon(1e-13));
}

TEST_CASE("uniform brightness offset appears in the innovation") {
  nwp::ModelState truth;
  for (int k = 0; k < 10; ++k) {
    truth.temperature.push_back(0.3 * k - 1.0);
    truth.moisture.push_back(15.0 + k);
  }
  const auto locs = nwp::alternate_locations(10);
  nwp::ObservationSetup setup;
  setup.true_bias = radiance::BiasModel::from_names(0.4, {0.02}, {"scan_position"});
  setup.error_stddev = 0.3;
  const auto obs = nwp::synthesize_observations(truth, setup, 99, 0.26826, locs);
  const auto clean = nwp::synthesize_observations(truth, setup, 99, 0.0, locs);

  auto op = std::make_shared<GridColumnOperator>(10, locs, setup.true_bias, radiance::ForwardOperatorParams{});
  VectorXd x(20);
  for (int k = 0; k < 10; ++k) {
    x[k] = truth.temperature[static_cast<std::size_t>(k)];
    x[10 + k] = truth.moisture[static_cast<std::size_t>(k)];
  }
  VectorXd b(2);
  b << 0.4, 0.02;
  const AssimilationProblem p(x, b, Covariance::scaled_identity(20, 1.0), Covariance::scaled_identity(2, 1.0),
                              observation_covariance(obs), obs, op);
  const AssimilationProblem q(x, b, Covariance::scaled_identity(20, 1.0), Covariance::scaled_identity(2, 1.0),
                              observation_covariance(clean), clean, op);
  const VectorXd d = innovation(p, p.background());
  const VectorXd d0 = innovation(q, q.background());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    CHECK(std::abs(d[i] - 0.26826) <= 4.0 * 0.3);
    CHECK(d[i] - d0[i] == doctest::Approx(0.26826).epsilon(1e-10));
  }
}

TEST_CASE("cost is non-negative and vanishes only when every term does") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 50; ++i) {
    auto c = random_linear(rng, i % 2 == 0);
    Control probe = c.problem.background();
    std::normal_distribution<double> z(0.0, 1.0);
    for (Eigen::Index k = 0; k < probe.state.size(); ++k) probe.state[k] += z(rng);
    CHECK(cost(probe, c.problem) >= 0.0);
  }
}

TEST_CASE("gradient matches central differences on random grid problems") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    auto gc = random_grid(rng);
    const auto g = gradient(gc.probe, gc.problem);
    Control c = gc.probe;
    // fourth-order central stencil keeps truncation below cost round-off
    auto fd = [&](VectorXd& v, Eigen::Index i) {
      const double h = 1e-3 * std::max(1.0, std::abs(v[i]));
      const double orig = v[i];
      auto at = [&](double dv) {
        v[i] = orig + dv;
        return cost(c, gc.problem);
      };
      const double d = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      v[i] = orig;
      return d;
    };
    for (Eigen::Index i = 0; i < c.state.size(); ++i) {
      const double d = fd(c.state, i);
      CHECK(std::abs(d - g.state[i]) <= 1e-6 * std::max({std::abs(d), std::abs(g.state[i]), 1e-2}));
    }
    for (Eigen::Index i = 0; i < c.bias.size(); ++i) {
      const double d = fd(c.bias, i);
      CHECK(std::abs(d - g.bias[i]) <= 1e-6 * std::max({std::abs(d), std::abs(g.bias[i]), 1e-2}));
    }
  }
}

TEST_CASE("gradient below zero moisture stays continuous") {
  auto op = std::make_shared<GridColumnOperator>(4, std::vector<std::size_t>{1}, radiance::BiasModel{},
                                                 radiance::ForwardOperatorParams{});
  VectorXd x(8);
  x << 0, 1, 0, 0, 5, 0.0, 5, 5;
  const AssimilationProblem p(x, VectorXd::Zero(1), Covariance::scaled_identity(8, 1.0),
                              Covariance::scaled_identity(1, 1.0), Covariance::scaled_identity(1, 0.09),
                              make_obs(VectorXd::Constant(1, 250.0)), op);
  Control lo = p.background(), hi = p.background();
  lo.state[5] = -1e-9;
  hi.state[5] = 1e-9;
  CHECK(gradient(lo, p).state[5] == doctest::Approx(gradient(hi, p).state[5]).epsilon(1e-6));
  Control neg = p.background();
  neg.state[5] = -2.0;
  const double h = 1e-5;
  Control a = neg, b = neg;
  a.state[5] += h;
  b.state[5] -= h;
  CHECK(gradient(neg, p).state[5] == doctest::Approx((cost(a, p) - cost(b, p)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("linear problems match the dense normal-equation solve") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const auto c = random_linear(rng, trial % 3 == 0);
    const VectorXd want = dense_solution(c);
    const auto r = minimize(c.problem, c.problem.background());
    CHECK(r.converged);
    const VectorXd got = packed(r.analysis);
    CHECK((got - want).norm() <= 1e-6 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("pinned state recovers the bias-only form") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  const Eigen::Index ny = 12;
  MatrixXd h = MatrixXd::Identity(ny, 6);
  h.bottomRows(6) = MatrixXd::Identity(6, 6);
  MatrixXd pm(ny, 1);
  VectorXd y(ny), xb(6);
  for (Eigen::Index i = 0; i < ny; ++i) {
    pm(i, 0) = static_cast<double>(i);
    y[i] = z(rng);
  }
  for (Eigen::Index i = 0; i < 6; ++i) xb[i] = z(rng);
  auto op = std::make_shared<LinearOperator>(h, VectorXd::Zero(ny), pm);

  // bias-only oracle: minimize over beta with x fixed at x_b
  MatrixXd g(ny, 2);
  g << VectorXd::Ones(ny), pm;
  const VectorXd d = y - h * xb;
  const VectorXd beta = (MatrixXd::Identity(2, 2) + g.transpose() * g).ldlt().solve(g.transpose() * d);

  auto pinned = [&](double variance) {
    const AssimilationProblem p(xb, VectorXd::Zero(2), Covariance::scaled_identity(6, variance),
                                Covariance::scaled_identity(2, 1.0), Covariance::scaled_identity(ny, 1.0),
                                make_obs(y), op);
    return minimize(p, p.background());
  };

  const auto r = pinned(1e-8);
  CHECK(r.converged);
  CHECK((r.analysis.state - xb).norm() <= 1e-6);
  CHECK((r.analysis.bias - beta).norm() <= 1e-6 * std::max(1.0, beta.norm()));

  // at 1e-10 the control is conditioned ~1e10; the gradient rule is out of
  // reach without preconditioning, but the bias still lands on the oracle
  const auto hard = pinned(1e-10);
  CHECK((hard.analysis.state - xb).norm() <= 1e-6);
  CHECK((hard.analysis.bias - beta).norm() <= 1e-6 * std::max(1.0, beta.norm()));
  CHECK(hard.final_cost <= hard.initial_cost);
}

TEST_CASE("hold_bias keeps the coefficients at background") {
  std::mt19937_64 rng(31);
  auto gc = random_grid(rng);
  const auto& pr = gc.problem;
  const AssimilationProblem held(pr.background_state(), pr.background_bias(), pr.state_covariance(),
                                 pr.bias_covariance(), pr.observation_covariance(), pr.observations(), gc.op, true);
  CHECK(gradient(gc.probe, held).bias.norm() == 0.0);
  const auto r = minimize(held, held.background());
  CHECK(r.analysis.bias == pr.background_bias());
  CHECK(r.final_cost <= r.initial_cost);
}

TEST_CASE("covariance limits in the scalar case") {
  const auto loose = minimize(scalar_problem(1e12), scalar_control(0.0));
  CHECK(std::abs(loose.analysis.bias[0] - 0.0) <= 1e-6);

  const auto tight = scalar_problem(1e-12);
  const auto r = minimize(tight, scalar_control(0.0));
  CHECK(std::abs(innovation(tight, r.analysis)[0]) <= 1e-6);
}

TEST_CASE("analysis is never worse than the initial or background control") {
  std::mt19937_64 rng(555);
  for (int trial = 0; trial < 30; ++trial) {
    auto gc = random_grid(rng);
    const auto r = minimize(gc.problem, gc.probe);
    CHECK(r.final_cost <= cost(gc.probe, gc.problem));
    CHECK(r.final_cost <= cost(gc.problem.background(), gc.problem));
    CHECK(r.final_cost >= 0.0);
    CHECK(r.final_cost == doctest::Approx(cost(r.analysis, gc.problem)).epsilon(1e-14));
    if (r.converged) CHECK(r.gradient_norm <= r.tolerance);
  }
}

TEST_CASE("observation order does not change cost or gradient") {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 20; ++trial) {
    auto gc = random_grid(rng);
    const auto& pr = gc.problem;
    const auto& locs = gc.op->locations();
    const auto& obs = pr.observations();
    std::vector<std::size_t> perm(locs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> plocs;
    std::vector<RadianceObservation> pobs;
    for (std::size_t i : perm) {
      plocs.push_back(locs[i]);
      pobs.push_back(obs[i]);
    }
    auto bias = radiance::BiasModel::from_names(0.0, {0.0, 0.0}, {"surface_temperature", "scan_position"});
    auto pop = std::make_shared<GridColumnOperator>(pr.background_state().size() / 2, plocs, bias,
                                                    radiance::ForwardOperatorParams{});
    const AssimilationProblem pp(pr.background_state(), pr.background_bias(), pr.state_covariance(),
                                 pr.bias_covariance(), observation_covariance(pobs), pobs, pop);
    const double j = cost(gc.probe, pr), jp = cost(gc.probe, pp);
    CHECK(std::abs(j - jp) <= 1e-10 * std::max(1.0, j));
    CHECK((packed(gradient(gc.probe, pr)) - packed(gradient(gc.probe, pp))).norm() <=
          1e-10 * std::max(1.0, packed(gradient(gc.probe, pr)).norm()));
  }
}

TEST_CASE("observation order does not change the analysis") {
  // resolved well past the default stopping rule so both orders reach the same minimizer
  MinimizerOptions tight;
  tight.relative_tolerance = 1e-14;
  std::mt19937_64 rng(314);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_linear(rng, trial % 2 == 0);
    const auto& op = *c.op;
    const Eigen::Index ny = op.h().rows();
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(ny));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd h(ny, op.h().cols()), p(ny, op.predictor_matrix().cols());
    VectorXd off(ny), rv(ny);
    std::vector<RadianceObservation> pobs;
    const VectorXd r = c.problem.observation_covariance().dense().diagonal();
    for (Eigen::Index i = 0; i < ny; ++i) {
      const Eigen::Index k = perm[static_cast<std::size_t>(i)];
      h.row(i) = op.h().row(k);
      p.row(i) = op.predictor_matrix().row(k);
      off[i] = op.offset()[k];
      rv[i] = r[k];
      pobs.push_back(c.problem.observations()[static_cast<std::size_t>(k)]);
    }
    const AssimilationProblem pp(c.problem.background_state(), c.problem.background_bias(),
                                 c.problem.state_covariance(), c.problem.bias_covariance(), Covariance::diagonal(rv),
                                 pobs, std::make_shared<LinearOperator>(h, off, p));
    const auto a = minimize(c.problem, c.problem.background(), tight);
    const auto b = minimize(pp, pp.background(), tight);
    CHECK(std::abs(a.final_cost - b.final_cost) <= 1e-10 * std::max(1.0, a.final_cost));
    CHECK((packed(a.analysis) - packed(b.analysis)).norm() <= 1e-10 * std::max(1.0, packed(a.analysis).norm()));
  }
}

TEST_CASE("non-finite cost at the start is reported with the last finite control") {
  auto op = std::make_shared<GridColumnOperator>(4, std::vector<std::size_t>{0}, radiance::BiasModel{},
                                                 radiance::ForwardOperatorParams{});
  VectorXd x(8);
  x << -400, 0, 0, 0, 10, 10, 10, 10;  // T_surf below 0 K
  const AssimilationProblem p(x, VectorXd::Zero(1), Covariance::scaled_identity(8, 1.0),
                              Covariance::scaled_identity(1, 1.0), Covariance::scaled_identity(1, 1.0),
                              make_obs(VectorXd::Constant(1, 250.0)), op);
  CHECK(std::isnan(cost(p.background(), p)));
  try {
    minimize(p, p.background());
    FAIL("expected NonFiniteCostError");
  } catch (const NonFiniteCostError& e) {
    CHECK(e.last_finite().state == x);
  }
}

TEST_CASE("minimizer trace and determinism") {
  std::mt19937_64 rng(9);
  auto gc = random_grid(rng);
  std::ostringstream trace;
  MinimizerOptions opt;
  opt.trace = &trace;
  const auto a = minimize(gc.problem, gc.problem.background(), opt);
  const auto b = minimize(gc.problem, gc.problem.background());
  CHECK(packed(a.analysis) == packed(b.analysis));
  CHECK(a.iterations == b.iterations);
  const std::string lines = trace.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == a.iterations);
}
