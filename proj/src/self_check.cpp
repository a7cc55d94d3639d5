#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "wxleak/experiment.hpp"
#include "wxleak/var_assim.hpp"

namespace wxleak::experiment {

namespace {

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

CheckResult noise_linearity() {
  const auto ch = leakage::ChannelSpec::sensing_23g8();
  const leakage::LinkBudget link;
  double worst = 0.0;
  for (double level = -60.0; level <= -10.0; level += 0.5) {
    const double t1 = leakage::induced_noise_temperature(leakage::received_power(level, link), ch).value_k;
    const double t10 = leakage::induced_noise_temperature(leakage::received_power(level + 10.0, link), ch).value_k;
    const double p = leakage::received_power(level, link);
    const double t2 = leakage::induced_noise_temperature(2.0 * p, ch).value_k;
    worst = std::max({worst, rel(t10, 10.0 * t1), rel(t2, 2.0 * t1)});
  }
  return {"noise temperature linearity and decade law", worst <= 1e-9, "max rel err " + sci(worst)};
}

CheckResult antenna_relation() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> eta(0.0, 1.0), temp(2.7, 400.0), noise(0.0, 5.0);
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const double e = i == 0 ? 0.0 : (i == 1 ? 1.0 : eta(rng));
    const auto a = leakage::AntennaModel::from_efficiency(e, temp(rng));
    const double tb = temp(rng);
    const double ta = leakage::antenna_temperature(tb, a);
    const double lo = std::min(tb, a.physical_temperature()), hi = std::max(tb, a.physical_temperature());
    if (ta < lo - 1e-9 * hi || ta > hi + 1e-9 * hi) ++failures;
    if (e > 0.0) {
      const leakage::NoiseTemperature n{noise(rng), 0.0, 0.0};
      const double dtb = leakage::brightness_perturbation(n, a);
      const double back = leakage::antenna_temperature(tb + dtb, a) - ta;
      if (std::abs(back - n.value_k) > 1e-9 * std::max(1.0, n.value_k) + 1e-12 * hi) ++failures;
    }
  }
  return {"antenna temperature bounds and perturbation round trip", failures == 0,
          std::to_string(failures) + " failures in 10000"};
}

CheckResult mask_additivity() {
  const auto mask = leakage::EmissionMask::default_n258();
  const auto agg = leakage::ChannelSpec::n258();
  const auto vic = leakage::ChannelSpec::sensing_23g8();
  const double whole = leakage::aci_leakage_fraction(mask, agg, vic);
  const double mid = vic.center_frequency();
  const double parts = leakage::aci_leakage_fraction(mask, agg, leakage::ChannelSpec::from_edges(vic.f_low(), mid)) +
                       leakage::aci_leakage_fraction(mask, agg, leakage::ChannelSpec::from_edges(mid, vic.f_high()));
  const double err = std::abs(whole - parts);
  return {"mask sub-band additivity", err <= 1e-6 && whole >= 0.0 && whole <= 1.0, "abs err " + sci(err)};
}

CheckResult tangent_vs_fd() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> q(0.0, 60.0), t(200.0, 310.0);
  const radiance::ForwardOperatorParams params;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    radiance::ColumnState s{q(rng), t(rng), t(rng)};
    const double h = 1e-4 * std::max(1.0, s.water_vapor);
    auto up = s, dn = s;
    up.water_vapor += h;
    dn.water_vapor = std::max(0.0, s.water_vapor - h);
    const double fd = (radiance::forward(up, params) - radiance::forward(dn, params)) / (up.water_vapor - dn.water_vapor);
    const double an = radiance::forward_tangent(s, params);
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-6));
  }
  return {"forward tangent vs finite differences", worst <= 1e-6, "max rel err " + sci(worst)};
}

CheckResult gradient_vs_fd() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 8;
    const auto locs = nwp::alternate_locations(n);
    auto bias = radiance::BiasModel::from_names(0.0, {0.0, 0.0}, {"surface_temperature", "scan_position"});
    auto op = std::make_shared<var::GridColumnOperator>(n, locs, bias, radiance::ForwardOperatorParams{});
    var::VectorXd xb(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
      xb[static_cast<Eigen::Index>(k)] = 2.0 + 3.0 * z(rng);
      xb[static_cast<Eigen::Index>(n + k)] = 20.0 + 5.0 * z(rng);
    }
    std::vector<radiance::RadianceObservation> obs(locs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      obs[i].value = 260.0 + 5.0 * z(rng);
      obs[i].scan_position = static_cast<double>(i);
    }
    var::VectorXd bb(3);
    bb << 0.1 * z(rng), 0.001 * z(rng), 0.01 * z(rng);
    var::AssimilationProblem p(xb, bb, var::Covariance::scaled_identity(2 * n, 1.0),
                               var::Covariance::scaled_identity(3, 0.5), var::observation_covariance(obs), obs, op);
    var::Control c{xb, bb};
    for (auto& v : c.state) v += 0.5 * z(rng);
    for (auto& v : c.bias) v += 0.01 * z(rng);
    const var::Control g = var::gradient(c, p);
    auto probe = [&](var::VectorXd& vec, Eigen::Index i, double an) {
      const double h = 1e-5 * std::max(1.0, std::abs(vec[i]));
      const double orig = vec[i];
      vec[i] = orig + h;
      const double fp = var::cost(c, p);
      vec[i] = orig - h;
      const double fm = var::cost(c, p);
      vec[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(an), std::abs(fd), 1e-2}));
    };
    for (Eigen::Index i = 0; i < c.state.size(); ++i) probe(c.state, i, g.state[i]);
    for (Eigen::Index i = 0; i < c.bias.size(); ++i) probe(c.bias, i, g.bias[i]);
  }
  return {"cost gradient vs finite differences", worst <= 1e-6, "max rel err " + sci(worst)};
}

CheckResult rk4_order() {
  nwp::ModelParams p;
  nwp::ModelState s;
  const std::size_t n = 40;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = 2.0 * 3.141592653589793 * static_cast<double>(k) / static_cast<double>(n);
    s.temperature.push_back(p.forcing + 0.1 * std::sin(3.0 * x));
    s.moisture.push_back(10.0 + 2.0 * std::cos(2.0 * x));
  }
  auto at_one = [&](double dt) {
    auto q = p;
    q.dt = dt;
    return nwp::integrate(s, q, static_cast<std::size_t>(std::lround(1.0 / dt)), 0.0).back();
  };
  const auto ref = at_one(0.00125);
  auto err = [&](double dt) {
    const auto x = at_one(dt);
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      ss += std::pow(x.temperature[k] - ref.temperature[k], 2) + std::pow(x.moisture[k] - ref.moisture[k], 2);
    return std::sqrt(ss);
  };
  const double e1 = err(0.02), e2 = err(0.01), e3 = err(0.005);
  const double r1 = e1 / e2, r2 = e2 / e3;
  const bool ok = r1 >= 12.0 && r1 <= 20.0 && r2 >= 12.0 && r2 <= 20.0;
  return {"RK4 fourth-order self-convergence", ok, "ratios " + sci(r1) + ", " + sci(r2)};
}

}  // namespace

std::vector<CheckResult> run_self_check() {
  return {noise_linearity(), antenna_relation(), mask_additivity(), tangent_vs_fd(), gradient_vs_fd(), rk4_order()};
}

}  // namespace wxleak::experiment
