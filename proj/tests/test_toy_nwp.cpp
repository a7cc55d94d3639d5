#include <cmath>
#include <random>

#include "doctest.h"
#include "wxleak/error.hpp"
#include "wxleak/random.hpp"
#include "wxleak/toy_nwp.hpp"

using namespace wxleak;
using namespace wxleak::nwp;

namespace {

ModelState random_state(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> t(0.0, 4.0);
  std::uniform_real_distribution<double> q(0.0, 40.0);
  ModelState s;
  for (std::size_t k = 0; k < n; ++k) {
    s.temperature.push_back(8.0 + t(rng));
    s.moisture.push_back(q(rng));
  }
  return s;
}

// Right-hand side written out directly from the model equations.
void reference_rhs(const ModelState& s, const ModelParams& p, std::vector<double>& dt, std::vector<double>& dq) {
  const int n = static_cast<int>(s.size());
  auto T = [&](int k) { return s.temperature[static_cast<std::size_t>(((k % n) + n) % n)]; };
  auto Q = [&](int k) { return s.moisture[static_cast<std::size_t>(((k % n) + n) % n)]; };
  auto phi = [&](int k) {  // flux through the face between k and k+1
    const double u = (T(k) + T(k + 1)) / 2.0;
    return u > 0.0 ? u * Q(k) : u * Q(k + 1);
  };
  dt.assign(s.size(), 0.0);
  dq.assign(s.size(), 0.0);
  for (int k = 0; k < n; ++k) {
    dt[static_cast<std::size_t>(k)] =
        (T(k + 1) - T(k - 2)) * T(k - 1) - T(k) + p.forcing + p.moisture_coupling * Q(k);
    const double cond = Q(k) > p.condensation_threshold ? Q(k) - p.condensation_threshold : 0.0;
    dq[static_cast<std::size_t>(k)] = -(phi(k) - phi(k - 1)) - p.condensation_rate * cond;
  }
}

double spatial_variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("state and parameter validation") {
  ModelState s{{1, 2, 3}, {0, 0, 0}};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {{1, 2, 3, 4}, {0, 0, 0}};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {{1, 2, 3, 4}, {0, -1, 0, 0}};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {{1, 2, NAN, 4}, {0, 0, 0, 0}};
  CHECK_THROWS_AS(s.validate(), ValidationError);

  ModelParams p;
  p.dt = 0.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.condensation_rate = -0.1;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.moisture_coupling = -1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("dry Lorenz-96 fixed point") {
  ModelParams p;
  p.moisture_coupling = 0.0;
  const ModelState s{std::vector<double>(40, p.forcing), std::vector<double>(40, 0.0)};
  const ModelState out = step(s, p);
  for (std::size_t k = 0; k < 40; ++k) {
    CHECK(std::abs(out.temperature[k] - p.forcing) <= 1e-12);
    CHECK(out.moisture[k] == 0.0);
  }
}

TEST_CASE("tendency agrees with a direct transcription of the equations") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_state(rng, 4 + static_cast<std::size_t>(trial % 37));
    ModelParams p;
    p.moisture_coupling = 0.05 + 0.01 * trial;
    const auto got = tendency(s, p);
    std::vector<double> dt, dq;
    reference_rhs(s, p, dt, dq);
    for (std::size_t k = 0; k < s.size(); ++k) {
      CHECK(std::abs(got.temperature[k] - dt[k]) <= 1e-12 * std::max(1.0, std::abs(dt[k])));
      CHECK(std::abs(got.moisture[k] - dq[k]) <= 1e-12 * std::max(1.0, std::abs(dq[k])));
    }
  }
}

TEST_CASE("moisture advection conserves total moisture without condensation") {
  std::mt19937_64 rng(4);
  auto s = random_state(rng, 40);
  for (auto& q : s.moisture) q = std::min(q, 20.0);
  const auto t = tendency(s, ModelParams{});
  double total = 0.0;
  for (double v : t.moisture) total += v;
  CHECK(std::abs(total) <= 1e-10);
}

TEST_CASE("step is deterministic and keeps moisture non-negative") {
  std::mt19937_64 rng(23);
  const auto s = random_state(rng, 40);
  const ModelParams p;
  CHECK(step(s, p) == step(s, p));
  auto x = s;
  for (int i = 0; i < 2000; ++i) {
    x = step(x, p);
    for (double q : x.moisture) REQUIRE(q >= 0.0);
  }
}

TEST_CASE("blow-up is reported with the step index") {
  std::mt19937_64 rng(3);
  const auto s = random_state(rng, 40);
  ModelParams p;
  p.dt = 5.0;
  try {
    integrate(s, p, 100);
    FAIL("expected BlowUpError");
  } catch (const BlowUpError& e) {
    CHECK(e.step_index() < 100);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("integrate") {
  std::mt19937_64 rng(5);
  const auto s = random_state(rng, 40);
  const ModelParams p;

  const auto zero = integrate(s, p, 0);
  CHECK(zero.size() == 1);
  CHECK(zero.front() == s);
  CHECK(zero.times == std::vector<double>{0.0});

  const auto whole = integrate(s, p, 300);
  CHECK(whole.size() == 301);
  for (std::size_t i = 1; i < whole.times.size(); ++i) {
    CHECK(whole.times[i] > whole.times[i - 1]);
    CHECK(whole.times[i] == doctest::Approx(static_cast<double>(i) * p.dt).epsilon(1e-12));
  }

  const auto first = integrate(s, p, 120);
  const auto second = integrate(first.back(), p, 180, first.times.back());
  for (std::size_t i = 0; i <= 120; ++i) CHECK(first.states[i] == whole.states[i]);
  for (std::size_t i = 0; i <= 180; ++i) CHECK(second.states[i] == whole.states[120 + i]);
}

TEST_CASE("RK4 converges at fourth order from a smooth state") {
  ModelParams p;
  ModelState s;
  const std::size_t n = 40;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    s.temperature.push_back(p.forcing + 0.1 * std::sin(3.0 * x));
    s.moisture.push_back(10.0 + 2.0 * std::cos(2.0 * x));
  }
  auto at_one = [&](double dt) {
    auto q = p;
    q.dt = dt;
    return integrate(s, q, static_cast<std::size_t>(std::lround(1.0 / dt))).back();
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
  CHECK(e1 / e2 >= 12.0);
  CHECK(e1 / e2 <= 20.0);
  CHECK(e2 / e3 >= 12.0);
  CHECK(e2 / e3 <= 20.0);
}

TEST_CASE("diagnostics") {
  const ModelParams p;
  SUBCASE("dry trajectory has no precipitation") {
    std::mt19937_64 rng(1);
    auto s = random_state(rng, 40);
    for (auto& q : s.moisture) q = std::min(q, 5.0);
    const auto d = diagnostics(integrate(s, p, 50), p);
    for (double v : d.accumulated_precipitation) CHECK(v == 0.0);
  }
  SUBCASE("single step above threshold") {
    ModelState s{std::vector<double>(4, 8.0), std::vector<double>(4, 0.0)};
    s.moisture[2] = p.condensation_threshold + 5.0;
    const auto d = diagnostics(integrate(s, p, 1), p);
    CHECK(d.accumulated_precipitation[2] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(d.accumulated_precipitation[0] == 0.0);
  }
  SUBCASE("two-metre temperature is the final temperature plus 273") {
    std::mt19937_64 rng(2);
    const auto tr = integrate(random_state(rng, 12), p, 10);
    const auto d = diagnostics(tr, p);
    for (std::size_t k = 0; k < 12; ++k) CHECK(d.two_meter_temperature[k] == tr.back().temperature[k] + 273.0);
  }
  SUBCASE("precipitation is non-negative and additive over concatenation") {
    std::mt19937_64 rng(9);
    const auto s = random_state(rng, 40);
    const auto a = integrate(s, p, 200);
    const auto b = integrate(a.back(), p, 150, a.times.back());
    const auto whole = integrate(s, p, 350);
    const auto da = diagnostics(a, p), db = diagnostics(b, p), dw = diagnostics(whole, p);
    CHECK(diagnostics(whole, p).accumulated_precipitation == dw.accumulated_precipitation);
    for (std::size_t k = 0; k < 40; ++k) {
      CHECK(dw.accumulated_precipitation[k] >= 0.0);
      CHECK(dw.accumulated_precipitation[k] ==
            doctest::Approx(da.accumulated_precipitation[k] + db.accumulated_precipitation[k]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(diagnostics(Trajectory{}, p), ValidationError);
}

TEST_CASE("nature run") {
  const ModelParams p;
  const auto a = nature_run(p, 11, 500, 20);
  const auto b = nature_run(p, 11, 500, 20);
  CHECK(a.size() == 21);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.states[i] == b.states[i]);

  const auto c0 = nature_run(p, 12, 0, 0);
  const auto a0 = nature_run(p, 11, 0, 0);
  CHECK_FALSE(c0.front() == a0.front());

  // chaotic-regime sanity band for F = 8, N = 40 after the default spin-up
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = nature_run(p, seed, 1000, 0).front();
    const double v = spatial_variance(s.temperature);
    CHECK(v >= 2.0);
    CHECK(v <= 30.0);
  }
}

TEST_CASE("alternate locations") {
  CHECK(alternate_locations(40).size() == 20);
  CHECK(alternate_locations(5) == std::vector<std::size_t>{0, 2, 4});
}

TEST_CASE("synthesize_observations") {
  const ModelParams p;
  const auto truth = nature_run(p, 3, 300, 0).front();
  const auto locs = alternate_locations(truth.size());
  ObservationSetup setup;

  SUBCASE("noiseless identity") {
    setup.error_stddev = 1e-12;
    const auto obs = synthesize_observations(truth, setup, 7, 0.0, locs);
    REQUIRE(obs.size() == locs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const auto col = setup.mapping.column(truth.temperature[locs[i]], truth.moisture[locs[i]]);
      CHECK(std::abs(obs[i].value - radiance::forward(col, setup.forward)) <= 1e-9);
      CHECK(obs[i].scan_position == static_cast<double>(i));
      CHECK(obs[i].error_stddev == 1e-12);
    }
  }
  SUBCASE("uniform offset is exact and seeds repeat") {
    setup.true_bias = radiance::BiasModel::from_names(0.5, {0.01}, {"scan_position"});
    const auto base = synthesize_observations(truth, setup, 7, 0.0, locs);
    const auto again = synthesize_observations(truth, setup, 7, 0.0, locs);
    const auto pert = synthesize_observations(truth, setup, 7, 0.26826, locs);
    const auto other = synthesize_observations(truth, setup, 8, 0.0, locs);
    bool any_diff = false;
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(base[i].value == again[i].value);
      CHECK(pert[i].value - base[i].value == doctest::Approx(0.26826).epsilon(1e-10));
      CHECK(pert[i].applied_perturbation == 0.26826);
      any_diff = any_diff || other[i].value != base[i].value;
    }
    CHECK(any_diff);
  }
  SUBCASE("noise follows the documented stream") {
    setup.error_stddev = 0.3;
    const auto clean = [&] {
      auto s = setup;
      s.error_stddev = 1e-300;
      return synthesize_observations(truth, s, 7, 0.0, locs);
    }();
    const auto obs = synthesize_observations(truth, setup, 7, 0.0, locs);
    GaussianStream g(7);
    for (std::size_t i = 0; i < obs.size(); ++i)
      CHECK(obs[i].value == doctest::Approx(clean[i].value + 0.3 * g.normal()).epsilon(1e-14));
  }
  SUBCASE("out-of-grid location") {
    const std::vector<std::size_t> bad{0, 99};
    CHECK_THROWS_AS(synthesize_observations(truth, setup, 1, 0.0, bad), ValidationError);
  }
}
