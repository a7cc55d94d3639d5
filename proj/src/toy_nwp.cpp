#include "wxleak/toy_nwp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wxleak/random.hpp"

namespace wxleak::nwp {

void ModelState::validate() const {
  if (temperature.size() != moisture.size())
    throw ValidationError("model state field lengths differ");
  if (temperature.size() < 4) throw ValidationError("model state needs at least 4 grid points");
  for (std::size_t k = 0; k < size(); ++k) {
    if (!std::isfinite(temperature[k]) || !std::isfinite(moisture[k]))
      throw ValidationError("model state is not finite at grid point " + std::to_string(k));
    if (moisture[k] < 0.0) throw ValidationError("negative moisture at grid point " + std::to_string(k));
  }
}

void ModelParams::validate() const {
  if (!(dt > 0.0)) throw ValidationError("model dt must be > 0");
  if (!(moisture_coupling >= 0.0) || !(condensation_rate >= 0.0))
    throw ValidationError("model rates must be >= 0");
  if (!std::isfinite(forcing) || !std::isfinite(condensation_threshold))
    throw ValidationError("model forcing and condensation threshold must be finite");
}

Tendency tendency(const ModelState& s, const ModelParams& p) {
  const std::size_t n = s.size();
  const auto& t = s.temperature;
  const auto& q = s.moisture;
  auto at = [n](std::size_t k, std::ptrdiff_t off) {
    return static_cast<std::size_t>((static_cast<std::ptrdiff_t>(k + n) + off) % static_cast<std::ptrdiff_t>(n));
  };

  // flux[k] lives on the interface between k and k+1
  std::vector<double> flux(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = at(k, 1);
    const double u = 0.5 * (t[k] + t[r]);
    flux[k] = u > 0.0 ? u * q[k] : u * q[r];
  }

  Tendency out{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.temperature[k] = (t[at(k, 1)] - t[at(k, -2)]) * t[at(k, -1)] - t[k] + p.forcing +
                         p.moisture_coupling * q[k];
    out.moisture[k] = -(flux[k] - flux[at(k, -1)]) -
                      p.condensation_rate * std::max(0.0, q[k] - p.condensation_threshold);
  }
  return out;
}

namespace {

ModelState axpy(const ModelState& s, double a, const Tendency& k) {
  ModelState out = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.temperature[i] += a * k.temperature[i];
    out.moisture[i] += a * k.moisture[i];
  }
  return out;
}

}  // namespace

ModelState step(const ModelState& s, const ModelParams& p) {
  const double h = p.dt;
  const Tendency k1 = tendency(s, p);
  const Tendency k2 = tendency(axpy(s, 0.5 * h, k1), p);
  const Tendency k3 = tendency(axpy(s, 0.5 * h, k2), p);
  const Tendency k4 = tendency(axpy(s, h, k3), p);

  ModelState out = s;
  bool finite = true;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.temperature[i] += h / 6.0 *
                          (k1.temperature[i] + 2.0 * k2.temperature[i] + 2.0 * k3.temperature[i] + k4.temperature[i]);
    out.moisture[i] +=
        h / 6.0 * (k1.moisture[i] + 2.0 * k2.moisture[i] + 2.0 * k3.moisture[i] + k4.moisture[i]);
    out.moisture[i] = std::max(0.0, out.moisture[i]);
    finite = finite && std::isfinite(out.temperature[i]) && std::isfinite(out.moisture[i]);
  }
  if (!finite) throw BlowUpError("model state blew up (non-finite); dt may be too large", 0);
  return out;
}

Trajectory integrate(const ModelState& state, const ModelParams& params, std::size_t n_steps,
                     double start_time) {
  state.validate();
  params.validate();
  Trajectory traj;
  traj.states.reserve(n_steps + 1);
  traj.times.reserve(n_steps + 1);
  traj.states.push_back(state);
  traj.times.push_back(start_time);
  for (std::size_t i = 0; i < n_steps; ++i) {
    try {
      traj.states.push_back(step(traj.states.back(), params));
    } catch (const BlowUpError&) {
      throw BlowUpError("model state blew up at step " + std::to_string(i + 1) + " (dt=" +
                            std::to_string(params.dt) + ")",
                        i + 1);
    }
    traj.times.push_back(start_time + static_cast<double>(i + 1) * params.dt);
  }
  return traj;
}

ForecastDiagnostics diagnostics(const Trajectory& trajectory, const ModelParams& params) {
  if (trajectory.states.empty()) throw ValidationError("diagnostics need a non-empty trajectory");
  const std::size_t n = trajectory.front().size();
  ForecastDiagnostics d{std::vector<double>(n, 0.0), std::vector<double>(n)};
  for (std::size_t s = 0; s + 1 < trajectory.size(); ++s) {
    const auto& q = trajectory.states[s].moisture;
    for (std::size_t k = 0; k < n; ++k)
      d.accumulated_precipitation[k] +=
          params.condensation_rate * std::max(0.0, q[k] - params.condensation_threshold) * params.dt;
  }
  const auto& t = trajectory.back().temperature;
  for (std::size_t k = 0; k < n; ++k) d.two_meter_temperature[k] = t[k] + kReportingOffsetK;
  return d;
}

Trajectory nature_run(const ModelParams& params, std::uint64_t seed, std::size_t spinup_steps,
                      std::size_t run_steps, const NatureRunOptions& options) {
  GaussianStream rng(seed);
  ModelState s;
  s.temperature.resize(options.grid_size);
  s.moisture.resize(options.grid_size);
  for (std::size_t k = 0; k < options.grid_size; ++k)
    s.temperature[k] = params.forcing + options.temperature_perturbation * rng.normal();
  for (std::size_t k = 0; k < options.grid_size; ++k)
    s.moisture[k] = std::max(0.0, options.initial_moisture + options.moisture_perturbation * rng.normal());
  s.validate();
  const ModelState spun = integrate(s, params, spinup_steps).back();
  return integrate(spun, params, run_steps);
}

std::vector<std::size_t> alternate_locations(std::size_t grid_size) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < grid_size; k += 2) out.push_back(k);
  return out;
}

std::vector<radiance::RadianceObservation> synthesize_observations(
    const ModelState& truth, const ObservationSetup& setup, std::uint64_t noise_seed, double delta_tb_k,
    std::span<const std::size_t> locations) {
  truth.validate();
  GaussianStream rng(noise_seed);
  std::vector<radiance::RadianceObservation> out;
  out.reserve(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) {
    const std::size_t loc = locations[i];
    if (loc >= truth.size())
      throw ValidationError("observation location " + std::to_string(loc) + " outside grid");
    radiance::RadianceObservation obs;
    obs.error_stddev = setup.error_stddev;
    obs.scan_position = static_cast<double>(i);
    const auto col = setup.mapping.column(truth.temperature[loc], truth.moisture[loc]);
    const double clean = radiance::bias_corrected_forward(col, setup.true_bias, obs, setup.forward);
    obs.value = clean + setup.error_stddev * rng.normal() + delta_tb_k;
    obs.applied_perturbation = delta_tb_k;
    obs.validate();
    out.push_back(obs);
  }
  return out;
}

}  // namespace wxleak::nwp
