#pragma once

// Moist Lorenz-96 forecast model and the synthetic-truth (OSSE) harness.
//
//   dT_k/dt = (T_{k+1} - T_{k-2}) T_{k-1} - T_k + F + c_q q_k
//   dq_k/dt = -(Phi_{k+1/2} - Phi_{k-1/2}) - r max(0, q_k - q_c)
//
// Phi is the first-order upwind moisture flux carried by the interface
// velocity u_{k+1/2} = (T_k + T_{k+1}) / 2. Indices are cyclic. Moisture is
// clipped at zero after every RK4 step.
//
// Reporting conventions (never used in the dynamics): one state unit of
// condensed moisture is 1 mm of precipitation, and temperature anomalies are
// reported as T + 273 K.

#include <cstdint>
#include <span>
#include <vector>

#include "wxleak/error.hpp"
#include "wxleak/radiance_forward.hpp"

namespace wxleak::nwp {

inline constexpr double kReportingOffsetK = 273.0;

struct ModelState {
  std::vector<double> temperature;
  std::vector<double> moisture;

  std::size_t size() const { return temperature.size(); }
  /// Lengths equal, N >= 4, all finite, moisture >= 0.
  void validate() const;

  bool operator==(const ModelState&) const = default;
};

struct ModelParams {
  double forcing = 8.0;
  double moisture_coupling = 0.1;
  double condensation_threshold = 25.0;
  double condensation_rate = 0.2;
  double dt = 0.01;

  void validate() const;
};

struct Tendency {
  std::vector<double> temperature;
  std::vector<double> moisture;
};

Tendency tendency(const ModelState& state, const ModelParams& params);

class BlowUpError : public RuntimeError {
 public:
  BlowUpError(const std::string& what, std::size_t step) : RuntimeError(what), step_(step) {}
  std::size_t step_index() const { return step_; }

 private:
  std::size_t step_;
};

/// One RK4 step. Throws BlowUpError if the result is not finite.
ModelState step(const ModelState& state, const ModelParams& params);

struct Trajectory {
  std::vector<ModelState> states;
  std::vector<double> times;

  const ModelState& front() const { return states.front(); }
  const ModelState& back() const { return states.back(); }
  std::size_t size() const { return states.size(); }
};

/// n_steps + 1 states starting at `start_time`.
Trajectory integrate(const ModelState& state, const ModelParams& params, std::size_t n_steps,
                     double start_time = 0.0);

struct ForecastDiagnostics {
  std::vector<double> accumulated_precipitation;  // mm
  std::vector<double> two_meter_temperature;      // K
};

/// Precipitation accumulates r max(0, q_k - q_c) dt over each step using the
/// state at the start of the step.
ForecastDiagnostics diagnostics(const Trajectory& trajectory, const ModelParams& params);

struct NatureRunOptions {
  std::size_t grid_size = 40;
  double initial_moisture = 20.0;
  double temperature_perturbation = 1.0;
  double moisture_perturbation = 1.0;
};

/// Seeded perturbation around T = F, spun up, then recorded for run_steps.
Trajectory nature_run(const ModelParams& params, std::uint64_t seed, std::size_t spinup_steps,
                      std::size_t run_steps, const NatureRunOptions& options = {});

/// Every other grid point: 0, 2, 4, ...
std::vector<std::size_t> alternate_locations(std::size_t grid_size);

struct ObservationSetup {
  radiance::ForwardOperatorParams forward;
  radiance::ColumnMapping mapping;
  radiance::BiasModel true_bias;
  double error_stddev = 0.3;
};

/// y_i = H^(truth at locations[i], true bias) + N(0, sigma) + delta_tb.
/// Noise draws come from GaussianStream(noise_seed), one per observation in
/// order; scan_position of observation i is i.
std::vector<radiance::RadianceObservation> synthesize_observations(
    const ModelState& truth, const ObservationSetup& setup, std::uint64_t noise_seed, double delta_tb_k,
    std::span<const std::size_t> locations);

}  // namespace wxleak::nwp
