#pragma once

// 23.8 GHz observation operator and its bias-corrected extension
//   H^(x, beta) = H(x) + beta_0 + sum_i beta_i p_i

#include <functional>
#include <string>
#include <vector>

#include "wxleak/leakage_link.hpp"

namespace wxleak::radiance {

/// Model state at one observation location.
struct ColumnState {
  double water_vapor = 0.0;             // kg/m^2, column integrated
  double surface_temperature = 0.0;     // K
  double atmosphere_temperature = 0.0;  // K

  void validate() const;
};

class ForwardOperatorParams {
 public:
  explicit ForwardOperatorParams(double opacity_coefficient = 0.05);
  double opacity_coefficient() const { return kappa_; }

 private:
  double kappa_;
};

struct RadianceObservation {
  leakage::ChannelSpec channel = leakage::ChannelSpec::sensing_23g8();
  double value = 0.0;                 // K
  double error_stddev = 0.3;          // K
  double scan_position = 0.0;
  double applied_perturbation = 0.0;  // K, bookkeeping only

  void validate() const;
};

/// Predictor value together with its sensitivity to the column state, so the
/// variational gradient sees state-dependent predictors.
struct PredictorValue {
  double value = 0.0;
  double d_surface_temperature = 0.0;
  double d_atmosphere_temperature = 0.0;
  double d_water_vapor = 0.0;
};

struct Predictor {
  std::string name;
  std::function<PredictorValue(const ColumnState&, const RadianceObservation&)> evaluate;
};

/// Built-in predictors: "surface_temperature" and "scan_position".
/// Throws ConfigError for unknown names.
Predictor make_predictor(const std::string& name);
std::vector<std::string> builtin_predictor_names();

class BiasModel {
 public:
  BiasModel() = default;
  BiasModel(double constant, std::vector<double> coefficients, std::vector<Predictor> predictors);

  /// Convenience: predictors looked up by name.
  static BiasModel from_names(double constant, std::vector<double> coefficients,
                              const std::vector<std::string>& predictor_names);

  double constant() const { return constant_; }
  const std::vector<double>& coefficients() const { return coefficients_; }
  const std::vector<Predictor>& predictors() const { return predictors_; }
  std::size_t predictor_count() const { return predictors_.size(); }
  std::vector<std::string> predictor_names() const;

  /// Same predictors, new coefficients. `packed` is [beta_0, beta_1, ...].
  BiasModel with_packed(const std::vector<double>& packed) const;
  std::vector<double> packed() const;

 private:
  double constant_ = 0.0;
  std::vector<double> coefficients_;
  std::vector<Predictor> predictors_;
};

/// Maps a temperature anomaly and moisture value from the forecast grid onto a
/// column. Reporting convention: T_surf = anomaly + offset, T_atm = T_surf + lapse.
struct ColumnMapping {
  double temperature_offset_k = 273.0;
  double atmosphere_lapse_k = -30.0;

  /// Moisture is clamped at 0.
  ColumnState column(double temperature_anomaly, double moisture) const;
};

/// T_b = T_surf e^{-kq} + T_atm (1 - e^{-kq})
double forward(const ColumnState& state, const ForwardOperatorParams& params);

/// dT_b/dq
double forward_tangent(const ColumnState& state, const ForwardOperatorParams& params);

struct ForwardJacobian {
  double d_surface_temperature;
  double d_atmosphere_temperature;
  double d_water_vapor;
};
ForwardJacobian forward_jacobian(const ColumnState& state, const ForwardOperatorParams& params);

std::vector<double> predictors(const ColumnState& state, const RadianceObservation& obs,
                               const BiasModel& bias);

double bias_corrected_forward(const ColumnState& state, const BiasModel& bias,
                              const RadianceObservation& obs, const ForwardOperatorParams& params);

}  // namespace wxleak::radiance
