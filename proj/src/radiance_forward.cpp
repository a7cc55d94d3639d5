#include "wxleak/radiance_forward.hpp"

#include <algorithm>
#include <cmath>

#include "wxleak/error.hpp"

namespace wxleak::radiance {

void ColumnState::validate() const {
  if (!(water_vapor >= 0.0) || !std::isfinite(water_vapor))
    throw ValidationError("column water vapor must be finite and >= 0");
  if (!(surface_temperature > 0.0) || !std::isfinite(surface_temperature))
    throw ValidationError("surface temperature must be > 0 K");
  if (!(atmosphere_temperature > 0.0) || !std::isfinite(atmosphere_temperature))
    throw ValidationError("atmosphere temperature must be > 0 K");
}

ForwardOperatorParams::ForwardOperatorParams(double opacity_coefficient) : kappa_(opacity_coefficient) {
  if (!(kappa_ > 0.0) || !std::isfinite(kappa_))
    throw ValidationError("opacity coefficient must be > 0");
}

void RadianceObservation::validate() const {
  if (!(error_stddev > 0.0)) throw ValidationError("observation error_stddev must be > 0");
  if (!std::isfinite(value)) throw ValidationError("observation value must be finite");
}

Predictor make_predictor(const std::string& name) {
  if (name == "surface_temperature") {
    return {name, [](const ColumnState& c, const RadianceObservation&) {
              return PredictorValue{c.surface_temperature, 1.0, 0.0, 0.0};
            }};
  }
  if (name == "scan_position") {
    return {name, [](const ColumnState&, const RadianceObservation& o) {
              return PredictorValue{o.scan_position, 0.0, 0.0, 0.0};
            }};
  }
  throw ConfigError("unknown bias predictor '" + name + "'");
}

std::vector<std::string> builtin_predictor_names() { return {"surface_temperature", "scan_position"}; }

BiasModel::BiasModel(double constant, std::vector<double> coefficients, std::vector<Predictor> predictors)
    : constant_(constant), coefficients_(std::move(coefficients)), predictors_(std::move(predictors)) {
  if (coefficients_.size() != predictors_.size())
    throw ValidationError("bias model has " + std::to_string(coefficients_.size()) +
                          " coefficients for " + std::to_string(predictors_.size()) + " predictors");
  if (!std::isfinite(constant_) ||
      !std::all_of(coefficients_.begin(), coefficients_.end(), [](double b) { return std::isfinite(b); }))
    throw ValidationError("bias coefficients must be finite");
  for (const auto& p : predictors_)
    if (!p.evaluate) throw ValidationError("predictor '" + p.name + "' has no evaluator");
}

BiasModel BiasModel::from_names(double constant, std::vector<double> coefficients,
                                const std::vector<std::string>& predictor_names) {
  std::vector<Predictor> preds;
  preds.reserve(predictor_names.size());
  for (const auto& n : predictor_names) preds.push_back(make_predictor(n));
  return BiasModel(constant, std::move(coefficients), std::move(preds));
}

std::vector<std::string> BiasModel::predictor_names() const {
  std::vector<std::string> out;
  for (const auto& p : predictors_) out.push_back(p.name);
  return out;
}

BiasModel BiasModel::with_packed(const std::vector<double>& packed) const {
  if (packed.size() != predictors_.size() + 1)
    throw ValidationError("packed bias vector has wrong length");
  return BiasModel(packed.front(), std::vector<double>(packed.begin() + 1, packed.end()), predictors_);
}

std::vector<double> BiasModel::packed() const {
  std::vector<double> out{constant_};
  out.insert(out.end(), coefficients_.begin(), coefficients_.end());
  return out;
}

ColumnState ColumnMapping::column(double temperature_anomaly, double moisture) const {
  const double t_surf = temperature_anomaly + temperature_offset_k;
  return {std::max(moisture, 0.0), t_surf, t_surf + atmosphere_lapse_k};
}

double forward(const ColumnState& state, const ForwardOperatorParams& params) {
  state.validate();
  const double trans = std::exp(-params.opacity_coefficient() * state.water_vapor);
  return state.surface_temperature * trans + state.atmosphere_temperature * (1.0 - trans);
}

double forward_tangent(const ColumnState& state, const ForwardOperatorParams& params) {
  state.validate();
  const double k = params.opacity_coefficient();
  return k * (state.atmosphere_temperature - state.surface_temperature) * std::exp(-k * state.water_vapor);
}

ForwardJacobian forward_jacobian(const ColumnState& state, const ForwardOperatorParams& params) {
  const double trans = std::exp(-params.opacity_coefficient() * state.water_vapor);
  return {trans, 1.0 - trans, forward_tangent(state, params)};
}

std::vector<double> predictors(const ColumnState& state, const RadianceObservation& obs,
                               const BiasModel& bias) {
  std::vector<double> out;
  out.reserve(bias.predictor_count());
  for (const auto& p : bias.predictors()) out.push_back(p.evaluate(state, obs).value);
  return out;
}

double bias_corrected_forward(const ColumnState& state, const BiasModel& bias,
                              const RadianceObservation& obs, const ForwardOperatorParams& params) {
  double correction = bias.constant();
  const auto p = predictors(state, obs, bias);
  for (std::size_t i = 0; i < p.size(); ++i) correction += bias.coefficients()[i] * p[i];
  return forward(state, params) + correction;
}

}  // namespace wxleak::radiance
