#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "wxleak/error.hpp"
#include "wxleak/experiment.hpp"

namespace wxleak::experiment {

using nlohmann::json;

namespace {

json mask_to_json(const leakage::EmissionMask& mask) {
  json bps = json::array();
  for (const auto& b : mask.breakpoints()) bps.push_back(json::array({b.offset_hz, b.psd_db}));
  return bps;
}

double default_truth_coefficient(const std::string& predictor) {
  return predictor == "scan_position" ? 0.01 : 0.0;
}

// Overlays `user` onto `target`, rejecting keys the defaults do not know.
void overlay(json& target, const json& user, const std::string& path, std::set<std::string>& provided) {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    if (!target.contains(key)) throw ConfigError(sub + ": unknown field");
    if (target[key].is_object()) {
      overlay(target[key], value, sub, provided);
    } else {
      target[key] = value;
      provided.insert(sub);
    }
  }
}

void leaf_paths(const json& j, const std::string& path, std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    if (value.is_object())
      leaf_paths(value, sub, out);
    else
      out.push_back(sub);
  }
}

// Typed access with the field path in every error message.
class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& path) const {
    const json* node = &root_;
    std::size_t start = 0;
    while (start <= path.size()) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      node = &node->at(key);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *node;
  }

  double number(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path + ": must be finite");
    return d;
  }

  std::uint64_t unsigned_int(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_number_unsigned())
      throw ConfigError(path + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_array()) throw ConfigError(path + ": expected a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(path + ": expected a list of numbers");
      out.push_back(e.get<double>());
      if (!std::isfinite(out.back())) throw ConfigError(path + ": entries must be finite");
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_array()) throw ConfigError(path + ": expected a list of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(path + ": expected a list of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

 private:
  const json& root_;
};

// Runs `fn`, turning invariant violations into ConfigError tagged with `path`.
template <typename Fn>
auto guarded(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json to_json(const ScenarioConfig& c) {
  json j;
  j["leakage_levels"] = c.leakage_levels;
  j["ensemble_size"] = c.ensemble_size;
  j["forecast_length"] = c.forecast_length;
  j["probe_lead_time"] = c.probe_lead_time;
  j["seeds"] = {{"nature", c.seeds.nature}, {"obs_noise", c.seeds.obs_noise}, {"init", c.seeds.init}};
  j["link"] = {{"distance_km", c.link.distance_km()},
               {"total_pathloss_dB", c.link.total_pathloss_db()},
               {"absorption", c.link.absorption()}};
  j["antenna"] = {{"radiation_efficiency", c.antenna.radiation_efficiency()},
                  {"physical_temperature_K", c.antenna.physical_temperature()}};
  j["victim_channel"] = {{"center_Hz", c.victim.center_frequency()}, {"bandwidth_Hz", c.victim.bandwidth()}};
  j["aggressor_channel"] = {{"f_low_Hz", c.aggressor.f_low()}, {"f_high_Hz", c.aggressor.f_high()}};
  j["mask"] = {{"enabled", c.mask_enabled},
               {"in_band_power_dBW", c.mask.in_band_power_dbw()},
               {"breakpoints", mask_to_json(c.mask)}};
  j["field"] = {{"density_class", leakage::to_string(c.field.density_class())},
                {"count", c.field.count()},
                {"elevation_gain_dB", c.field.elevation_gain_db()},
                {"footprint_side_km", c.field.footprint_side_km()}};
  j["forward"] = {{"opacity_coefficient", c.forward.opacity_coefficient()},
                  {"temperature_offset_K", c.mapping.temperature_offset_k},
                  {"atmosphere_lapse_K", c.mapping.atmosphere_lapse_k}};
  j["bias"] = {{"predictors", c.predictor_names},
               {"background", c.background_bias},
               {"truth", c.true_bias},
               {"variance", c.bias_variance},
               {"hold_fixed", c.hold_bias}};
  j["covariances"] = {{"state_variance", c.state_variance}, {"obs_error_stddev", c.obs_error_stddev}};
  j["model"] = {{"grid_size", c.grid_size},
                {"forcing", c.model.forcing},
                {"moisture_coupling", c.model.moisture_coupling},
                {"condensation_threshold", c.model.condensation_threshold},
                {"condensation_rate", c.model.condensation_rate},
                {"dt", c.model.dt},
                {"initial_moisture", c.initial_moisture}};
  j["nature"] = {{"spinup_steps", c.spinup_steps}};
  return j;
}

std::size_t steps_for(double length, double dt, const std::string& field) {
  const double n = length / dt;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n))
    throw ConfigError(field + ": must be a whole number of model steps (dt=" + std::to_string(dt) + ")");
  return static_cast<std::size_t>(r);
}

void validate(const ScenarioConfig& c) {
  if (c.leakage_levels.empty()) throw ConfigError("leakage_levels: must not be empty");
  for (std::size_t i = 1; i < c.leakage_levels.size(); ++i)
    if (!(c.leakage_levels[i - 1] < c.leakage_levels[i]))
      throw ConfigError("leakage_levels: must be sorted strictly ascending");
  if (c.ensemble_size < 1) throw ConfigError("ensemble_size: must be >= 1");
  if (!(c.forecast_length > 0.0)) throw ConfigError("forecast_length: must be > 0");
  if (!(c.probe_lead_time >= 0.0) || c.probe_lead_time > c.forecast_length)
    throw ConfigError("probe_lead_time: must lie in [0, forecast_length]");
  steps_for(c.forecast_length, c.model.dt, "forecast_length");
  steps_for(c.probe_lead_time, c.model.dt, "probe_lead_time");
  if (c.grid_size < 4) throw ConfigError("model.grid_size: must be >= 4");
  if (!(c.initial_moisture >= 0.0)) throw ConfigError("model.initial_moisture: must be >= 0");
  if (!(c.bias_variance > 0.0)) throw ConfigError("bias.variance: must be > 0");
  if (!(c.state_variance > 0.0)) throw ConfigError("covariances.state_variance: must be > 0");
  if (!(c.obs_error_stddev > 0.0)) throw ConfigError("covariances.obs_error_stddev: must be > 0");
  const std::size_t nb = c.predictor_names.size() + 1;
  if (c.background_bias.size() != nb)
    throw ConfigError("bias.background: expected " + std::to_string(nb) + " values ([beta_0, beta_i...])");
  if (c.true_bias.size() != nb)
    throw ConfigError("bias.truth: expected " + std::to_string(nb) + " values ([beta_0, beta_i...])");
  if (c.mask_enabled) guarded("mask", [&] { return leakage::aci_leakage_fraction(c.mask, c.aggressor, c.victim); });
}

}  // namespace

std::size_t ScenarioConfig::forecast_steps() const { return steps_for(forecast_length, model.dt, "forecast_length"); }
std::size_t ScenarioConfig::probe_steps() const { return steps_for(probe_lead_time, model.dt, "probe_lead_time"); }

std::vector<double> default_leakage_levels() { return {-55, -45, -35, -30, -25, -20, -15}; }

json default_config_json() {
  ScenarioConfig c;
  c.leakage_levels = default_leakage_levels();
  c.predictor_names = {"scan_position"};
  c.background_bias = {0.0, 0.0};
  c.true_bias = {0.5, 0.01};
  return to_json(c);
}

ScenarioConfig parse_config(const json& doc) {
  json merged = default_config_json();
  std::set<std::string> provided;
  overlay(merged, doc, "", provided);

  const Reader r(merged);
  ScenarioConfig c;
  c.leakage_levels = r.numbers("leakage_levels");
  c.ensemble_size = r.unsigned_int("ensemble_size");
  c.forecast_length = r.number("forecast_length");
  c.probe_lead_time = r.number("probe_lead_time");
  c.seeds = {r.unsigned_int("seeds.nature"), r.unsigned_int("seeds.obs_noise"), r.unsigned_int("seeds.init")};

  c.link = guarded("link", [&] {
    return leakage::LinkBudget(r.number("link.distance_km"), r.number("link.total_pathloss_dB"),
                               r.number("link.absorption"));
  });
  c.antenna = guarded("antenna", [&] {
    return leakage::AntennaModel::from_efficiency(r.number("antenna.radiation_efficiency"),
                                                  r.number("antenna.physical_temperature_K"));
  });
  c.victim = guarded("victim_channel", [&] {
    return leakage::ChannelSpec::from_center(r.number("victim_channel.center_Hz"),
                                             r.number("victim_channel.bandwidth_Hz"));
  });
  c.aggressor = guarded("aggressor_channel", [&] {
    return leakage::ChannelSpec::from_edges(r.number("aggressor_channel.f_low_Hz"),
                                            r.number("aggressor_channel.f_high_Hz"));
  });

  c.mask_enabled = r.boolean("mask.enabled");
  c.mask = guarded("mask.breakpoints", [&] {
    const json& bps = r.at("mask.breakpoints");
    if (!bps.is_array()) throw ConfigError("mask.breakpoints: expected a list of [offset_Hz, psd_dB] pairs");
    std::vector<leakage::MaskBreakpoint> out;
    for (const auto& e : bps) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw ConfigError("mask.breakpoints: expected a list of [offset_Hz, psd_dB] pairs");
      out.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    return leakage::EmissionMask(std::move(out), r.number("mask.in_band_power_dBW"));
  });

  const auto density = guarded("field.density_class", [&] {
    return leakage::density_class_from_string(r.string("field.density_class"));
  });
  double count = r.number("field.count");
  if (!provided.contains("field.count")) {
    if (density == leakage::DensityClass::metropolitan) count = leakage::TransmitterField::metropolitan().count();
    if (density == leakage::DensityClass::rural) count = leakage::TransmitterField::rural().count();
  }
  c.field = guarded("field", [&] {
    return leakage::TransmitterField(density, count, 0.0, r.number("field.elevation_gain_dB"),
                                     r.number("field.footprint_side_km"));
  });

  c.forward = guarded("forward.opacity_coefficient", [&] {
    return radiance::ForwardOperatorParams(r.number("forward.opacity_coefficient"));
  });
  c.mapping.temperature_offset_k = r.number("forward.temperature_offset_K");
  c.mapping.atmosphere_lapse_k = r.number("forward.atmosphere_lapse_K");

  c.predictor_names = r.strings("bias.predictors");
  for (const auto& name : c.predictor_names) {
    try {
      radiance::make_predictor(name);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("bias.predictors: ") + e.what());
    }
  }
  const std::size_t np = c.predictor_names.size();
  if (provided.contains("bias.background")) {
    c.background_bias = r.numbers("bias.background");
  } else {
    c.background_bias.assign(np + 1, 0.0);
  }
  if (provided.contains("bias.truth")) {
    c.true_bias = r.numbers("bias.truth");
  } else {
    c.true_bias = {0.5};
    for (const auto& name : c.predictor_names) c.true_bias.push_back(default_truth_coefficient(name));
  }
  c.bias_variance = r.number("bias.variance");
  c.hold_bias = r.boolean("bias.hold_fixed");

  c.state_variance = r.number("covariances.state_variance");
  c.obs_error_stddev = r.number("covariances.obs_error_stddev");

  c.grid_size = r.unsigned_int("model.grid_size");
  c.model.forcing = r.number("model.forcing");
  c.model.moisture_coupling = r.number("model.moisture_coupling");
  c.model.condensation_threshold = r.number("model.condensation_threshold");
  c.model.condensation_rate = r.number("model.condensation_rate");
  c.model.dt = r.number("model.dt");
  c.initial_moisture = r.number("model.initial_moisture");
  guarded("model", [&] { c.model.validate(); return 0; });
  c.spinup_steps = r.unsigned_int("nature.spinup_steps");

  validate(c);

  c.resolved = to_json(c);
  std::vector<std::string> leaves;
  leaf_paths(c.resolved, "", leaves);
  for (const auto& leaf : leaves)
    if (!provided.contains(leaf)) c.defaulted.push_back(leaf);
  return c;
}

ScenarioConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(doc);
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ScenarioConfig with_seed_override(const ScenarioConfig& config, std::uint64_t seed) {
  ScenarioConfig c = config;
  c.seeds = {seed, seed + 1, seed + 2};
  c.resolved = to_json(c);
  std::erase_if(c.defaulted, [](const std::string& p) { return p.starts_with("seeds."); });
  return c;
}

ScenarioConfig with_levels(const ScenarioConfig& config, std::vector<double> levels) {
  ScenarioConfig c = config;
  c.leakage_levels = std::move(levels);
  validate(c);
  c.resolved = to_json(c);
  std::erase(c.defaulted, std::string("leakage_levels"));
  return c;
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw RuntimeError("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string config_hash(const ScenarioConfig& config) { return sha256_hex(config.canonical_text()); }

}  // namespace wxleak::experiment
