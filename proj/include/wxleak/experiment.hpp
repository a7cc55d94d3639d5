#pragma once

// Scenario configuration, execution and reporting.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "wxleak/leakage_link.hpp"
#include "wxleak/radiance_forward.hpp"
#include "wxleak/toy_nwp.hpp"

namespace wxleak::experiment {

struct Seeds {
  std::uint64_t nature = 1;
  std::uint64_t obs_noise = 2;
  std::uint64_t init = 3;
};

struct ScenarioConfig {
  std::vector<double> leakage_levels;  // dBW, ascending

  leakage::LinkBudget link;
  leakage::AntennaModel antenna = leakage::AntennaModel::from_efficiency(0.95, 290.0);
  leakage::ChannelSpec victim = leakage::ChannelSpec::sensing_23g8();
  leakage::ChannelSpec aggressor = leakage::ChannelSpec::n258();
  leakage::EmissionMask mask = leakage::EmissionMask::default_n258();
  bool mask_enabled = false;
  leakage::TransmitterField field = leakage::TransmitterField::single(0.0);

  radiance::ForwardOperatorParams forward;
  radiance::ColumnMapping mapping;
  std::vector<std::string> predictor_names;
  std::vector<double> background_bias;  // packed [beta_0, beta_1, ...]
  std::vector<double> true_bias;
  double bias_variance = 0.5;
  bool hold_bias = false;

  double state_variance = 1.0;
  double obs_error_stddev = 0.3;

  nwp::ModelParams model;
  std::size_t grid_size = 40;
  double initial_moisture = 20.0;
  std::size_t spinup_steps = 1000;

  Seeds seeds;
  double forecast_length = 12.0;
  double probe_lead_time = 1.0;
  std::size_t ensemble_size = 20;

  /// Fully resolved config (defaults filled). Its dump() is the canonical text.
  nlohmann::json resolved;
  /// Dotted paths of every field that took its default value.
  std::vector<std::string> defaulted;

  std::size_t forecast_steps() const;
  std::size_t probe_steps() const;
  std::string canonical_text() const { return resolved.dump(); }
};

/// Default sweep levels in dBW.
std::vector<double> default_leakage_levels();

/// The defaults document, as accepted by parse_config.
nlohmann::json default_config_json();

/// Parses and validates config text. Throws ConfigError naming the offending
/// field, or with line/column for malformed text.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Replaces all three seeds: nature = n, obs_noise = n + 1, init = n + 2.
ScenarioConfig with_seed_override(const ScenarioConfig& config, std::uint64_t seed);
ScenarioConfig with_levels(const ScenarioConfig& config, std::vector<double> levels);

/// Lowercase hex SHA-256 of the canonical config text.
std::string config_hash(const ScenarioConfig& config);
std::string sha256_hex(const std::string& text);

struct LevelRow {
  std::optional<double> leakage_dbw;  // nullopt for the baseline
  double noise_k = 0.0;
  double delta_tb_k = 0.0;
  double precip_diff_max_mm = 0.0;
  double precip_diff_rms_mm = 0.0;
  double t2m_diff_max_c = 0.0;
  double t2m_diff_rms_c = 0.0;
  double probe_t_diff_rms_c = 0.0;  // at probe_lead_time
  double analysis_cost = 0.0;
  double mean_iterations = 0.0;
  bool converged = true;

  bool is_baseline() const { return !leakage_dbw.has_value(); }
};

struct ScenarioReport {
  std::string config_hash;
  std::vector<std::string> defaulted;
  std::size_t ensemble_size = 0;
  double forecast_length = 0.0;
  double probe_lead_time = 0.0;
  LevelRow baseline;
  std::vector<LevelRow> levels;  // config order
};

struct RunOptions {
  unsigned jobs = 1;
  std::ostream* verbose = nullptr;  // forces jobs = 1
};

/// ΔT_b and noise temperature for one level through the leakage chain.
leakage::ChainResult leakage_chain(const ScenarioConfig& config, double level_dbw);

ScenarioReport run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

inline constexpr const char* kCsvHeader =
    "leakage_dBW,noise_K,delta_tb_K,precip_diff_max_mm,precip_diff_rms_mm,t2m_diff_max_C,"
    "t2m_diff_rms_C,analysis_cost,converged";

/// %.9g formatting used in every numeric CSV field.
std::string format_number(double v);

void emit_csv(const ScenarioReport& report, std::ostream& out);
void emit_csv(const ScenarioReport& report, const std::filesystem::path& path);
/// leakage_dBW,delta_tb_K,lead_time,t_diff_rms_C
void emit_lead_csv(const ScenarioReport& report, std::ostream& out);
void emit_summary(const ScenarioReport& report, std::ostream& out);

struct NoiseTableRow {
  double leakage_dbw;
  double received_power_w;
  double noise_k;
  double delta_tb_k;
};

/// Noise temperature curve from `from` to `to` (inclusive) in `step` dB increments.
std::vector<NoiseTableRow> noise_table(const ScenarioConfig& config, double from = -55.0, double to = -15.0,
                                       double step = 1.0);
void emit_noise_table(const std::vector<NoiseTableRow>& rows, std::ostream& out);

struct CheckResult {
  std::string name;
  bool passed;
  std::string detail;
};

/// Invariant self-test used by the `check` subcommand.
std::vector<CheckResult> run_self_check();

}  // namespace wxleak::experiment
