#pragma once

// Out-of-band leakage chain: emitter population and emission mask, through
// the satellite link, to radiometer noise temperature and the brightness
// temperature error it induces.
//
// Public parameters are in dB / dBW. Arithmetic is done in linear units.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wxleak::leakage {

inline constexpr double kBoltzmann = 1.380649e-23;  // J/K, exact SI value
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Anything at or below this level is treated as "no power" in reports.
inline constexpr double kFloorDb = -300.0;

double db_to_linear(double db);
double linear_to_db(double linear);

class ChannelSpec {
 public:
  /// Throws ValidationError unless 0 <= f_low < f_high.
  static ChannelSpec from_edges(double f_low_hz, double f_high_hz);
  static ChannelSpec from_center(double center_hz, double bandwidth_hz);

  /// Passive-sensing victim channel: 23.8 GHz, 270 MHz wide.
  static ChannelSpec sensing_23g8();
  /// 5G n258 aggressor band: 24.25 - 27.5 GHz.
  static ChannelSpec n258();

  double f_low() const { return f_low_; }
  double f_high() const { return f_high_; }
  double bandwidth() const { return f_high_ - f_low_; }
  double center_frequency() const { return 0.5 * (f_low_ + f_high_); }

 private:
  ChannelSpec(double lo, double hi) : f_low_(lo), f_high_(hi) {}
  double f_low_;
  double f_high_;
};

struct MaskBreakpoint {
  double offset_hz;  // from the aggressor lower band edge
  double psd_db;     // relative to in-band PSD
};

/// Piecewise-linear-in-dB power spectral density. The PSD is defined only
/// between the first and last breakpoint offsets.
class EmissionMask {
 public:
  explicit EmissionMask(std::vector<MaskBreakpoint> breakpoints, double in_band_power_dbw = 0.0);

  /// Shipped default: 0 dB across n258, an ACLR-style step to -28 dB within
  /// 100 MHz of the lower edge, then a slow roll-off to a -60 dB floor.
  static EmissionMask default_n258();
  /// 0 dB between the two offsets.
  static EmissionMask flat(double offset_low_hz, double offset_high_hz);

  const std::vector<MaskBreakpoint>& breakpoints() const { return breakpoints_; }
  double in_band_power_dbw() const { return in_band_power_dbw_; }
  double span_low() const { return breakpoints_.front().offset_hz; }
  double span_high() const { return breakpoints_.back().offset_hz; }

  /// Throws ValidationError outside [span_low, span_high].
  double psd_db(double offset_hz) const;

  /// Exact integral of the linear PSD over [a, b] (offsets, a <= b, both inside the span).
  double integrate_linear(double a, double b) const;

 private:
  std::vector<MaskBreakpoint> breakpoints_;
  double in_band_power_dbw_;
};

enum class DensityClass { metropolitan, rural, custom };

std::string to_string(DensityClass c);
DensityClass density_class_from_string(const std::string& s);

/// Emitters inside one radiometer footprint.
///
/// The metropolitan and rural presets (250 and 10 emitters at -43 dBW
/// effective leakage EIRP) are configuration knobs, not measured densities.
class TransmitterField {
 public:
  TransmitterField(DensityClass density_class, double count, double per_device_eirp_dbw,
                   double elevation_gain_db = 0.0, double footprint_side_km = 48.0);

  static TransmitterField metropolitan();
  static TransmitterField rural();
  static TransmitterField single(double eirp_dbw);

  DensityClass density_class() const { return density_class_; }
  double count() const { return count_; }
  double per_device_eirp_dbw() const { return per_device_eirp_dbw_; }
  double elevation_gain_db() const { return elevation_gain_db_; }
  double footprint_side_km() const { return footprint_side_km_; }

  TransmitterField with_eirp(double eirp_dbw) const;

 private:
  DensityClass density_class_;
  double count_;
  double per_device_eirp_dbw_;
  double elevation_gain_db_;
  double footprint_side_km_;
};

/// Aggregate leakage power. Zero emitters or zero fraction is a distinct
/// "none" state that downstream code treats as 0 W.
class LeakagePower {
 public:
  static LeakagePower from_dbw(double dbw);
  static LeakagePower from_watts(double watts);
  static LeakagePower none() { return LeakagePower(); }

  bool is_none() const { return !dbw_.has_value(); }
  /// -infinity when none.
  double dbw() const;
  double watts() const;

 private:
  LeakagePower() = default;
  std::optional<double> dbw_;
};

class LinkBudget {
 public:
  /// `total_pathloss_db` includes all antenna and system gains.
  explicit LinkBudget(double distance_km = 800.0, double total_pathloss_db = 130.0,
                      double absorption = 0.0);

  double distance_km() const { return distance_km_; }
  double total_pathloss_db() const { return total_pathloss_db_; }
  double absorption() const { return absorption_; }
  double transmittance() const { return 1.0 - absorption_; }

 private:
  double distance_km_;
  double total_pathloss_db_;
  double absorption_;
};

/// Free-space path loss 20 log10(4 pi d f / c) in dB. Documentation aid for
/// the nominal link; the budget itself uses the all-inclusive loss.
double free_space_pathloss_db(double distance_km, double frequency_hz);

class AntennaModel {
 public:
  static AntennaModel from_efficiency(double radiation_efficiency, double physical_temperature_k);
  static AntennaModel from_loss_factor(double loss_factor, double physical_temperature_k);

  double radiation_efficiency() const { return efficiency_; }
  double physical_temperature() const { return physical_temperature_; }
  /// 1 / efficiency; +infinity for a fully lossy antenna.
  double loss_factor() const;

 private:
  AntennaModel(double eff, double tp) : efficiency_(eff), physical_temperature_(tp) {}
  double efficiency_;
  double physical_temperature_;
};

struct NoiseTemperature {
  double value_k = 0.0;
  double source_power_w = 0.0;
  double bandwidth_hz = 0.0;
};

/// Share of the mask's total power that lands inside the victim channel.
double aci_leakage_fraction(const EmissionMask& mask, const ChannelSpec& aggressor,
                            const ChannelSpec& victim);

LeakagePower aggregate_leakage_power(const TransmitterField& field, double fraction);

/// Received power in W at the radiometer.
double received_power(const LeakagePower& leakage, const LinkBudget& link);
double received_power(double leakage_dbw, const LinkBudget& link);

NoiseTemperature induced_noise_temperature(double received_power_w, const ChannelSpec& channel);

/// T_a = eta T_b + (1 - eta) T_p
double antenna_temperature(double brightness_k, const AntennaModel& antenna);

/// Brightness-temperature error an unaware retrieval attributes to the scene
/// when the antenna temperature rises by `noise`: noise / eta.
double brightness_perturbation(const NoiseTemperature& noise, const AntennaModel& antenna);

struct ChainResult {
  LeakagePower leakage;
  double received_power_w;
  NoiseTemperature noise;
  double delta_tb_k;
};

/// Full chain for one leakage level.
ChainResult evaluate_chain(const LeakagePower& leakage, const LinkBudget& link,
                           const ChannelSpec& victim, const AntennaModel& antenna);

}  // namespace wxleak::leakage
