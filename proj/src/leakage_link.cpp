#include "wxleak/leakage_link.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "wxleak/error.hpp"

namespace wxleak::leakage {

namespace {

constexpr double kDbToNeper = std::numbers::ln10 / 10.0;

std::string hz(double f) {
  std::ostringstream os;
  os.precision(12);
  os << f << " Hz";
  return os.str();
}

// integral over [0, width] of exp(k (d0 + (d1 - d0) t / width)), with dB -> linear
double segment_integral(double width, double d0, double d1) {
  if (width <= 0.0) return 0.0;
  const double p0 = db_to_linear(d0);
  const double x = kDbToNeper * (d1 - d0);
  if (std::abs(x) < 1e-12) return p0 * width * (1.0 + 0.5 * x);
  return p0 * width * std::expm1(x) / x;
}

}  // namespace

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double linear_to_db(double linear) {
  if (linear <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(linear);
}

// ---------------------------------------------------------------------------
ChannelSpec ChannelSpec::from_edges(double f_low_hz, double f_high_hz) {
  if (!std::isfinite(f_low_hz) || !std::isfinite(f_high_hz))
    throw ValidationError("channel edges must be finite");
  if (f_low_hz < 0.0) throw ValidationError("channel f_low must be >= 0, got " + hz(f_low_hz));
  if (!(f_low_hz < f_high_hz))
    throw ValidationError("channel edges inverted or degenerate: f_low=" + hz(f_low_hz) +
                          " f_high=" + hz(f_high_hz));
  return ChannelSpec(f_low_hz, f_high_hz);
}

ChannelSpec ChannelSpec::from_center(double center_hz, double bandwidth_hz) {
  if (!(bandwidth_hz > 0.0)) throw ValidationError("channel bandwidth must be > 0");
  return from_edges(center_hz - 0.5 * bandwidth_hz, center_hz + 0.5 * bandwidth_hz);
}

ChannelSpec ChannelSpec::sensing_23g8() { return from_center(23.8e9, 270e6); }

ChannelSpec ChannelSpec::n258() { return from_edges(24.25e9, 27.5e9); }

// ---------------------------------------------------------------------------
EmissionMask::EmissionMask(std::vector<MaskBreakpoint> breakpoints, double in_band_power_dbw)
    : breakpoints_(std::move(breakpoints)), in_band_power_dbw_(in_band_power_dbw) {
  if (breakpoints_.size() < 2) throw ValidationError("emission mask needs at least two breakpoints");
  if (!std::isfinite(in_band_power_dbw_)) throw ValidationError("mask in_band_power must be finite");
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    const auto& b = breakpoints_[i];
    if (!std::isfinite(b.offset_hz) || !std::isfinite(b.psd_db))
      throw ValidationError("mask breakpoint " + std::to_string(i) + " is not finite");
    if (i > 0 && !(breakpoints_[i - 1].offset_hz < b.offset_hz))
      throw ValidationError("mask breakpoints must be strictly increasing in offset (index " +
                            std::to_string(i) + ")");
  }
}

EmissionMask EmissionMask::default_n258() {
  constexpr double kBand = 3.25e9;
  return EmissionMask({{-1.5e9, -60.0},
                       {-400e6, -35.0},
                       {-100e6, -28.0},
                       {0.0, 0.0},
                       {kBand, 0.0},
                       {kBand + 100e6, -28.0},
                       {kBand + 400e6, -35.0},
                       {kBand + 1.5e9, -60.0}});
}

EmissionMask EmissionMask::flat(double offset_low_hz, double offset_high_hz) {
  return EmissionMask({{offset_low_hz, 0.0}, {offset_high_hz, 0.0}});
}

double EmissionMask::psd_db(double offset_hz) const {
  if (offset_hz < span_low() || offset_hz > span_high())
    throw ValidationError("mask undefined at offset " + hz(offset_hz));
  auto hi = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), offset_hz,
                             [](double f, const MaskBreakpoint& b) { return f < b.offset_hz; });
  if (hi == breakpoints_.end()) return breakpoints_.back().psd_db;
  auto lo = std::prev(hi);
  const double t = (offset_hz - lo->offset_hz) / (hi->offset_hz - lo->offset_hz);
  return lo->psd_db + t * (hi->psd_db - lo->psd_db);
}

double EmissionMask::integrate_linear(double a, double b) const {
  if (a < span_low() || b > span_high())
    throw ValidationError("mask undefined over [" + hz(std::min(a, span_low())) + ", " +
                          hz(std::max(b, span_high())) + "]");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
    const double s0 = breakpoints_[i].offset_hz;
    const double s1 = breakpoints_[i + 1].offset_hz;
    const double lo = std::max(a, s0);
    const double hi = std::min(b, s1);
    if (hi <= lo) continue;
    total += segment_integral(hi - lo, psd_db(lo), psd_db(hi));
  }
  return total;
}

// ---------------------------------------------------------------------------
std::string to_string(DensityClass c) {
  switch (c) {
    case DensityClass::metropolitan: return "metropolitan";
    case DensityClass::rural: return "rural";
    case DensityClass::custom: return "custom";
  }
  return "custom";
}

DensityClass density_class_from_string(const std::string& s) {
  if (s == "metropolitan") return DensityClass::metropolitan;
  if (s == "rural") return DensityClass::rural;
  if (s == "custom") return DensityClass::custom;
  throw ValidationError("unknown density class '" + s + "'");
}

TransmitterField::TransmitterField(DensityClass density_class, double count,
                                   double per_device_eirp_dbw, double elevation_gain_db,
                                   double footprint_side_km)
    : density_class_(density_class),
      count_(count),
      per_device_eirp_dbw_(per_device_eirp_dbw),
      elevation_gain_db_(elevation_gain_db),
      footprint_side_km_(footprint_side_km) {
  if (!(count_ >= 0.0) || !std::isfinite(count_)) throw ValidationError("transmitter count must be >= 0");
  if (!(footprint_side_km_ > 0.0)) throw ValidationError("footprint_side must be > 0");
  if (!std::isfinite(per_device_eirp_dbw_) || !std::isfinite(elevation_gain_db_))
    throw ValidationError("transmitter EIRP and elevation gain must be finite");
}

TransmitterField TransmitterField::metropolitan() {
  return TransmitterField(DensityClass::metropolitan, 250.0, -43.0);
}

TransmitterField TransmitterField::rural() { return TransmitterField(DensityClass::rural, 10.0, -43.0); }

TransmitterField TransmitterField::single(double eirp_dbw) {
  return TransmitterField(DensityClass::custom, 1.0, eirp_dbw);
}

TransmitterField TransmitterField::with_eirp(double eirp_dbw) const {
  return TransmitterField(density_class_, count_, eirp_dbw, elevation_gain_db_, footprint_side_km_);
}

// ---------------------------------------------------------------------------
LeakagePower LeakagePower::from_dbw(double dbw) {
  if (std::isnan(dbw) || dbw == std::numeric_limits<double>::infinity())
    throw ValidationError("leakage power must be finite dBW");
  LeakagePower p;
  if (dbw != -std::numeric_limits<double>::infinity()) p.dbw_ = dbw;
  return p;
}

LeakagePower LeakagePower::from_watts(double watts) {
  if (!(watts >= 0.0) || !std::isfinite(watts)) throw ValidationError("leakage power must be >= 0 W");
  if (watts == 0.0) return none();
  return from_dbw(linear_to_db(watts));
}

double LeakagePower::dbw() const {
  return dbw_ ? *dbw_ : -std::numeric_limits<double>::infinity();
}

double LeakagePower::watts() const { return dbw_ ? db_to_linear(*dbw_) : 0.0; }

// ---------------------------------------------------------------------------
LinkBudget::LinkBudget(double distance_km, double total_pathloss_db, double absorption)
    : distance_km_(distance_km), total_pathloss_db_(total_pathloss_db), absorption_(absorption) {
  if (!(distance_km_ > 0.0)) throw ValidationError("link distance must be > 0");
  if (!(total_pathloss_db_ > 0.0)) throw ValidationError("link total_pathloss must be > 0 dB");
  if (!(absorption_ >= 0.0 && absorption_ <= 1.0))
    throw ValidationError("link absorption coefficient must be in [0, 1]");
}

double free_space_pathloss_db(double distance_km, double frequency_hz) {
  const double d = distance_km * 1e3;
  return 20.0 * std::log10(4.0 * std::numbers::pi * d * frequency_hz / kSpeedOfLight);
}

// ---------------------------------------------------------------------------
AntennaModel AntennaModel::from_efficiency(double radiation_efficiency, double physical_temperature_k) {
  if (!(radiation_efficiency >= 0.0 && radiation_efficiency <= 1.0))
    throw ValidationError("antenna radiation efficiency must be in [0, 1]");
  if (!(physical_temperature_k > 0.0) || !std::isfinite(physical_temperature_k))
    throw ValidationError("antenna physical temperature must be > 0 K");
  return AntennaModel(radiation_efficiency, physical_temperature_k);
}

AntennaModel AntennaModel::from_loss_factor(double loss_factor, double physical_temperature_k) {
  if (!(loss_factor >= 1.0)) throw ValidationError("antenna loss factor must be >= 1");
  return from_efficiency(1.0 / loss_factor, physical_temperature_k);
}

double AntennaModel::loss_factor() const {
  return efficiency_ > 0.0 ? 1.0 / efficiency_ : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
double aci_leakage_fraction(const EmissionMask& mask, const ChannelSpec& aggressor,
                            const ChannelSpec& victim) {
  const double v_lo = victim.f_low() - aggressor.f_low();
  const double v_hi = victim.f_high() - aggressor.f_low();
  if (v_lo < mask.span_low() || v_hi > mask.span_high()) {
    const double mask_lo = aggressor.f_low() + mask.span_low();
    const double mask_hi = aggressor.f_low() + mask.span_high();
    const bool below = v_lo < mask.span_low();
    const double lo = below ? victim.f_low() : std::max(victim.f_low(), mask_hi);
    const double hi = below ? std::min(victim.f_high(), mask_lo) : victim.f_high();
    throw ValidationError("emission mask does not cover victim channel: uncovered span [" + hz(lo) +
                          ", " + hz(hi) + "]");
  }
  const double total = mask.integrate_linear(mask.span_low(), mask.span_high());
  if (!(total > 0.0)) return 0.0;
  const double inside = mask.integrate_linear(v_lo, v_hi);
  return std::clamp(inside / total, 0.0, 1.0);
}

LeakagePower aggregate_leakage_power(const TransmitterField& field, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("leakage fraction must be in [0, 1]");
  if (field.count() == 0.0 || fraction == 0.0) return LeakagePower::none();
  const double watts = field.count() * db_to_linear(field.per_device_eirp_dbw()) * fraction *
                       db_to_linear(field.elevation_gain_db());
  return LeakagePower::from_watts(watts);
}

double received_power(const LeakagePower& leakage, const LinkBudget& link) {
  if (leakage.is_none()) return 0.0;
  return db_to_linear(leakage.dbw() - link.total_pathloss_db()) * link.transmittance();
}

double received_power(double leakage_dbw, const LinkBudget& link) {
  return received_power(LeakagePower::from_dbw(leakage_dbw), link);
}

NoiseTemperature induced_noise_temperature(double received_power_w, const ChannelSpec& channel) {
  if (!(received_power_w >= 0.0) || !std::isfinite(received_power_w))
    throw ValidationError("received power must be finite and >= 0 W");
  return {received_power_w / (kBoltzmann * channel.bandwidth()), received_power_w,
          channel.bandwidth()};
}

double antenna_temperature(double brightness_k, const AntennaModel& antenna) {
  if (!(brightness_k >= 0.0)) throw ValidationError("brightness temperature must be >= 0 K");
  const double eta = antenna.radiation_efficiency();
  return eta * brightness_k + (1.0 - eta) * antenna.physical_temperature();
}

double brightness_perturbation(const NoiseTemperature& noise, const AntennaModel& antenna) {
  if (antenna.radiation_efficiency() == 0.0)
    throw ValidationError("brightness perturbation undefined for zero radiation efficiency");
  return noise.value_k / antenna.radiation_efficiency();
}

ChainResult evaluate_chain(const LeakagePower& leakage, const LinkBudget& link,
                           const ChannelSpec& victim, const AntennaModel& antenna) {
  ChainResult r{leakage, received_power(leakage, link), {}, 0.0};
  r.noise = induced_noise_temperature(r.received_power_w, victim);
  r.delta_tb_k = brightness_perturbation(r.noise, antenna);
  return r;
}

}  // namespace wxleak::leakage
