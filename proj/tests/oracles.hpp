#pragma once
// Brute-force reference computations shared by the unit and acceptance tests.
// None of these call into the library's numerics.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "wxleak/leakage_link.hpp"

namespace oracle {

// dB value of the mask at an offset, by its own linear interpolation
inline double mask_db(const wxleak::leakage::EmissionMask& mask, double x) {
  const auto& bp = mask.breakpoints();
  for (std::size_t i = 1; i < bp.size(); ++i) {
    if (x <= bp[i].offset_hz) {
      const double t = (x - bp[i - 1].offset_hz) / (bp[i].offset_hz - bp[i - 1].offset_hz);
      return bp[i - 1].psd_db + t * (bp[i].psd_db - bp[i - 1].psd_db);
    }
  }
  return bp.back().psd_db;
}

inline double trapezoid(const wxleak::leakage::EmissionMask& mask, double a, double b, std::size_t n) {
  const double h = (b - a) / static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * std::pow(10.0, mask_db(mask, a + h * static_cast<double>(i)) / 10.0);
  }
  return s * h;
}

inline double mask_fraction(const wxleak::leakage::EmissionMask& mask, const wxleak::leakage::ChannelSpec& agg,
                            const wxleak::leakage::ChannelSpec& vic, std::size_t n) {
  const double inside = trapezoid(mask, vic.f_low() - agg.f_low(), vic.f_high() - agg.f_low(), n);
  const double total = trapezoid(mask, mask.span_low(), mask.span_high(), n);
  return inside / total;
}

// Random mask covering [-2 GHz, 3.25 GHz] around the aggressor lower edge, so
// the 23.8 GHz victim is always inside the span.
inline wxleak::leakage::EmissionMask random_mask(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> level(-80.0, 0.0), start(-2.5e9, -1.0e9), stop(3.25e9, 4.5e9);
  std::uniform_int_distribution<int> count(0, 6);
  std::vector<double> offsets{start(rng), stop(rng)};
  const int inner = count(rng);
  std::uniform_real_distribution<double> pos(offsets[0], offsets[1]);
  for (int i = 0; i < inner; ++i) offsets.push_back(pos(rng));
  std::sort(offsets.begin(), offsets.end());
  offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
  std::vector<wxleak::leakage::MaskBreakpoint> bp;
  for (double o : offsets) bp.push_back({o, level(rng)});
  return wxleak::leakage::EmissionMask(bp);
}

// Sum device contributions one at a time in watts.
inline double sum_devices_dbw(int count, double eirp_dbw, double fraction, double gain_db) {
  double w = 0.0;
  for (int i = 0; i < count; ++i) w += std::pow(10.0, (eirp_dbw + gain_db) / 10.0) * fraction;
  return 10.0 * std::log10(w);
}

}  // namespace oracle
