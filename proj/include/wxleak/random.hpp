#pragma once

#include <cstdint>
#include <random>

namespace wxleak {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// base seed and an index, so results never depend on scheduling.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `index` under `base`. Deterministic and portable.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

/// Portable Gaussian stream.
///
/// Uniforms are drawn from std::mt19937_64 (whose output sequence is fixed by
/// the C++ standard) as u = ((x >> 11) + 0.5) * 2^-53, which lies strictly in
/// (0, 1). Normals come from the Box-Muller transform on consecutive uniform
/// pairs (u1, u2): z0 = r cos(2 pi u2), z1 = r sin(2 pi u2), r = sqrt(-2 ln u1),
/// returned in that order.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace wxleak
