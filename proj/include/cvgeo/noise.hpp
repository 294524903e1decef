#pragma once

#include <cmath>
#include <cstdint>

namespace cvgeo {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Small deterministic generator; the distribution helpers are written out
/// so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() { return splitmix64(state_++ * 0x2545f4914f6cdd1dULL + 0x632be59bd9b4e019ULL); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

/// Lattice value noise in [0,1] with quintic fade between hashed corners.
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed) : seed_(seed) {}

  double lattice(std::int64_t ix, std::int64_t iy, std::uint32_t octave) const {
    std::uint64_t h = splitmix64(seed_ ^ (static_cast<std::uint64_t>(octave) << 56));
    h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(iy) * 0x9e3779b97f4a7c15ULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  double sample(double x, double y, std::uint32_t octave = 0) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    const double tx = fade(x - fx), ty = fade(y - fy);
    const double a = lattice(ix, iy, octave), b = lattice(ix + 1, iy, octave);
    const double c = lattice(ix, iy + 1, octave), d = lattice(ix + 1, iy + 1, octave);
    return lerp(lerp(a, b, tx), lerp(c, d, tx), ty);
  }

  /// Fractal sum normalized back to [0,1].
  double fbm(double x, double y, int octaves, double persistence = 0.5, double lacunarity = 2.0) const {
    double sum = 0, amp = 1, norm = 0, freq = 1;
    for (int o = 0; o < octaves; ++o) {
      sum += amp * sample(x * freq, y * freq, static_cast<std::uint32_t>(o));
      norm += amp;
      amp *= persistence;
      freq *= lacunarity;
    }
    return norm > 0 ? sum / norm : 0.0;
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
  static double lerp(double a, double b, double t) { return a + (b - a) * t; }

  std::uint64_t seed_;
};

}  // namespace cvgeo
