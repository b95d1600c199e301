#include "iwp/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace iwp {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr double kTwoPi = 6.283185307179586476925;

// log(k!) via table for small k and a Stirling series otherwise.
double log_factorial(std::uint64_t k) {
  static const double table[] = {0.0,
                                 0.0,
                                 0.69314718055994530942,
                                 1.79175946922805500081,
                                 3.17805383034794561964,
                                 4.78749174278204599425,
                                 6.57925121201010099506,
                                 8.52516136106541430017,
                                 10.6046029027452502284,
                                 12.8018274800814696112};
  if (k < 10) return table[k];
  const double x = static_cast<double>(k) + 1.0;
  const double x2 = 1.0 / (x * x);
  // lgamma(x) Stirling series
  double series = 1.0 / 1188.0;
  series = series * x2 - 1.0 / 1680.0;
  series = series * x2 + 1.0 / 1260.0;
  series = series * x2 - 1.0 / 360.0;
  series = series * x2 + 1.0 / 12.0;
  return (x - 0.5) * std::log(x) - x + 0.91893853320467274178 + series / x;
}

}  // namespace

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64_mix(splitmix64_mix(seed ^ 0x5DEECE66DULL) + (stream + 1) * kGolden);
}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return splitmix64_mix(seed_ + counter_ * kGolden);
}

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(kTwoPi * u2);
  has_spare_ = true;
  return r * std::cos(kTwoPi * u2);
}

std::uint64_t CounterRng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::domain_error("poisson: mean must be finite and >= 0");
  if (mean == 0.0) return 0;

  if (mean < 30.0) {
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    while (u > cdf) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
      if (p < 1e-300 && cdf >= 1.0 - 1e-16) break;
    }
    return k;
  }

  // PTRD
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    const auto k = static_cast<std::uint64_t>(kf);
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + kf * loglam - log_factorial(k)) {
      return k;
    }
  }
}

}  // namespace iwp
