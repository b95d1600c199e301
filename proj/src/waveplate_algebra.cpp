#include "iwp/waveplate_algebra.hpp"

#include <cmath>
#include <stdexcept>

namespace iwp {

namespace {

constexpr double kTwoPi = 2.0 * kPi;
constexpr double kQuarterPi = kPi / 4.0;

double wrap_phase(double phi) {
  double w = std::remainder(phi, kTwoPi);
  if (w <= -kPi) w += kTwoPi;
  return w;
}

}  // namespace

bool PlateSpec::is_canonical() const {
  return theta >= -kQuarterPi && theta < kQuarterPi && delta >= 0.0 && delta < kTwoPi;
}

double wrap_two_pi(double angle) {
  double w = angle - kTwoPi * std::floor(angle / kTwoPi);
  if (w >= kTwoPi) w = 0.0;
  return w;
}

PlateSpec equivalent_shift(const PlateSpec& spec) { return {spec.theta + kPi, spec.delta}; }

EquivalentPlate equivalent_conjugate(const PlateSpec& spec) {
  return {{spec.theta - kPi / 2.0, -spec.delta}, spec.delta};
}

EquivalentPlate canonicalize(const PlateSpec& spec) {
  if (spec.is_canonical()) return {spec, 0.0};

  // theta modulo pi into [-pi/4, 3pi/4)
  PlateSpec s = spec;
  s.theta = spec.theta - kPi * std::floor((spec.theta + kQuarterPi) / kPi);
  double phase = 0.0;
  if (s.theta >= kQuarterPi) {
    const EquivalentPlate c = equivalent_conjugate(s);
    s = c.spec;
    phase += c.global_phase;
  }
  // Round-off at the interval edges.
  if (s.theta < -kQuarterPi) s.theta = -kQuarterPi;
  if (s.theta >= kQuarterPi) s.theta = std::nextafter(kQuarterPi, 0.0);
  s.delta = wrap_two_pi(s.delta);
  return {s, wrap_phase(phase)};
}

PlateCascade decompose_sandwich(const PlateSpec& target) {
  if (!target.is_canonical()) {
    throw std::domain_error("decompose_sandwich: target must be canonical (canonicalize first)");
  }
  const PlateSpec half{target.theta / 2.0, kPi};
  return PlateCascade{{half, PlateSpec{0.0, target.delta}, half}};
}

PlateOperator cascade_evaluate(const PlateCascade& cascade) {
  PlateOperator total;
  for (const auto& p : cascade.plates) total = p.matrix() * total;
  return total;
}

double distance_up_to_phase(const PlateOperator& a, const PlateOperator& b) {
  // The minimizing phase is arg Tr(b^dag a). Evaluating the difference there
  // avoids the cancellation in sqrt(|a|^2 + |b|^2 - 2|Tr a^dag b|).
  const Complex overlap = (b.matrix().adjoint() * a.matrix()).trace();
  const Complex phase = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : Complex(1.0, 0.0);
  return (a.matrix() - phase * b.matrix()).norm();
}

double max_abs_tilt(const PlateCascade& cascade) {
  double m = 0.0;
  for (const auto& p : cascade.plates) m = std::max(m, std::abs(p.theta));
  return m;
}

}  // namespace iwp
