#pragma once

#include <vector>

#include "iwp/jones.hpp"

namespace iwp {

/// A retarder described by axis tilt and retardance (radians).
struct PlateSpec {
  double theta = 0.0;
  double delta = 0.0;

  PlateOperator matrix() const { return waveplate_matrix(theta, delta); }
  bool is_canonical() const;
};

/// Plates applied first-to-last; evaluation multiplies right-to-left.
struct PlateCascade {
  std::vector<PlateSpec> plates;
};

/// Spec plus a global phase phi such that M(original) = e^{i phi} M(spec).
struct EquivalentPlate {
  PlateSpec spec;
  double global_phase = 0.0;
};

/// (theta + pi, delta). The matrices are identical.
PlateSpec equivalent_shift(const PlateSpec& spec);

/**
 * (theta - pi/2, -delta) with global phase +delta:
 *   M(theta, delta) = e^{i delta} M(theta - pi/2, -delta).
 */
EquivalentPlate equivalent_conjugate(const PlateSpec& spec);

/// Reduces to theta in [-pi/4, pi/4), delta in [0, 2pi) using the two
/// equivalences above; the accumulated phase is wrapped into (-pi, pi].
EquivalentPlate canonicalize(const PlateSpec& spec);

/**
 * Three-plate form of a canonical target (theta_t, delta_t):
 * half-wave at theta_t/2, retarder (0, delta_t), half-wave at theta_t/2.
 * All tilts lie in [-pi/8, pi/8). Throws std::domain_error when the target
 * is not canonical.
 */
PlateCascade decompose_sandwich(const PlateSpec& target);

/// Product of the member matrices in application order. Empty cascade -> identity.
PlateOperator cascade_evaluate(const PlateCascade& cascade);

/// min over phi of ||a - e^{i phi} b||_F (optimal phase in closed form).
double distance_up_to_phase(const PlateOperator& a, const PlateOperator& b);

/// Largest absolute axis tilt in the cascade (radians).
double max_abs_tilt(const PlateCascade& cascade);

/// Wraps an angle into [0, 2pi).
double wrap_two_pi(double angle);

}  // namespace iwp
