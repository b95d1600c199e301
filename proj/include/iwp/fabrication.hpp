/**
 * @file fabrication.hpp
 * @brief Paraxial model of the lens-shift writing setup.
 *
 * A long-focal lens (focal length F) sits a distance L before the writing
 * objective (focal length f, entrance aperture D). Shifting the lens
 * transversely by s displaces the beam on the objective by d = (L/F) s and
 * tilts it by theta_D = s/F; the off-axis beam then writes through the focus
 * at theta = atan(d/f), which sets the waveguide optical axis.
 *
 * Geometry is in meters. The calibration curve theta = atan((s - s0) C) is
 * kept in the units it is measured in: s and s0 in mm, C in 1/mm.
 */

#pragma once

#include <vector>

#include "iwp/least_squares.hpp"

namespace iwp {

struct SetupGeometry {
  double lens_focal_length = 0.50;         ///< F
  double lens_objective_distance = 0.44;   ///< L
  double objective_focal_length = 2.2564e-3;  ///< f
  double aperture_diameter = 4.5e-3;       ///< D
  double beam_diameter = 1.6e-3;           ///< 2w
  double full_na = 1.4;

  /// Throws std::invalid_argument unless all lengths and the NA are positive.
  void validate() const;
};

struct CalibrationModel {
  double c_per_mm = 0.39;
  double s0_mm = -0.069;
};

/// Writing setup of the reference fabrication line, with f derived from the reference calibration.
SetupGeometry reference_setup();
CalibrationModel reference_calibration();

/// d = (L/F) s, same length unit as s.
double beam_displacement(double s, const SetupGeometry& geom);
/// theta_D = s/F (radians). s in meters.
double angular_deflection(double s, const SetupGeometry& geom);
/// theta = atan(d/f). d in meters.
double tilt_angle(double d, const SetupGeometry& geom);
/// NA_full * 2w/D. Throws std::domain_error for an overfilled aperture.
double effective_na(const SetupGeometry& geom);

/// f = L / (C F) for a calibration slope C (1/mm). Returned in meters.
double objective_focal_from_calibration(const CalibrationModel& model, const SetupGeometry& geom);

struct CalibrationSample {
  double s_mm = 0.0;
  double theta = 0.0;  ///< radians
};

struct CalibrationFit {
  CalibrationModel model;
  double rms = 0.0;  ///< radians
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  double gradient_norm = 0.0;
  bool converged = false;
};

/**
 * Least-squares fit of theta = atan((s - s0) C). A coarse grid over
 * C in (0, 2] 1/mm and s0 in [-1, 1] mm seeds Gauss-Newton, which runs to a
 * gradient norm below 1e-10.
 *
 * Throws std::invalid_argument for fewer than 3 samples or fewer than two
 * distinct s values.
 */
CalibrationFit fit_calibration(const std::vector<CalibrationSample>& samples);

/// theta = atan((s - s0) C), radians.
double predict_tilt(const CalibrationModel& model, double s_mm);
/// Inverse of predict_tilt.
double lens_shift_for_tilt(const CalibrationModel& model, double theta);

inline constexpr double kMaxDemonstratedTilt = 32.0 * 3.14159265358979323846 / 180.0;
inline constexpr double kOffsetAnchorUm = 11.2;
inline constexpr double kOffsetAnchorTilt = 22.5 * 3.14159265358979323846 / 180.0;

/// True when |theta| exceeds the demonstrated 32 degree writing range.
bool tilt_out_of_range(double theta);

struct OffsetEntry {
  double theta = 0.0;        ///< radians
  double lens_shift_mm = 0.0;
  double lateral_offset_um = 0.0;
  bool out_of_range = false;
};

/**
 * Lateral focal-spot offset of each tilted section relative to the untilted
 * one. The offset is linear in (s - s0) and anchored at 11.2 um for a 22.5
 * degree section; anything away from the anchor is an extrapolation.
 */
std::vector<OffsetEntry> offset_compensation_table(const CalibrationModel& model,
                                                   const std::vector<double>& angles);

}  // namespace iwp
