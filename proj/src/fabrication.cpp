#include "iwp/fabrication.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iwp/jones.hpp"

namespace iwp {

void SetupGeometry::validate() const {
  for (double v : {lens_focal_length, lens_objective_distance, objective_focal_length, aperture_diameter,
                   beam_diameter, full_na}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("setup geometry values must be positive");
  }
}

CalibrationModel reference_calibration() { return {0.39, -0.069}; }

SetupGeometry reference_setup() {
  SetupGeometry g;
  g.objective_focal_length = objective_focal_from_calibration(reference_calibration(), g);
  return g;
}

double beam_displacement(double s, const SetupGeometry& geom) {
  geom.validate();
  return geom.lens_objective_distance / geom.lens_focal_length * s;
}

double angular_deflection(double s, const SetupGeometry& geom) {
  geom.validate();
  return s / geom.lens_focal_length;
}

double tilt_angle(double d, const SetupGeometry& geom) {
  geom.validate();
  return std::atan(d / geom.objective_focal_length);
}

double effective_na(const SetupGeometry& geom) {
  geom.validate();
  if (geom.beam_diameter > geom.aperture_diameter) {
    throw std::domain_error("effective_na: beam overfills the objective aperture");
  }
  return geom.full_na * geom.beam_diameter / geom.aperture_diameter;
}

double objective_focal_from_calibration(const CalibrationModel& model, const SetupGeometry& geom) {
  if (!(model.c_per_mm > 0.0)) throw std::domain_error("calibration slope must be positive");
  const double c_per_m = model.c_per_mm * 1e3;
  return geom.lens_objective_distance / (c_per_m * geom.lens_focal_length);
}

double predict_tilt(const CalibrationModel& model, double s_mm) {
  return std::atan((s_mm - model.s0_mm) * model.c_per_mm);
}

double lens_shift_for_tilt(const CalibrationModel& model, double theta) {
  if (!(model.c_per_mm > 0.0)) throw std::domain_error("calibration slope must be positive");
  return model.s0_mm + std::tan(theta) / model.c_per_mm;
}

CalibrationFit fit_calibration(const std::vector<CalibrationSample>& samples) {
  if (samples.size() < 3) throw std::invalid_argument("fit_calibration: need at least 3 samples");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end(),
                                            [](const auto& a, const auto& b) { return a.s_mm < b.s_mm; });
  if (lo->s_mm == hi->s_mm) throw std::invalid_argument("fit_calibration: all samples share the same s");
  for (const auto& s : samples) {
    if (!std::isfinite(s.s_mm) || !std::isfinite(s.theta)) {
      throw std::invalid_argument("fit_calibration: non-finite sample");
    }
  }

  const auto n = static_cast<Eigen::Index>(samples.size());
  // params = (C, s0)
  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r(i) = std::atan((samples[i].s_mm - p(1)) * p(0)) - samples[i].theta;
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = samples[i].s_mm - p(1);
      const double w = 1.0 / (1.0 + u * u * p(0) * p(0));
      j(i, 0) = u * w;
      j(i, 1) = -p(0) * w;
    }
    return j;
  };

  Eigen::VectorXd best(2);
  double best_cost = std::numeric_limits<double>::infinity();
  for (int ic = 1; ic <= 200; ++ic) {
    for (int is = 0; is <= 200; ++is) {
      Eigen::VectorXd p(2);
      p << 0.01 * ic, -1.0 + 0.01 * is;
      const double c = residuals(p).squaredNorm();
      if (c < best_cost) {
        best_cost = c;
        best = p;
      }
    }
  }

  GaussNewtonOptions opt;
  opt.gradient_tolerance = 1e-10;
  const GaussNewtonResult gn = gauss_newton(residuals, best, opt, jacobian);

  CalibrationFit fit;
  fit.model = {gn.params(0), gn.params(1)};
  fit.rms = gn.rms();
  fit.covariance = gn.covariance();
  fit.gradient_norm = gn.gradient_norm;
  fit.converged = gn.converged && fit.model.c_per_mm > 0.0;
  return fit;
}

bool tilt_out_of_range(double theta) { return std::abs(theta) > kMaxDemonstratedTilt; }

std::vector<OffsetEntry> offset_compensation_table(const CalibrationModel& model,
                                                   const std::vector<double>& angles) {
  if (!(model.c_per_mm > 0.0)) throw std::domain_error("calibration slope must be positive");
  // offset = k (s - s0); k fixed by the anchor section.
  const double anchor_shift = std::tan(kOffsetAnchorTilt) / model.c_per_mm;
  const double um_per_mm = kOffsetAnchorUm / anchor_shift;
  std::vector<OffsetEntry> out;
  out.reserve(angles.size());
  for (double theta : angles) {
    if (std::abs(theta) >= kPi / 2.0) throw std::domain_error("offset table: tilt must be within (-90, 90) deg");
    const double s = lens_shift_for_tilt(model, theta);
    out.push_back({theta, s, um_per_mm * (s - model.s0_mm), tilt_out_of_range(theta)});
  }
  return out;
}

}  // namespace iwp
