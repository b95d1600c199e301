#pragma once

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "iwp/jones.hpp"

namespace iwp {

/// Raised when the data cannot distinguish between parameter values.
class AmbiguityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PolarimetrySample {
  PolarizationState input;
  StokesVector output;
};

struct AxisRetardanceFit {
  double theta = 0.0;  ///< canonical, [-pi/4, pi/4)
  double delta = 0.0;  ///< [0, 2pi)
  double rms = 0.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  bool converged = false;
};

/// Simulated output Stokes vectors of plate (theta, delta) for the given inputs.
std::vector<PolarimetrySample> simulate_polarimetry(double theta, double delta,
                                                    const std::vector<PolarizationState>& inputs);

/// The six canonical states, the default probe set.
std::vector<PolarizationState> default_probe_states();

/**
 * Fits axis tilt and retardance to output Stokes vectors. A 1 deg x 2 deg grid
 * over theta in [-90, 90) and delta in [0, 360) seeds Gauss-Newton. The result
 * is reported in canonical form since (theta, delta) and (theta - pi/2, -delta)
 * act identically on polarization.
 *
 * Throws std::invalid_argument for fewer than two samples and AmbiguityError
 * when the inputs are collinear on the Poincare sphere or the fitted
 * parameters are not locally identifiable.
 */
AxisRetardanceFit fit_axis_and_retardance(const std::vector<PolarimetrySample>& samples);

inline constexpr double kPlausibleBirefringenceMin = 1e-5;
inline constexpr double kPlausibleBirefringenceMax = 1e-4;
inline constexpr double kTypicalBirefringence = 2e-5;

struct BirefringenceEstimate {
  double birefringence = 0.0;
  int branch = 0;               ///< k in delta + 2 pi k
  bool ambiguous = false;       ///< more than one branch in the plausible range
  std::vector<double> plausible;  ///< all branch values inside [1e-5, 1e-4]
};

/**
 * b = (delta + 2 pi k) lambda / (2 pi l). Without an explicit branch, k >= 0
 * is chosen to put b nearest 2e-5.
 */
BirefringenceEstimate birefringence_from_retardance(double delta, double length, double wavelength,
                                                    std::optional<int> branch = std::nullopt);

struct LengthScanSample {
  double length = 0.0;  // meters
  std::optional<std::pair<double, double>> hv;  ///< (p_H, p_V)
  std::optional<std::pair<double, double>> da;  ///< (p_D, p_A)
};

struct TiltFit {
  double theta = 0.0;
  double birefringence = 0.0;
  double rms = 0.0;
  Eigen::MatrixXd covariance;
  bool converged = false;
  bool ill_conditioned = false;  ///< lengths span less than half a beat period
};

/**
 * Least-squares fit of the single-segment transfer model to length-scan
 * powers (H input). Fits theta, and b as well when @p fit_birefringence.
 *
 * Throws std::invalid_argument for fewer than 3 distinct lengths or a power
 * pair that does not sum to 1 within 0.02.
 */
TiltFit fit_tilt_from_scan(const std::vector<LengthScanSample>& samples, double birefringence,
                           double wavelength, bool fit_birefringence = false);

}  // namespace iwp
