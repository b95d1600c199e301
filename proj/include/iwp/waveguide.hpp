#pragma once

#include <iosfwd>
#include <vector>

#include "iwp/jones.hpp"

namespace iwp {

/// A straight birefringent waveguide section. Lengths in meters, angles in radians.
struct WaveguideSegment {
  double length = 0.0;
  double birefringence = 0.0;
  double axis_tilt = 0.0;

  /// Throws std::invalid_argument if length or birefringence is negative or non-finite.
  void validate() const;
};

inline constexpr double kJunctionLossDb = 0.3;
inline constexpr double kPropagationLossDbPerCm = 0.2;

struct WaveguideDevice {
  std::vector<WaveguideSegment> segments;
  double wavelength = 800e-9;
  double junction_loss_db = kJunctionLossDb;
  double propagation_loss_db_per_cm = kPropagationLossDbPerCm;

  double total_length() const;
};

struct DeviceResponse {
  PlateOperator polarization;  ///< unitary part
  double transmittance = 1.0;  ///< polarization-independent intensity factor
};

/// Unwrapped retardance 2 pi b l / lambda. Throws std::domain_error if wavelength <= 0.
double retardance(const WaveguideSegment& seg, double wavelength);

PlateOperator segment_operator(const WaveguideSegment& seg, double wavelength);

/// Throws std::invalid_argument for an empty device or negative loss figures.
DeviceResponse device_operator(const WaveguideDevice& dev);

/// Segment length giving retardance pi.
double half_wave_length(double birefringence, double wavelength);

struct TransferPoint {
  double length = 0.0;  // meters
  double p_h = 0.0;
  double p_v = 0.0;
  double p_d = 0.0;
  double p_a = 0.0;
};

/// Normalized H/V and D/A powers after a single tilted segment, for H input.
std::vector<TransferPoint> transfer_curves(double tilt, double birefringence, double wavelength,
                                           const std::vector<double>& lengths);

/// CSV with header length_mm,p_H,p_V,p_D,p_A and six decimals.
void write_transfer_csv(std::ostream& os, const std::vector<TransferPoint>& points);

}  // namespace iwp
