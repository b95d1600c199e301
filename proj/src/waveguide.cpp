#include "iwp/waveguide.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace iwp {

void WaveguideSegment::validate() const {
  if (!std::isfinite(length) || length < 0.0) throw std::invalid_argument("segment length must be >= 0");
  if (!std::isfinite(birefringence) || birefringence < 0.0) {
    throw std::invalid_argument("birefringence must be >= 0");
  }
  if (!std::isfinite(axis_tilt)) throw std::invalid_argument("axis tilt must be finite");
}

double WaveguideDevice::total_length() const {
  double l = 0.0;
  for (const auto& s : segments) l += s.length;
  return l;
}

double retardance(const WaveguideSegment& seg, double wavelength) {
  if (!(wavelength > 0.0) || !std::isfinite(wavelength)) {
    throw std::domain_error("retardance: wavelength must be positive");
  }
  seg.validate();
  return 2.0 * kPi * seg.birefringence * seg.length / wavelength;
}

PlateOperator segment_operator(const WaveguideSegment& seg, double wavelength) {
  return waveplate_matrix(seg.axis_tilt, retardance(seg, wavelength));
}

DeviceResponse device_operator(const WaveguideDevice& dev) {
  if (dev.segments.empty()) throw std::invalid_argument("device needs at least one segment");
  if (dev.junction_loss_db < 0.0 || dev.propagation_loss_db_per_cm < 0.0) {
    throw std::invalid_argument("loss figures must be >= 0");
  }
  DeviceResponse r;
  for (const auto& seg : dev.segments) r.polarization = segment_operator(seg, dev.wavelength) * r.polarization;
  const double junctions = static_cast<double>(dev.segments.size() - 1);
  const double loss_db =
      dev.junction_loss_db * junctions + dev.propagation_loss_db_per_cm * dev.total_length() * 100.0;
  r.transmittance = std::pow(10.0, -loss_db / 10.0);
  return r;
}

double half_wave_length(double birefringence, double wavelength) {
  if (!(birefringence > 0.0)) throw std::domain_error("half_wave_length: birefringence must be positive");
  if (!(wavelength > 0.0)) throw std::domain_error("half_wave_length: wavelength must be positive");
  return wavelength / (2.0 * birefringence);
}

std::vector<TransferPoint> transfer_curves(double tilt, double birefringence, double wavelength,
                                           const std::vector<double>& lengths) {
  std::vector<TransferPoint> out;
  out.reserve(lengths.size());
  const PolarizationState input = PolarizationState::H();
  for (double l : lengths) {
    if (!(l >= 0.0)) throw std::invalid_argument("transfer_curves: lengths must be >= 0");
    const WaveguideSegment seg{l, birefringence, tilt};
    const PolarizationState out_state = apply(segment_operator(seg, wavelength), input);
    out.push_back({l, projector_probability(out_state, Projector::H),
                   projector_probability(out_state, Projector::V),
                   projector_probability(out_state, Projector::D),
                   projector_probability(out_state, Projector::A)});
  }
  return out;
}

void write_transfer_csv(std::ostream& os, const std::vector<TransferPoint>& points) {
  os << "length_mm,p_H,p_V,p_D,p_A\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f\n", p.length * 1e3, p.p_h, p.p_v, p.p_d, p.p_a);
    os << buf;
  }
}

}  // namespace iwp
