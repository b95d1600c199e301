#include "iwp/characterization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iwp/least_squares.hpp"
#include "iwp/waveguide.hpp"
#include "iwp/waveplate_algebra.hpp"

namespace iwp {

namespace {

Eigen::Vector3d bloch(const StokesVector& s) {
  const double p = s.polarized_intensity();
  if (p == 0.0) return Eigen::Vector3d::Zero();
  return Eigen::Vector3d(s.s1, s.s2, s.s3) / p;
}

Eigen::Vector3d output_bloch(double theta, double delta, const PolarizationState& input) {
  return bloch(to_stokes(apply(waveplate_matrix(theta, delta), input.normalized())));
}

void check_not_collinear(const std::vector<PolarimetrySample>& samples) {
  const Eigen::Vector3d ref = bloch(to_stokes(samples.front().input));
  for (const auto& s : samples) {
    if (ref.cross(bloch(to_stokes(s.input))).norm() > 1e-6) return;
  }
  throw AmbiguityError("polarimetry inputs are collinear on the Poincare sphere; retardance is unobservable");
}

}  // namespace

std::vector<PolarizationState> default_probe_states() {
  std::vector<PolarizationState> v;
  for (auto p : kAllProjectors) v.push_back(PolarizationState::from_projector(p));
  return v;
}

std::vector<PolarimetrySample> simulate_polarimetry(double theta, double delta,
                                                    const std::vector<PolarizationState>& inputs) {
  std::vector<PolarimetrySample> out;
  out.reserve(inputs.size());
  const PlateOperator m = waveplate_matrix(theta, delta);
  for (const auto& in : inputs) out.push_back({in, to_stokes(apply(m, in.normalized()))});
  return out;
}

AxisRetardanceFit fit_axis_and_retardance(const std::vector<PolarimetrySample>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("fit_axis_and_retardance: need at least 2 samples");
  check_not_collinear(samples);

  const auto n = static_cast<Eigen::Index>(samples.size());
  std::vector<Eigen::Vector3d> measured;
  measured.reserve(samples.size());
  for (const auto& s : samples) {
    if (!(s.output.s0 > 0.0)) throw std::invalid_argument("output Stokes vector must have s0 > 0");
    measured.push_back(Eigen::Vector3d(s.output.s1, s.output.s2, s.output.s3) / s.output.s0);
  }

  auto residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(3 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r.segment<3>(3 * i) = output_bloch(p(0), p(1), samples[i].input) - measured[i];
    }
    return r;
  };

  Eigen::VectorXd best(2);
  double best_cost = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 180; ++it) {
    for (int id = 0; id < 180; ++id) {
      Eigen::VectorXd p(2);
      p << deg_to_rad(-90.0 + it), deg_to_rad(2.0 * id);
      const double c = residuals(p).squaredNorm();
      if (c < best_cost) {
        best_cost = c;
        best = p;
      }
    }
  }

  GaussNewtonOptions opt;
  opt.gradient_tolerance = 1e-12;
  const GaussNewtonResult gn = gauss_newton(residuals, best, opt);

  const Eigen::Matrix2d jtj = gn.jacobian.transpose() * gn.jacobian;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(jtj);
  if (es.eigenvalues()(0) <= 1e-10 * std::max(1.0, es.eigenvalues()(1))) {
    throw AmbiguityError("axis tilt and retardance are not jointly identifiable from these samples");
  }

  const EquivalentPlate canon = canonicalize({gn.params(0), gn.params(1)});
  AxisRetardanceFit fit;
  fit.theta = canon.spec.theta;
  fit.delta = canon.spec.delta;
  fit.rms = gn.rms();
  fit.covariance = gn.covariance();
  fit.converged = gn.converged;
  return fit;
}

BirefringenceEstimate birefringence_from_retardance(double delta, double length, double wavelength,
                                                    std::optional<int> branch) {
  if (!(length > 0.0)) throw std::invalid_argument("birefringence_from_retardance: length must be positive");
  if (!(wavelength > 0.0)) throw std::invalid_argument("birefringence_from_retardance: wavelength must be positive");
  if (!std::isfinite(delta)) throw std::invalid_argument("birefringence_from_retardance: non-finite retardance");

  const double per_radian = wavelength / (2.0 * kPi * length);
  auto value = [&](int k) { return (delta + 2.0 * kPi * k) * per_radian; };

  BirefringenceEstimate est;
  // Enumerate branches whose b lies in the plausible window.
  const int k_max = static_cast<int>(std::ceil(kPlausibleBirefringenceMax / (2.0 * kPi * per_radian))) + 1;
  for (int k = 0; k <= k_max; ++k) {
    const double b = value(k);
    if (b >= kPlausibleBirefringenceMin && b <= kPlausibleBirefringenceMax) est.plausible.push_back(b);
  }
  est.ambiguous = est.plausible.size() > 1;

  if (branch) {
    est.branch = *branch;
  } else {
    int best_k = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= k_max; ++k) {
      const double b = value(k);
      if (b < 0.0) continue;
      const double gap = std::abs(b - kTypicalBirefringence);
      if (gap < best_gap) {
        best_gap = gap;
        best_k = k;
      }
    }
    est.branch = best_k;
  }
  est.birefringence = value(est.branch);
  if (est.birefringence < 0.0) throw std::invalid_argument("selected branch gives negative birefringence");
  return est;
}

TiltFit fit_tilt_from_scan(const std::vector<LengthScanSample>& samples, double birefringence,
                           double wavelength, bool fit_birefringence) {
  if (!(birefringence > 0.0) || !(wavelength > 0.0)) {
    throw std::invalid_argument("fit_tilt_from_scan: birefringence and wavelength must be positive");
  }
  std::vector<double> lengths;
  bool have_da = false;
  for (const auto& s : samples) {
    if (!(s.length >= 0.0)) throw std::invalid_argument("fit_tilt_from_scan: negative length");
    if (!s.hv && !s.da) throw std::invalid_argument("fit_tilt_from_scan: sample without powers");
    for (const auto& pair : {s.hv, s.da}) {
      if (pair && std::abs(pair->first + pair->second - 1.0) > 0.02) {
        throw std::invalid_argument("fit_tilt_from_scan: power pair does not sum to 1 within 0.02");
      }
    }
    have_da = have_da || s.da.has_value();
    lengths.push_back(s.length);
  }
  std::sort(lengths.begin(), lengths.end());
  lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
  if (lengths.size() < 3) throw std::invalid_argument("fit_tilt_from_scan: need at least 3 distinct lengths");

  Eigen::Index m = 0;
  for (const auto& s : samples) m += (s.hv ? 2 : 0) + (s.da ? 2 : 0);

  // params: theta, and b / b0 when fitting birefringence
  auto residuals = [&](const Eigen::VectorXd& p) {
    const double b = fit_birefringence ? p(1) * birefringence : birefringence;
    Eigen::VectorXd r(m);
    Eigen::Index k = 0;
    for (const auto& s : samples) {
      const auto pt = transfer_curves(p(0), std::max(b, 0.0), wavelength, {s.length}).front();
      if (s.hv) {
        r(k++) = pt.p_h - s.hv->first;
        r(k++) = pt.p_v - s.hv->second;
      }
      if (s.da) {
        r(k++) = pt.p_d - s.da->first;
        r(k++) = pt.p_a - s.da->second;
      }
    }
    return r;
  };

  Eigen::VectorXd best(fit_birefringence ? 2 : 1);
  double best_cost = std::numeric_limits<double>::infinity();
  const int n_scale = fit_birefringence ? 61 : 1;
  for (int it = 0; it <= 360; ++it) {
    for (int ib = 0; ib < n_scale; ++ib) {
      Eigen::VectorXd p(best.size());
      p(0) = deg_to_rad(-45.0 + 0.25 * it);
      if (fit_birefringence) p(1) = 0.7 + 0.01 * ib;
      const double c = residuals(p).squaredNorm();
      if (c < best_cost) {
        best_cost = c;
        best = p;
      }
    }
  }

  GaussNewtonOptions opt;
  opt.gradient_tolerance = 1e-12;
  const GaussNewtonResult gn = gauss_newton(residuals, best, opt);

  TiltFit fit;
  fit.theta = have_da ? gn.params(0) : std::abs(gn.params(0));
  fit.birefringence = fit_birefringence ? gn.params(1) * birefringence : birefringence;
  fit.rms = gn.rms();
  fit.covariance = gn.covariance();
  if (fit_birefringence) {
    fit.covariance.row(1) *= birefringence;
    fit.covariance.col(1) *= birefringence;
  }
  fit.converged = gn.converged;
  fit.ill_conditioned = lengths.back() - lengths.front() < half_wave_length(fit.birefringence, wavelength);
  return fit;
}

}  // namespace iwp
