#include "iwp/qst_device.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

namespace iwp {

namespace {

constexpr double kSplit = 1.0 / 3.0;

using Point2 = std::array<double, 2>;

// Nelder-Mead on a 2-D objective, started from a simplex of edge @p step around x0.
Point2 nelder_mead(const std::function<double(const Point2&)>& f, Point2 x0, double step) {
  std::array<Point2, 3> x{x0, {x0[0] + step, x0[1]}, {x0[0], x0[1] + step}};
  std::array<double, 3> fx{f(x[0]), f(x[1]), f(x[2])};
  auto lerp = [](const Point2& a, const Point2& b, double t) {
    return Point2{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
  };
  for (int it = 0; it < 4000; ++it) {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    const int best = idx[0], mid = idx[1], worst = idx[2];
    const double size = std::max(std::hypot(x[mid][0] - x[best][0], x[mid][1] - x[best][1]),
                                 std::hypot(x[worst][0] - x[best][0], x[worst][1] - x[best][1]));
    if (fx[best] == 0.0 || size < 1e-14) break;

    const Point2 centroid{(x[best][0] + x[mid][0]) / 2.0, (x[best][1] + x[mid][1]) / 2.0};
    const Point2 xr = lerp(centroid, x[worst], -1.0);
    const double fr = f(xr);
    if (fr < fx[best]) {
      const Point2 xe = lerp(centroid, x[worst], -2.0);
      const double fe = f(xe);
      if (fe < fr) {
        x[worst] = xe;
        fx[worst] = fe;
      } else {
        x[worst] = xr;
        fx[worst] = fr;
      }
    } else if (fr < fx[mid]) {
      x[worst] = xr;
      fx[worst] = fr;
    } else {
      const bool outside = fr < fx[worst];
      const Point2 xc = outside ? lerp(centroid, xr, 0.5) : lerp(centroid, x[worst], 0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fx[worst])) {
        x[worst] = xc;
        fx[worst] = fc;
      } else {
        for (int k : {mid, worst}) {
          x[k] = lerp(x[best], x[k], 0.5);
          fx[k] = f(x[k]);
        }
      }
    }
  }
  const auto best = std::min_element(fx.begin(), fx.end()) - fx.begin();
  return x[best];
}

double leakage(const ChipSide& side, Arm arm, const PolarizationState& input) {
  return arm_probabilities(side, arm, input)[1];
}

}  // namespace

PlateOperator CompensationSettings::compensator() const {
  return waveplate_matrix(pc_theta, pc_delta) * waveplate_matrix(0.0, lc_phase);
}

const PlateCascade& ChipSide::arm(Arm a) const {
  switch (a) {
    case Arm::Alpha: return alpha;
    case Arm::Beta: return beta;
    case Arm::Gamma: return gamma;
  }
  throw std::invalid_argument("bad arm");
}

Vector2c ChipSide::effective_state(Arm a, PbsPort p) const {
  const Vector2c port = p == PbsPort::Transmitted ? Vector2c(1.0, 0.0) : Vector2c(0.0, 1.0);
  return arm_operator(a).matrix().adjoint() * port;
}

Matrix2c ChipSide::povm(int port) const {
  if (port < 0 || port > 5) throw std::out_of_range("port index must be 0..5");
  const Vector2c e = effective_state(static_cast<Arm>(port / 2), static_cast<PbsPort>(port % 2));
  return (kSplit * transmittance * detector_efficiency) * (e * e.adjoint());
}

ProjectorTable ideal_projector_map(const ChipSide& side) {
  ProjectorTable table{};
  for (int a = 0; a < 3; ++a) {
    for (int p = 0; p < 2; ++p) {
      const Vector2c e = side.effective_state(static_cast<Arm>(a), static_cast<PbsPort>(p));
      bool found = false;
      for (auto label : kAllProjectors) {
        const Vector2c c = PolarizationState::from_projector(label).amplitudes();
        if (std::norm(c.dot(e)) >= 1.0 - 1e-12) {
          table[a][p] = label;
          found = true;
          break;
        }
      }
      if (!found) throw std::invalid_argument("chip side does not project on a canonical basis");
    }
  }
  return table;
}

std::array<double, 2> arm_probabilities(const ChipSide& side, Arm a, const PolarizationState& input) {
  const PolarizationState in = input.normalized();
  const double pt = std::norm(side.effective_state(a, PbsPort::Transmitted).dot(in.amplitudes()));
  const double pr = std::norm(side.effective_state(a, PbsPort::Reflected).dot(in.amplitudes()));
  const double total = pt + pr;
  if (total == 0.0) return {0.0, 0.0};
  return {pt / total, pr / total};
}

ChipSide apply_prefix(const ChipSide& side, const PlateOperator& u) {
  if (!u.is_unitary(1e-9)) throw std::invalid_argument("apply_prefix: prefix must be unitary");
  ChipSide out = side;
  out.prefix = u;
  return out;
}

ChipSide with_compensation(const ChipSide& side, const CompensationSettings& settings) {
  ChipSide out = side;
  out.compensator = settings.compensator();
  return out;
}

CompensationSettings compensate(const ChipSide& side) {
  CompensationSettings s;

  // Stage 1: H in, extinguish V at the alpha outputs.
  auto stage1 = [&](const Point2& p) {
    CompensationSettings trial;
    trial.pc_theta = p[0];
    trial.pc_delta = p[1];
    return leakage(with_compensation(side, trial), Arm::Alpha, PolarizationState::H());
  };
  Point2 best{0.0, 0.0};
  double best_val = stage1(best);
  for (int i = 0; i < 36 && best_val > 0.0; ++i) {
    for (int j = 0; j < 36; ++j) {
      const Point2 p{i * kPi / 36.0, j * 2.0 * kPi / 36.0};
      const double v = stage1(p);
      if (v < best_val) {
        best_val = v;
        best = p;
      }
    }
  }
  if (best_val > 0.0) {
    best = nelder_mead(stage1, best, deg_to_rad(2.0));
    // A restart from the converged point clears a collapsed simplex.
    best = nelder_mead(stage1, best, 1e-4);
  }
  s.pc_theta = best[0];
  s.pc_delta = best[1];
  s.stage1_residual = stage1(best);

  // Stage 2: D in, tune the H/V phase until the beta outputs show no A.
  auto stage2 = [&](double phi) {
    CompensationSettings trial = s;
    trial.lc_phase = phi;
    return leakage(with_compensation(side, trial), Arm::Beta, PolarizationState::D());
  };
  double phi_best = 0.0;
  double phi_val = stage2(0.0);
  for (int k = 0; k < 72 && phi_val > 0.0; ++k) {
    const double phi = -kPi + k * kPi / 36.0;
    const double v = stage2(phi);
    if (v < phi_val) {
      phi_val = v;
      phi_best = phi;
    }
  }
  if (phi_val > 0.0) {
    const double half_width = kPi / 36.0;
    const auto r = boost::math::tools::brent_find_minima(stage2, phi_best - half_width, phi_best + half_width,
                                                         std::numeric_limits<double>::digits);
    if (r.second < phi_val) phi_best = r.first;
  }
  s.lc_phase = phi_best;
  s.stage2_residual = stage2(phi_best);

  s.circular_residual = leakage(with_compensation(side, s), Arm::Gamma, PolarizationState::R());
  s.converged = s.stage1_residual < 1e-6 && s.stage2_residual < 1e-6;
  return s;
}

std::uint64_t CoincidenceRecord::sum() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

std::uint64_t SingleCountRecord::sum() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

ExpectedCounts2 expected_counts(const DensityMatrix& rho, const ChipSides& sides, double total_pairs,
                                const SimulationOptions& opt) {
  if (rho.dim() != 4) throw std::invalid_argument("expected_counts: two-photon density matrix required");
  ExpectedCounts2 out{};
  for (int i = 0; i < 6; ++i) {
    const Matrix2c ea = sides.first.povm(i);
    for (int j = 0; j < 6; ++j) {
      const Matrix4c e = kron(ea, sides.second.povm(j));
      const double p = std::max(0.0, (rho.matrix() * e).trace().real());
      out[i][j] = total_pairs * p + opt.accidentals_per_cell;
    }
  }
  return out;
}

ExpectedCounts1 expected_single_counts(const DensityMatrix& rho, const ChipSide& side, double total_events,
                                       const SimulationOptions& opt) {
  if (rho.dim() != 2) throw std::invalid_argument("expected_single_counts: single-photon density matrix required");
  ExpectedCounts1 out{};
  for (int i = 0; i < 6; ++i) {
    const double p = std::max(0.0, (rho.matrix() * side.povm(i)).trace().real());
    out[i] = total_events * p + opt.accidentals_per_cell;
  }
  return out;
}

CoincidenceRecord simulate_counts(const DensityMatrix& rho, const ChipSides& sides, std::uint64_t total_pairs,
                                  std::uint64_t seed, const SimulationOptions& opt) {
  if (total_pairs == 0) throw std::invalid_argument("simulate_counts: total_pairs must be positive");
  const ExpectedCounts2 mean = expected_counts(rho, sides, static_cast<double>(total_pairs), opt);
  CounterRng rng(seed);
  CoincidenceRecord rec;
  rec.total_pairs = total_pairs;
  rec.seed = seed;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) rec.counts[i][j] = rng.poisson(mean[i][j]);
  return rec;
}

CoincidenceRecord simulate_counts(const TwoPhotonState& state, const ChipSides& sides, std::uint64_t total_pairs,
                                  std::uint64_t seed, const SimulationOptions& opt) {
  return simulate_counts(DensityMatrix::from_pure(state), sides, total_pairs, seed, opt);
}

SingleCountRecord simulate_single_counts(const DensityMatrix& rho, const ChipSide& side,
                                         std::uint64_t total_events, std::uint64_t seed,
                                         const SimulationOptions& opt) {
  if (total_events == 0) throw std::invalid_argument("simulate_single_counts: total_events must be positive");
  const ExpectedCounts1 mean = expected_single_counts(rho, side, static_cast<double>(total_events), opt);
  CounterRng rng(seed);
  SingleCountRecord rec;
  rec.total_events = total_events;
  rec.seed = seed;
  for (int i = 0; i < 6; ++i) rec.counts[i] = rng.poisson(mean[i]);
  return rec;
}

DensityMatrix werner_state(double mixing) {
  if (!(mixing >= 0.0 && mixing <= 1.0)) throw std::invalid_argument("werner_state: mixing must be in [0, 1]");
  const Eigen::MatrixXcd psi = DensityMatrix::from_pure(TwoPhotonState::psi_minus()).matrix();
  return DensityMatrix((1.0 - mixing) * psi + mixing * Eigen::MatrixXcd::Identity(4, 4) / 4.0);
}

PlateOperator random_unitary(CounterRng& rng) {
  Matrix2c z;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) z(r, c) = Complex(rng.normal(), rng.normal()) / std::sqrt(2.0);
  Eigen::HouseholderQR<Matrix2c> qr(z);
  Matrix2c q = qr.householderQ();
  const Matrix2c rr = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fix column phases so the distribution is Haar.
  for (int k = 0; k < 2; ++k) {
    const Complex d = rr(k, k);
    if (std::abs(d) > 0.0) q.col(k) *= d / std::abs(d);
  }
  return PlateOperator(q);
}

PlateOperator residual_unitary(double distance, CounterRng& rng) {
  if (!(distance >= 0.0 && distance <= 2.0)) throw std::invalid_argument("residual distance must be in [0, 2]");
  Eigen::Vector3d n(rng.normal(), rng.normal(), rng.normal());
  while (n.norm() < 1e-12) n = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
  n.normalize();
  const double c = 1.0 - distance * distance / 4.0;  // cos(angle/2)
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const Complex i(0.0, 1.0);
  Matrix2c u;
  // cos I - i sin (n . sigma) with the standard Pauli X, Y, Z
  u(0, 0) = c - i * s * n.z();
  u(0, 1) = -i * s * (n.x() - i * n.y());
  u(1, 0) = -i * s * (n.x() + i * n.y());
  u(1, 1) = c + i * s * n.z();
  return PlateOperator(u);
}

}  // namespace iwp
