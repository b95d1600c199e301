#include "iwp/jones.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iwp {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
const Complex kI(0.0, 1.0);

// Eigenvalues below this fraction of the largest are round-off and are
// zeroed before square roots, which would otherwise amplify them to ~1e-8.
constexpr double kRelativeEigenFloor = 1e-14;

double clipped_sqrt(double ev, double top) { return ev > kRelativeEigenFloor * top ? std::sqrt(ev) : 0.0; }

Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  for (int i = 0; i < ev.size(); ++i) ev(i) = clipped_sqrt(ev(i), top);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

void require_psd(const DensityMatrix& rho) {
  if (!rho.is_psd(1e-9)) {
    throw std::invalid_argument("fidelity: density matrix is not positive semidefinite");
  }
}

}  // namespace

std::string_view to_string(Projector p) {
  switch (p) {
    case Projector::H: return "H";
    case Projector::V: return "V";
    case Projector::D: return "D";
    case Projector::A: return "A";
    case Projector::R: return "R";
    case Projector::L: return "L";
  }
  return "?";
}

Projector projector_from_string(std::string_view label) {
  for (auto p : kAllProjectors) {
    if (to_string(p) == label) return p;
  }
  throw std::invalid_argument("unknown projector label '" + std::string(label) + "'");
}

Projector orthogonal(Projector p) {
  const int i = index_of(p);
  return static_cast<Projector>(i % 2 == 0 ? i + 1 : i - 1);
}

PolarizationState PolarizationState::H() { return {1.0, 0.0}; }
PolarizationState PolarizationState::V() { return {0.0, 1.0}; }
PolarizationState PolarizationState::D() { return {kInvSqrt2, kInvSqrt2}; }
PolarizationState PolarizationState::A() { return {kInvSqrt2, -kInvSqrt2}; }
PolarizationState PolarizationState::R() { return {kInvSqrt2, -kI * kInvSqrt2}; }
PolarizationState PolarizationState::L() { return {kInvSqrt2, kI * kInvSqrt2}; }

PolarizationState PolarizationState::from_projector(Projector p) {
  switch (p) {
    case Projector::H: return H();
    case Projector::V: return V();
    case Projector::D: return D();
    case Projector::A: return A();
    case Projector::R: return R();
    case Projector::L: return L();
  }
  throw std::invalid_argument("bad projector");
}

PolarizationState PolarizationState::normalized() const {
  const double n = norm();
  if (n == 0.0) throw std::domain_error("cannot normalize a zero Jones vector");
  return PolarizationState(Vector2c(amps_ / n));
}

double StokesVector::polarized_intensity() const { return std::sqrt(s1 * s1 + s2 * s2 + s3 * s3); }

bool PlateOperator::is_unitary(double tol) const {
  const Matrix2c d = m_.adjoint() * m_ - Matrix2c::Identity();
  return d.cwiseAbs().maxCoeff() < tol;
}

PlateOperator waveplate_matrix(double theta, double delta) {
  if (!std::isfinite(theta) || !std::isfinite(delta)) {
    throw std::domain_error("waveplate_matrix: non-finite angle");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const Complex e = std::polar(1.0, delta);
  Matrix2c m;
  m(0, 0) = c * c + e * (s * s);
  m(0, 1) = (1.0 - e) * (s * c);
  m(1, 0) = m(0, 1);
  m(1, 1) = e * (c * c) + s * s;
  return PlateOperator(m);
}

PolarizationState apply(const PlateOperator& op, const PolarizationState& state) {
  return PolarizationState(Vector2c(op.matrix() * state.amplitudes()));
}

StokesVector to_stokes(const PolarizationState& state) {
  const Complex a = state.alpha();
  const Complex b = state.beta();
  const Complex ab = std::conj(a) * b;
  StokesVector s;
  s.s0 = std::norm(a) + std::norm(b);
  s.s1 = std::norm(a) - std::norm(b);
  s.s2 = 2.0 * ab.real();
  // p_R = |<R|psi>|^2 = (s0 - 2 Im(a* b))/2
  s.s3 = -2.0 * ab.imag();
  return s;
}

PolarizationState from_stokes(const StokesVector& s) {
  const double p = s.polarized_intensity();
  if (p == 0.0) throw std::domain_error("from_stokes: unpolarized Stokes vector");
  const double x = s.s1 / p;
  const double y = s.s2 / p;
  const double z = s.s3 / p;
  // Polar angle measured from the H pole, azimuth in the s2/s3 plane.
  const double alpha = std::sqrt(std::max(0.0, (1.0 + x) / 2.0));
  const double beta_mag = std::sqrt(std::max(0.0, (1.0 - x) / 2.0));
  if (beta_mag == 0.0) return PolarizationState::H();
  // s2 = 2 alpha |beta| cos(phi), s3 = -2 alpha |beta| sin(phi)
  const double phi = std::atan2(-z, y);
  return PolarizationState(alpha, std::polar(beta_mag, phi));
}

Matrix2c projector_matrix(Projector p) {
  const Vector2c v = PolarizationState::from_projector(p).amplitudes();
  return v * v.adjoint();
}

Matrix2c pauli(int k) {
  switch (k) {
    case 0: return Matrix2c::Identity();
    case 1: return projector_matrix(Projector::H) - projector_matrix(Projector::V);
    case 2: return projector_matrix(Projector::D) - projector_matrix(Projector::A);
    case 3: return projector_matrix(Projector::R) - projector_matrix(Projector::L);
    default: throw std::out_of_range("pauli index must be 0..3");
  }
}

TwoPhotonState TwoPhotonState::psi_minus() {
  Vector4c v = Vector4c::Zero();
  v(1) = kInvSqrt2;
  v(2) = -kInvSqrt2;
  return TwoPhotonState(v);
}

TwoPhotonState TwoPhotonState::product(const PolarizationState& a, const PolarizationState& b) {
  Vector4c v;
  v(0) = a.alpha() * b.alpha();
  v(1) = a.alpha() * b.beta();
  v(2) = a.beta() * b.alpha();
  v(3) = a.beta() * b.beta();
  return TwoPhotonState(v);
}

TwoPhotonState TwoPhotonState::normalized() const {
  const double n = amps_.norm();
  if (n == 0.0) throw std::domain_error("cannot normalize a zero two-photon vector");
  return TwoPhotonState(Vector4c(amps_ / n));
}

DensityMatrix::DensityMatrix(const Eigen::MatrixXcd& m) : m_(m) {
  if (m.rows() != m.cols() || (m.rows() != 2 && m.rows() != 4)) {
    throw std::invalid_argument("density matrix must be 2x2 or 4x4");
  }
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("density matrix is not Hermitian");
  }
  if (std::abs(m.trace() - Complex(1.0)) > 1e-10) {
    throw std::invalid_argument("density matrix trace is not 1");
  }
  // Remove round-off asymmetry so eigen solvers see an exactly Hermitian input.
  m_ = 0.5 * (m + m.adjoint());
}

DensityMatrix DensityMatrix::from_pure(const PolarizationState& s) {
  const Vector2c v = s.normalized().amplitudes();
  return DensityMatrix(v * v.adjoint());
}

DensityMatrix DensityMatrix::from_pure(const TwoPhotonState& s) {
  const Vector4c v = s.normalized().amplitudes();
  return DensityMatrix(v * v.adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed(int dim) {
  if (dim != 2 && dim != 4) throw std::invalid_argument("dimension must be 2 or 4");
  return DensityMatrix(Eigen::MatrixXcd::Identity(dim, dim) / static_cast<double>(dim));
}

DensityMatrix DensityMatrix::from_stokes(const StokesVector& s) {
  if (s.s0 <= 0.0) throw std::domain_error("from_stokes: s0 must be positive");
  const Matrix2c m =
      0.5 * (pauli(0) + (s.s1 / s.s0) * pauli(1) + (s.s2 / s.s0) * pauli(2) + (s.s3 / s.s0) * pauli(3));
  return DensityMatrix(m);
}

Eigen::VectorXd DensityMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double DensityMatrix::min_eigenvalue() const { return eigenvalues().minCoeff(); }

double DensityMatrix::purity() const { return (m_ * m_).trace().real(); }

StokesVector DensityMatrix::stokes() const {
  if (dim() != 2) throw std::invalid_argument("stokes() requires a single-qubit density matrix");
  StokesVector s;
  s.s0 = 1.0;
  s.s1 = (m_ * pauli(1)).trace().real();
  s.s2 = (m_ * pauli(2)).trace().real();
  s.s3 = (m_ * pauli(3)).trace().real();
  return s;
}

double projector_probability(const PolarizationState& state, Projector p) {
  const Vector2c v = PolarizationState::from_projector(p).amplitudes();
  return std::norm(v.dot(state.amplitudes()));
}

double projector_probability(const DensityMatrix& rho, Projector p) {
  if (rho.dim() != 2) throw std::invalid_argument("single-photon projector needs a 2x2 density matrix");
  return std::clamp((rho.matrix() * projector_matrix(p)).trace().real(), 0.0, 1.0);
}

double projector_probability(const TwoPhotonState& state, ProjectorPair p) {
  const TwoPhotonState proj = TwoPhotonState::product(PolarizationState::from_projector(p.a),
                                                      PolarizationState::from_projector(p.b));
  return std::norm(proj.amplitudes().dot(state.amplitudes()));
}

double projector_probability(const DensityMatrix& rho, ProjectorPair p) {
  if (rho.dim() != 4) throw std::invalid_argument("projector pair needs a 4x4 density matrix");
  const Matrix4c proj = kron(projector_matrix(p.a), projector_matrix(p.b));
  return std::clamp((rho.matrix() * proj).trace().real(), 0.0, 1.0);
}

double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  require_psd(rho);
  require_psd(sigma);
  const Eigen::MatrixXcd sr = psd_sqrt(rho.matrix());
  const Eigen::MatrixXcd inner = sr * sigma.matrix() * sr;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (inner + inner.adjoint()),
                                                     Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  double tr = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) tr += clipped_sqrt(es.eigenvalues()(i), top);
  return std::clamp(tr * tr, 0.0, 1.0);
}

double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim()) throw std::invalid_argument("trace_distance: dimension mismatch");
  const Eigen::MatrixXcd diff = rho.matrix() - sigma.matrix();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(diff, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
  Matrix4c k;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) k.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return k;
}

}  // namespace iwp
