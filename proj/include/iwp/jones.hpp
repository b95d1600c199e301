/**
 * @file jones.hpp
 * @brief Jones vectors, Jones matrices, Stokes vectors and density matrices
 *        for polarization-encoded qubits.
 *
 * Conventions used throughout the library:
 *  - |H> = (1, 0), |V> = (0, 1)
 *  - |D> = (1, 1)/sqrt2, |A> = (1, -1)/sqrt2
 *  - |R> = (1, -i)/sqrt2, |L> = (1, i)/sqrt2
 *  - Pauli-like observables are projector differences:
 *      sigma_1 = P_H - P_V, sigma_2 = P_D - P_A, sigma_3 = P_R - P_L
 *    so that p_X = (1 + s_X)/2 for X in {H, D, R}.
 *  - Two-photon product basis is ordered |HH>, |HV>, |VH>, |VV>
 *    (photon A is the most significant index).
 */

#pragma once

#include <array>
#include <complex>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace iwp {

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;
using Vector2c = Eigen::Vector2cd;
using Matrix4c = Eigen::Matrix4cd;
using Vector4c = Eigen::Vector4cd;

inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// The six canonical projector labels, in the order used by every count table.
enum class Projector { H = 0, V = 1, D = 2, A = 3, R = 4, L = 5 };

inline constexpr std::array<Projector, 6> kAllProjectors = {
    Projector::H, Projector::V, Projector::D, Projector::A, Projector::R, Projector::L};

std::string_view to_string(Projector p);
/// Parses "H", "V", ... (case-sensitive). Throws std::invalid_argument.
Projector projector_from_string(std::string_view label);
/// The orthogonal partner (H<->V, D<->A, R<->L).
Projector orthogonal(Projector p);
inline int index_of(Projector p) { return static_cast<int>(p); }

struct ProjectorPair {
  Projector a;
  Projector b;
};

/**
 * Pure polarization state (Jones vector). Amplitudes are stored as given;
 * operators that carry loss may produce un-normalized states, use
 * normalized() to renormalize.
 */
class PolarizationState {
 public:
  PolarizationState() : amps_(1.0, 0.0) {}
  PolarizationState(Complex alpha, Complex beta) : amps_(alpha, beta) {}
  explicit PolarizationState(const Vector2c& amps) : amps_(amps) {}

  static PolarizationState H();
  static PolarizationState V();
  static PolarizationState D();
  static PolarizationState A();
  static PolarizationState R();
  static PolarizationState L();
  static PolarizationState from_projector(Projector p);

  Complex alpha() const { return amps_(0); }
  Complex beta() const { return amps_(1); }
  const Vector2c& amplitudes() const { return amps_; }

  double norm() const { return amps_.norm(); }
  /// Throws std::domain_error for the zero vector.
  PolarizationState normalized() const;

 private:
  Vector2c amps_;
};

struct StokesVector {
  double s0 = 1.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;

  double polarized_intensity() const;
  double degree_of_polarization() const { return polarized_intensity() / s0; }
};

/// 2x2 Jones matrix.
class PlateOperator {
 public:
  PlateOperator() : m_(Matrix2c::Identity()) {}
  explicit PlateOperator(const Matrix2c& m) : m_(m) {}

  static PlateOperator identity() { return PlateOperator(); }

  const Matrix2c& matrix() const { return m_; }
  Complex operator()(int r, int c) const { return m_(r, c); }

  PlateOperator adjoint() const { return PlateOperator(m_.adjoint()); }
  bool is_unitary(double tol = 1e-12) const;

  /// Composition: (a * b) applies b first, then a.
  friend PlateOperator operator*(const PlateOperator& a, const PlateOperator& b) {
    return PlateOperator(a.m_ * b.m_);
  }
  friend PlateOperator operator*(Complex s, const PlateOperator& a) { return PlateOperator(s * a.m_); }

 private:
  Matrix2c m_;
};

/**
 * Jones matrix of a linear retarder with fast axis at angle @p theta from
 * the x (horizontal) axis and phase delay @p delta:
 *
 *   [ cos^2 t + e^{id} sin^2 t      (1 - e^{id}) sin t cos t ]
 *   [ (1 - e^{id}) sin t cos t      e^{id} cos^2 t + sin^2 t ]
 *
 * Throws std::domain_error for non-finite input.
 */
PlateOperator waveplate_matrix(double theta, double delta);

/// J' = M J. No renormalization.
PolarizationState apply(const PlateOperator& op, const PolarizationState& state);

StokesVector to_stokes(const PolarizationState& state);

/// Pure state on the Poincare sphere with the given Stokes direction.
/// Throws std::domain_error for a zero polarized component.
PolarizationState from_stokes(const StokesVector& s);

/// Projector |p><p| for a canonical label.
Matrix2c projector_matrix(Projector p);

/// Observable P_X - P_X_perp for basis index 1 (H/V), 2 (D/A), 3 (R/L); 0 is the identity.
Matrix2c pauli(int k);

/// Two-photon pure state in the |HH>,|HV>,|VH>,|VV> basis.
class TwoPhotonState {
 public:
  TwoPhotonState() : amps_(Vector4c::Zero()) { amps_(0) = 1.0; }
  explicit TwoPhotonState(const Vector4c& amps) : amps_(amps) {}

  /// (|HV> - |VH>)/sqrt2
  static TwoPhotonState psi_minus();
  static TwoPhotonState product(const PolarizationState& a, const PolarizationState& b);

  const Vector4c& amplitudes() const { return amps_; }
  TwoPhotonState normalized() const;

 private:
  Vector4c amps_;
};

/**
 * Density matrix of dimension 2 or 4. Construction enforces Hermiticity and
 * unit trace (to 1e-10); positivity is a query, since linear-inversion
 * estimates may be slightly non-physical.
 */
class DensityMatrix {
 public:
  /// Throws std::invalid_argument on bad dimension, non-Hermitian or non-unit-trace input.
  explicit DensityMatrix(const Eigen::MatrixXcd& m);

  static DensityMatrix from_pure(const PolarizationState& s);
  static DensityMatrix from_pure(const TwoPhotonState& s);
  static DensityMatrix maximally_mixed(int dim);
  /// rho = (I + s1 sigma1 + s2 sigma2 + s3 sigma3)/2 with s normalized by s0.
  static DensityMatrix from_stokes(const StokesVector& s);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXcd& matrix() const { return m_; }
  Complex operator()(int r, int c) const { return m_(r, c); }

  Eigen::VectorXd eigenvalues() const;
  double min_eigenvalue() const;
  bool is_psd(double tol = 1e-9) const { return min_eigenvalue() >= -tol; }
  double purity() const;
  /// Only for dim 2.
  StokesVector stokes() const;

 private:
  Eigen::MatrixXcd m_;
};

double projector_probability(const PolarizationState& state, Projector p);
double projector_probability(const DensityMatrix& rho, Projector p);
double projector_probability(const TwoPhotonState& state, ProjectorPair p);
double projector_probability(const DensityMatrix& rho, ProjectorPair p);

/**
 * Uhlmann fidelity F = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, computed through
 * Hermitian eigendecompositions. Eigenvalues in [-1e-9, 0) are clipped to zero;
 * anything more negative is rejected. Throws std::invalid_argument on dimension
 * mismatch or non-PSD input.
 */
double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

/// 0.5 * ||rho - sigma||_1
double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma);

/// Kronecker product of two 2x2 matrices, A acting on photon A.
Matrix4c kron(const Matrix2c& a, const Matrix2c& b);

}  // namespace iwp
