// Jones calculus, plate identities and the waveguide model.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "iwp/jones.hpp"
#include "iwp/waveguide.hpp"
#include "iwp/waveplate_algebra.hpp"

using namespace iwp;

namespace {

// Independent plate construction: rotate into the axis frame, retard, rotate back.
Matrix2c oracle_plate(double theta, double delta) {
  Eigen::Matrix2d r;
  r << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
  Matrix2c d = Matrix2c::Zero();
  d(0, 0) = 1.0;
  d(1, 1) = std::polar(1.0, delta);
  return r.transpose().cast<Complex>() * d * r.cast<Complex>();
}

double max_abs(const Matrix2c& m) { return m.cwiseAbs().maxCoeff(); }

Eigen::MatrixXcd random_rho(int d, std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  Eigen::MatrixXcd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = Complex(n(gen), n(gen));
  Eigen::MatrixXcd rho = g * g.adjoint();
  return rho / rho.trace().real();
}

Eigen::MatrixXcd random_unitary_matrix(int d, std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  Eigen::MatrixXcd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = Complex(n(gen), n(gen));
  return Eigen::HouseholderQR<Eigen::MatrixXcd>(g).householderQ();
}

// Closed-form qubit fidelity: Tr(rho sigma) + 2 sqrt(det rho det sigma).
double qubit_fidelity_oracle(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  const double da = a.determinant().real();
  const double db = b.determinant().real();
  return (a * b).trace().real() + 2.0 * std::sqrt(std::max(0.0, da * db));
}

PolarizationState random_state(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  return PolarizationState(Complex(n(gen), n(gen)), Complex(n(gen), n(gen))).normalized();
}

}  // namespace

// ------------------------------------------------------------------- jones

TEST(Jones, WaveplateMatchesRotatedRetarder) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double t = u(gen), d = u(gen);
    EXPECT_LT(max_abs(waveplate_matrix(t, d).matrix() - oracle_plate(t, d)), 1e-12);
  }
}

TEST(Jones, WaveplateIsUnitary) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const Matrix2c m = waveplate_matrix(u(gen), u(gen)).matrix();
    EXPECT_LT(max_abs(m.adjoint() * m - Matrix2c::Identity()), 1e-12);
  }
}

TEST(Jones, WaveplateRejectsNonFinite) {
  EXPECT_THROW(waveplate_matrix(std::nan(""), 0.0), std::domain_error);
  EXPECT_THROW(waveplate_matrix(0.0, INFINITY), std::domain_error);
}

TEST(Jones, ApplyExamples) {
  const auto id = apply(PlateOperator::identity(), PolarizationState::D());
  EXPECT_LT((id.amplitudes() - PolarizationState::D().amplitudes()).norm(), 1e-15);

  const auto d = apply(waveplate_matrix(0.0, kPi / 2), PolarizationState::R());
  EXPECT_NEAR(projector_probability(d, Projector::D), 1.0, 1e-12);
  EXPECT_LT((d.amplitudes() - PolarizationState::D().amplitudes()).norm(), 1e-12);

  const auto h = apply(waveplate_matrix(deg_to_rad(22.5), kPi), PolarizationState::D());
  EXPECT_NEAR(projector_probability(h, Projector::H), 1.0, 1e-12);
}

TEST(Jones, CompositionAppliesRightOperandFirst) {
  const PlateOperator a = waveplate_matrix(0.3, 1.1), b = waveplate_matrix(-0.2, 2.0);
  const auto s = PolarizationState::H();
  const auto lhs = apply(a * b, s);
  const auto rhs = apply(a, apply(b, s));
  EXPECT_LT((lhs.amplitudes() - rhs.amplitudes()).norm(), 1e-14);
}

TEST(Jones, StokesOfCanonicalStates) {
  const auto h = to_stokes(PolarizationState::H());
  EXPECT_NEAR(h.s0, 1.0, 1e-15);
  EXPECT_NEAR(h.s1, 1.0, 1e-15);
  EXPECT_NEAR(h.s2, 0.0, 1e-15);
  EXPECT_NEAR(h.s3, 0.0, 1e-15);
  const auto d = to_stokes(PolarizationState::D());
  EXPECT_NEAR(d.s2, 1.0, 1e-15);
  EXPECT_NEAR(d.s1, 0.0, 1e-15);
  const auto r = to_stokes(PolarizationState::R());
  EXPECT_NEAR(r.s3, 1.0, 1e-15);
  EXPECT_NEAR(r.s1, 0.0, 1e-15);
  EXPECT_NEAR(r.s2, 0.0, 1e-15);
  EXPECT_NEAR(to_stokes(PolarizationState::L()).s3, -1.0, 1e-15);
}

TEST(Jones, CircularConventionIsOneMinusI) {
  const auto r = PolarizationState::R();
  EXPECT_NEAR(std::abs(r.alpha() - Complex(1.0 / std::sqrt(2.0), 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(r.beta() - Complex(0.0, -1.0 / std::sqrt(2.0))), 0.0, 1e-15);
}

TEST(Jones, ProbabilityCompletenessAndStokesRoundTrip) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 500; ++i) {
    const auto s = random_state(gen);
    const double ph = projector_probability(s, Projector::H), pv = projector_probability(s, Projector::V);
    const double pd = projector_probability(s, Projector::D), pa = projector_probability(s, Projector::A);
    const double pr = projector_probability(s, Projector::R), pl = projector_probability(s, Projector::L);
    EXPECT_NEAR(ph + pv, 1.0, 1e-12);
    EXPECT_NEAR(pd + pa, 1.0, 1e-12);
    EXPECT_NEAR(pr + pl, 1.0, 1e-12);

    const auto st = to_stokes(s);
    const Matrix2c rho = 0.5 * (pauli(0) + st.s1 * pauli(1) + st.s2 * pauli(2) + st.s3 * pauli(3));
    const DensityMatrix dm(rho);
    for (auto p : kAllProjectors) {
      EXPECT_NEAR(projector_probability(dm, p), projector_probability(s, p), 1e-12);
    }
    // p_X = (1 + s_X)/2 for X in {H, D, R}
    EXPECT_NEAR(ph, 0.5 * (1 + st.s1), 1e-12);
    EXPECT_NEAR(pd, 0.5 * (1 + st.s2), 1e-12);
    EXPECT_NEAR(pr, 0.5 * (1 + st.s3), 1e-12);
  }
}

TEST(Jones, FromStokesInvertsToStokes) {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_state(gen);
    const auto back = from_stokes(to_stokes(s));
    EXPECT_NEAR(std::abs(back.amplitudes().dot(s.amplitudes())), 1.0, 1e-12);
  }
  EXPECT_THROW(from_stokes(StokesVector{1.0, 0.0, 0.0, 0.0}), std::domain_error);
}

TEST(Jones, TwoPhotonProjectorExamples) {
  const auto psi = TwoPhotonState::psi_minus();
  EXPECT_NEAR(projector_probability(psi, {Projector::H, Projector::V}), 0.5, 1e-15);
  EXPECT_NEAR(projector_probability(psi, {Projector::D, Projector::D}), 0.0, 1e-15);
  const auto rho = DensityMatrix::from_pure(psi);
  EXPECT_NEAR(projector_probability(rho, {Projector::R, Projector::L}), 0.5, 1e-15);
  EXPECT_NEAR(projector_probability(rho, {Projector::R, Projector::R}), 0.0, 1e-15);
  // direct expansion: <HV|psi-> = 1/sqrt2 at index 1, <VH|psi-> = -1/sqrt2 at index 2
  EXPECT_NEAR(psi.amplitudes()(1).real(), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(psi.amplitudes()(2).real(), -1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Jones, SinglePhotonProbabilities) {
  EXPECT_EQ(projector_probability(PolarizationState::H(), Projector::H), 1.0);
  EXPECT_EQ(projector_probability(PolarizationState::H(), Projector::V), 0.0);
}

TEST(Jones, ProjectorDimensionMismatchThrows) {
  const auto rho4 = DensityMatrix::maximally_mixed(4);
  const auto rho2 = DensityMatrix::maximally_mixed(2);
  EXPECT_THROW(projector_probability(rho4, Projector::H), std::invalid_argument);
  EXPECT_THROW(projector_probability(rho2, ProjectorPair{Projector::H, Projector::V}), std::invalid_argument);
}

TEST(Jones, ProjectorLabels) {
  for (auto p : kAllProjectors) EXPECT_EQ(projector_from_string(to_string(p)), p);
  EXPECT_THROW(projector_from_string("X"), std::invalid_argument);
  EXPECT_EQ(orthogonal(Projector::D), Projector::A);
  EXPECT_EQ(orthogonal(Projector::L), Projector::R);
}

TEST(Jones, DensityMatrixValidation) {
  Eigen::MatrixXcd bad = Eigen::MatrixXcd::Identity(2, 2);
  EXPECT_THROW(DensityMatrix{bad}, std::invalid_argument);  // trace 2
  Eigen::MatrixXcd nonherm = 0.5 * Eigen::MatrixXcd::Identity(2, 2);
  nonherm(0, 1) = 0.3;
  EXPECT_THROW(DensityMatrix{nonherm}, std::invalid_argument);
  EXPECT_THROW(DensityMatrix{Eigen::MatrixXcd::Identity(3, 3) / 3.0}, std::invalid_argument);
  EXPECT_THROW(PolarizationState(0.0, 0.0).normalized(), std::domain_error);
}

TEST(Jones, FidelityExamples) {
  const auto h = DensityMatrix::from_pure(PolarizationState::H());
  const auto v = DensityMatrix::from_pure(PolarizationState::V());
  EXPECT_NEAR(fidelity(h, h), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(h, v), 0.0, 1e-12);
  EXPECT_NEAR(fidelity(h, DensityMatrix::maximally_mixed(2)), 0.5, 1e-12);
  EXPECT_THROW(fidelity(h, DensityMatrix::maximally_mixed(4)), std::invalid_argument);
}

TEST(Jones, FidelityRejectsNonPsd) {
  Matrix2c m;
  m << 1.1, 0.0, 0.0, -0.1;
  EXPECT_THROW(fidelity(DensityMatrix(m), DensityMatrix::maximally_mixed(2)), std::invalid_argument);
}

TEST(Jones, FidelityMatchesQubitClosedForm) {
  std::mt19937_64 gen(5);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_rho(2, gen), b = random_rho(2, gen);
    EXPECT_NEAR(fidelity(DensityMatrix(a), DensityMatrix(b)), qubit_fidelity_oracle(a, b), 1e-9);
  }
}

TEST(Jones, FidelitySymmetricAndUnitarilyInvariant) {
  std::mt19937_64 gen(6);
  for (int d : {2, 4}) {
    for (int i = 0; i < 100; ++i) {
      const auto a = random_rho(d, gen), b = random_rho(d, gen);
      const auto u = random_unitary_matrix(d, gen);
      const DensityMatrix ra(a), rb(b);
      const double f = fidelity(ra, rb);
      EXPECT_NEAR(f, fidelity(rb, ra), 1e-9);
      EXPECT_NEAR(f, fidelity(DensityMatrix(u * a * u.adjoint()), DensityMatrix(u * b * u.adjoint())), 1e-9);
      EXPECT_GE(f, -1e-9);
      EXPECT_LE(f, 1.0 + 1e-9);
    }
  }
}

TEST(Jones, FidelityWithPureStateIsOverlap) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_state(gen);
    const auto rho = random_rho(2, gen);
    const double overlap = (s.amplitudes().adjoint() * rho * s.amplitudes())(0, 0).real();
    EXPECT_NEAR(fidelity(DensityMatrix::from_pure(s), DensityMatrix(rho)), overlap, 1e-9);
  }
}

TEST(Jones, TraceDistanceBasics) {
  const auto h = DensityMatrix::from_pure(PolarizationState::H());
  const auto v = DensityMatrix::from_pure(PolarizationState::V());
  EXPECT_NEAR(trace_distance(h, v), 1.0, 1e-12);
  EXPECT_NEAR(trace_distance(h, h), 0.0, 1e-12);
}

// ---------------------------------------------------------- plate algebra

TEST(PlateAlgebra, ShiftIdentity) {
  const PlateSpec s{0.3, 1.0};
  const PlateSpec t = equivalent_shift(s);
  EXPECT_DOUBLE_EQ(t.theta, 0.3 + kPi);
  EXPECT_DOUBLE_EQ(t.delta, 1.0);
  EXPECT_LT(max_abs(s.matrix().matrix() - t.matrix().matrix()), 1e-12);
  const PlateSpec z = equivalent_shift({0.0, 0.0});
  EXPECT_LT(max_abs(z.matrix().matrix() - Matrix2c::Identity()), 1e-15);
}

TEST(PlateAlgebra, ShiftIdentityRandom) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(-2 * kPi, 2 * kPi);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(gen), d = u(gen);
    EXPECT_LT(max_abs(oracle_plate(t + kPi, d) - oracle_plate(t, d)), 1e-12);
    EXPECT_LT(max_abs(equivalent_shift({t, d}).matrix().matrix() - oracle_plate(t, d)), 1e-12);
  }
}

TEST(PlateAlgebra, ConjugateIdentityHoldsWithPositivePhase) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-2 * kPi, 2 * kPi);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(gen), d = u(gen);
    const EquivalentPlate e = equivalent_conjugate({t, d});
    EXPECT_DOUBLE_EQ(e.spec.theta, t - kPi / 2);
    EXPECT_DOUBLE_EQ(e.spec.delta, -d);
    EXPECT_DOUBLE_EQ(e.global_phase, d);
    const Matrix2c rhs = std::polar(1.0, e.global_phase) * oracle_plate(t - kPi / 2, -d);
    EXPECT_LT(max_abs(oracle_plate(t, d) - rhs), 1e-12);
  }
}

TEST(PlateAlgebra, ConjugateWithNegativePhaseHoldsOnlyUpToPhase) {
  const double t = 0.4, d = 1.3;
  const Matrix2c lhs = oracle_plate(t, d);
  const Matrix2c neg = std::polar(1.0, -d) * oracle_plate(t - kPi / 2, -d);
  EXPECT_GT(max_abs(lhs - neg), 0.1);
  EXPECT_LT(distance_up_to_phase(PlateOperator(lhs), PlateOperator(neg)), 1e-12);
}

TEST(PlateAlgebra, ConjugateExamples) {
  const EquivalentPlate e = equivalent_conjugate({kPi / 2, 0.7});
  EXPECT_NEAR(e.spec.theta, 0.0, 1e-15);
  EXPECT_NEAR(e.spec.delta, -0.7, 1e-15);
  EXPECT_NEAR(e.global_phase, 0.7, 1e-15);
  const EquivalentPlate z = equivalent_conjugate({0.0, 0.0});
  EXPECT_NEAR(z.spec.theta, -kPi / 2, 1e-15);
  EXPECT_EQ(z.global_phase, 0.0);
}

TEST(PlateAlgebra, CanonicalizeExamples) {
  const EquivalentPlate a = canonicalize({3 * kPi / 4, 1.0});
  EXPECT_TRUE(a.spec.is_canonical());
  EXPECT_LT(distance_up_to_phase(a.spec.matrix(), waveplate_matrix(3 * kPi / 4, 1.0)), 1e-12);

  const EquivalentPlate c = canonicalize({0.1, 2.0});
  EXPECT_EQ(c.spec.theta, 0.1);
  EXPECT_EQ(c.spec.delta, 2.0);
  EXPECT_EQ(c.global_phase, 0.0);

  const EquivalentPlate b = canonicalize({kPi / 2, kPi / 3});
  EXPECT_NEAR(b.spec.theta, 0.0, 1e-15);
  EXPECT_NEAR(b.spec.delta, 2 * kPi - kPi / 3, 1e-14);
  EXPECT_NEAR(b.global_phase, kPi / 3, 1e-14);
}

TEST(PlateAlgebra, CanonicalizeRecordsExactPhase) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const PlateSpec s{u(gen), u(gen)};
    const EquivalentPlate e = canonicalize(s);
    ASSERT_TRUE(e.spec.is_canonical()) << s.theta << " " << s.delta;
    const Matrix2c rebuilt = std::polar(1.0, e.global_phase) * oracle_plate(e.spec.theta, e.spec.delta);
    EXPECT_LT(max_abs(oracle_plate(s.theta, s.delta) - rebuilt), 1e-11);
    EXPECT_GT(e.global_phase, -kPi - 1e-12);
    EXPECT_LE(e.global_phase, kPi + 1e-12);
  }
}

TEST(PlateAlgebra, CanonicalizeEdgeAngles) {
  for (double t : {-kPi / 4, kPi / 4, 3 * kPi / 4, -3 * kPi / 4, kPi, -kPi}) {
    const EquivalentPlate e = canonicalize({t, 0.5});
    EXPECT_TRUE(e.spec.is_canonical()) << t;
    EXPECT_LT(distance_up_to_phase(e.spec.matrix(), waveplate_matrix(t, 0.5)), 1e-12);
  }
}

TEST(PlateAlgebra, SandwichExample) {
  const PlateCascade c = decompose_sandwich({deg_to_rad(30.0), kPi / 2});
  ASSERT_EQ(c.plates.size(), 3u);
  EXPECT_NEAR(c.plates[0].theta, deg_to_rad(15.0), 1e-15);
  EXPECT_NEAR(c.plates[0].delta, kPi, 1e-15);
  EXPECT_NEAR(c.plates[1].theta, 0.0, 1e-15);
  EXPECT_NEAR(c.plates[1].delta, kPi / 2, 1e-15);
  EXPECT_NEAR(c.plates[2].theta, deg_to_rad(15.0), 1e-15);
  const Matrix2c product = oracle_plate(deg_to_rad(15.0), kPi) * oracle_plate(0.0, kPi / 2) *
                           oracle_plate(deg_to_rad(15.0), kPi);
  EXPECT_LT(distance_up_to_phase(PlateOperator(product), waveplate_matrix(deg_to_rad(30.0), kPi / 2)), 1e-12);
  EXPECT_LT(distance_up_to_phase(cascade_evaluate(c), PlateOperator(product)), 1e-12);
}

TEST(PlateAlgebra, SandwichZeroTilt) {
  const PlateCascade c = decompose_sandwich({0.0, 1.2});
  EXPECT_LT(max_abs(cascade_evaluate(c).matrix() - oracle_plate(0.0, 1.2)), 1e-12);
}

TEST(PlateAlgebra, SandwichRandomTargets) {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> ut(-kPi / 4, kPi / 4), ud(0.0, 2 * kPi);
  for (int i = 0; i < 1000; ++i) {
    const PlateSpec t{ut(gen), ud(gen)};
    const PlateCascade c = decompose_sandwich(t);
    EXPECT_LT(distance_up_to_phase(cascade_evaluate(c), waveplate_matrix(t.theta, t.delta)), 1e-10);
    EXPECT_LE(max_abs_tilt(c), kPi / 8 + 1e-15);
    EXPECT_LE(max_abs_tilt(c), deg_to_rad(32.0));
  }
}

TEST(PlateAlgebra, SandwichRejectsNonCanonical) {
  EXPECT_THROW(decompose_sandwich({1.0, 0.5}), std::domain_error);
  EXPECT_THROW(decompose_sandwich({0.1, -0.5}), std::domain_error);
}

TEST(PlateAlgebra, CascadeEvaluate) {
  EXPECT_LT(max_abs(cascade_evaluate({}).matrix() - Matrix2c::Identity()), 1e-15);
  EXPECT_LT(max_abs(cascade_evaluate({{{0.3, 0.9}}}).matrix() - oracle_plate(0.3, 0.9)), 1e-15);
  std::mt19937_64 gen(14);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int i = 0; i < 100; ++i) {
    const double t = u(gen);
    EXPECT_LT(max_abs(cascade_evaluate({{{t, kPi}, {t, kPi}}}).matrix() - Matrix2c::Identity()), 1e-12);
  }
  // application order: the first plate acts first
  const PlateCascade c{{{0.2, 0.4}, {-0.3, 1.7}}};
  EXPECT_LT(max_abs(cascade_evaluate(c).matrix() - oracle_plate(-0.3, 1.7) * oracle_plate(0.2, 0.4)), 1e-14);
}

TEST(PlateAlgebra, DistanceUpToPhase) {
  const PlateOperator m = waveplate_matrix(0.4, 2.2);
  EXPECT_NEAR(distance_up_to_phase(m, m), 0.0, 1e-15);
  EXPECT_NEAR(distance_up_to_phase(m, std::polar(1.0, 1.234) * m), 0.0, 1e-14);
  // agrees with the closed-form expression away from the cancellation regime
  const PlateOperator n = waveplate_matrix(-0.2, 0.9);
  const double closed = std::sqrt(m.matrix().squaredNorm() + n.matrix().squaredNorm() -
                                  2.0 * std::abs((m.matrix().adjoint() * n.matrix()).trace()));
  EXPECT_NEAR(distance_up_to_phase(m, n), closed, 1e-12);
  EXPECT_NEAR(distance_up_to_phase(m, n), distance_up_to_phase(n, m), 1e-14);
  EXPECT_NEAR(distance_up_to_phase(PlateOperator::identity(), waveplate_matrix(0.0, kPi)), 2.0, 1e-12);
}

TEST(PlateAlgebra, WrapTwoPi) {
  EXPECT_NEAR(wrap_two_pi(-kPi / 3), 2 * kPi - kPi / 3, 1e-15);
  EXPECT_EQ(wrap_two_pi(0.0), 0.0);
  EXPECT_LT(wrap_two_pi(2 * kPi), 2 * kPi);
  EXPECT_GE(wrap_two_pi(-1e-18), 0.0);
}

// --------------------------------------------------------------- waveguide

TEST(Waveguide, RetardanceExamples) {
  EXPECT_NEAR(retardance({0.020, 2.0e-5, 0.0}, 800e-9), kPi, 1e-12);
  EXPECT_EQ(retardance({0.0, 2.0e-5, 0.0}, 800e-9), 0.0);
  EXPECT_NEAR(half_wave_length(2.01e-5, 800e-9) * 1e3, 19.900497512437809, 1e-9);
  EXPECT_GT(retardance({0.1, 2.0e-5, 0.0}, 800e-9), 2 * kPi);  // unwrapped
  EXPECT_THROW(retardance({0.01, 2e-5, 0.0}, 0.0), std::domain_error);
  EXPECT_THROW(retardance({-0.01, 2e-5, 0.0}, 800e-9), std::invalid_argument);
}

TEST(Waveguide, SegmentOperatorExamples) {
  const double lhw = half_wave_length(2e-5, 800e-9);
  Matrix2c z = Matrix2c::Zero();
  z(0, 0) = 1.0;
  z(1, 1) = -1.0;
  EXPECT_LT(max_abs(segment_operator({lhw, 2e-5, 0.0}, 800e-9).matrix() - z), 1e-12);

  const auto out = apply(segment_operator({lhw, 2e-5, deg_to_rad(22.5)}, 800e-9), PolarizationState::H());
  EXPECT_NEAR(projector_probability(out, Projector::D), 1.0, 1e-12);

  const auto tilted = apply(segment_operator({lhw, 2e-5, deg_to_rad(21.5)}, 800e-9), PolarizationState::H());
  const double expected = 0.5 * (1.0 + std::sin(deg_to_rad(86.0)));
  EXPECT_NEAR(projector_probability(tilted, Projector::D), expected, 1e-12);
  EXPECT_NEAR(expected, 0.9988, 1e-4);
}

TEST(Waveguide, DeviceTransmittance) {
  WaveguideDevice one;
  one.segments = {{0.01, 2e-5, 0.3}};
  const auto r1 = device_operator(one);
  EXPECT_NEAR(r1.transmittance, std::pow(10.0, -0.02), 1e-12);
  EXPECT_NEAR(r1.transmittance, 0.955, 1e-3);

  WaveguideDevice two;
  two.segments = {{0.0, 2e-5, 0.0}, {0.0, 2e-5, 0.5}};
  EXPECT_NEAR(device_operator(two).transmittance, std::pow(10.0, -0.03), 1e-12);

  WaveguideDevice zero;
  zero.segments = {{0.0, 2e-5, 0.7}};
  const auto rz = device_operator(zero);
  EXPECT_EQ(rz.transmittance, 1.0);
  EXPECT_LT(max_abs(rz.polarization.matrix() - Matrix2c::Identity()), 1e-15);
}

TEST(Waveguide, DeviceErrors) {
  WaveguideDevice empty;
  EXPECT_THROW(device_operator(empty), std::invalid_argument);
  WaveguideDevice neg;
  neg.segments = {{0.01, 2e-5, 0.0}};
  neg.junction_loss_db = -0.1;
  EXPECT_THROW(device_operator(neg), std::invalid_argument);
}

TEST(Waveguide, DeviceOperatorIsOrderedUnitaryProduct) {
  std::mt19937_64 gen(20);
  std::uniform_real_distribution<double> len(0.0, 0.03), tilt(-0.6, 0.6), bir(1e-5, 4e-5);
  for (int i = 0; i < 100; ++i) {
    WaveguideDevice dev;
    Matrix2c expected = Matrix2c::Identity();
    for (int k = 0; k < 4; ++k) {
      const WaveguideSegment s{len(gen), bir(gen), tilt(gen)};
      dev.segments.push_back(s);
      expected = oracle_plate(s.axis_tilt, 2 * kPi * s.birefringence * s.length / dev.wavelength) * expected;
    }
    const auto r = device_operator(dev);
    EXPECT_LT(max_abs(r.polarization.matrix() - expected), 1e-12);
    EXPECT_TRUE(r.polarization.is_unitary(1e-12));
    const double db = 0.3 * 3 + 0.2 * dev.total_length() * 100.0;
    EXPECT_NEAR(r.transmittance, std::pow(10.0, -db / 10.0), 1e-12);
  }
}

TEST(Waveguide, VerticalAxisSegmentLeavesHvUnchanged) {
  // the first segment of the two-section test devices
  WaveguideDevice dev;
  dev.segments = {{0.0123, 2e-5, 0.0}};
  const auto r = device_operator(dev);
  EXPECT_NEAR(projector_probability(apply(r.polarization, PolarizationState::H()), Projector::H), 1.0, 1e-15);
  EXPECT_NEAR(projector_probability(apply(r.polarization, PolarizationState::V()), Projector::V), 1.0, 1e-15);
}

TEST(Waveguide, TransferCurveExamples) {
  const double b = 2e-5, wl = 800e-9;
  const double lhw = half_wave_length(b, wl);
  const auto pts = transfer_curves(deg_to_rad(22.5), b, wl, {lhw, 0.0});
  EXPECT_NEAR(pts[0].p_h, 0.5, 1e-12);
  EXPECT_NEAR(pts[0].p_v, 0.5, 1e-12);
  EXPECT_NEAR(pts[0].p_d, 1.0, 1e-12);
  EXPECT_NEAR(pts[1].p_h, 1.0, 1e-15);
  EXPECT_NEAR(pts[1].p_d, 0.5, 1e-15);
  EXPECT_NEAR(pts[1].p_a, 0.5, 1e-15);

  const auto tilted = transfer_curves(deg_to_rad(21.5), b, wl, {lhw});
  EXPECT_NEAR(tilted[0].p_a, 0.5 * (1.0 - std::sin(deg_to_rad(86.0))), 1e-12);
  EXPECT_NEAR(tilted[0].p_a, 0.0012, 1e-4);
}

TEST(Waveguide, TransferCurveProperties) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> len(0.0, 0.08), tilt(-0.8, 0.8);
  const double b = 2.2e-5, wl = 800e-9;
  for (int i = 0; i < 200; ++i) {
    const double l = len(gen), t = tilt(gen);
    const auto p = transfer_curves(t, b, wl, {l, l + wl / b})[0];
    const auto q = transfer_curves(t, b, wl, {l, l + wl / b})[1];
    EXPECT_NEAR(p.p_h + p.p_v, 1.0, 1e-12);
    EXPECT_NEAR(p.p_d + p.p_a, 1.0, 1e-12);
    EXPECT_NEAR(p.p_h, q.p_h, 1e-9);
    EXPECT_NEAR(p.p_d, q.p_d, 1e-9);
    // brute force through the segment operator
    const auto out = apply(segment_operator({l, b, t}, wl), PolarizationState::H());
    EXPECT_NEAR(p.p_h, projector_probability(out, Projector::H), 1e-12);
    EXPECT_NEAR(p.p_d, projector_probability(out, Projector::D), 1e-12);
    // closed form for p_H
    const double delta = 2 * kPi * b * l / wl;
    EXPECT_NEAR(p.p_h, 1.0 - std::pow(std::sin(2 * t) * std::sin(delta / 2), 2), 1e-12);
  }
}

TEST(Waveguide, TransferCsvFormat) {
  std::ostringstream os;
  write_transfer_csv(os, transfer_curves(deg_to_rad(22.5), 2e-5, 800e-9, {0.0, 0.02}));
  EXPECT_EQ(os.str(),
            "length_mm,p_H,p_V,p_D,p_A\n"
            "0.000000,1.000000,0.000000,0.500000,0.500000\n"
            "20.000000,0.500000,0.500000,1.000000,0.000000\n");
}
