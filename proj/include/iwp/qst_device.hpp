/**
 * @file qst_device.hpp
 * @brief Simulator of the two-photon polarization-tomography chip.
 *
 * Each photon enters its own side of the chip. Input-fiber controllers
 * (compensator) and the uncontrolled fiber / input-section birefringence
 * (prefix) act first; an even 1x3 splitter then feeds three arms:
 *
 *   alpha: no waveplate                      -> PBS projects on H / V
 *   beta:  half-wave at 22.5 deg             -> PBS projects on D / A
 *   gamma: quarter-wave at 0, half-wave 22.5 -> PBS projects on R / L
 *
 * The PBS transmits H and reflects V. Output port index 2*arm + port
 * (transmitted = 0) coincides with the nominal projector order H,V,D,A,R,L.
 */

#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "iwp/jones.hpp"
#include "iwp/rng.hpp"
#include "iwp/waveplate_algebra.hpp"

namespace iwp {

enum class Arm { Alpha = 0, Beta = 1, Gamma = 2 };
enum class PbsPort { Transmitted = 0, Reflected = 1 };

inline int port_index(Arm a, PbsPort p) { return 2 * static_cast<int>(a) + static_cast<int>(p); }

/// Controller settings: LC phase plate (0, lc_phase) first, then the fiber PC as a retarder.
struct CompensationSettings {
  double pc_theta = 0.0;
  double pc_delta = 0.0;
  double lc_phase = 0.0;
  double stage1_residual = 0.0;    ///< V leakage at the alpha outputs for H input
  double stage2_residual = 0.0;    ///< A leakage at the beta outputs for D input
  double circular_residual = 0.0;  ///< L leakage at the gamma outputs for R input
  bool converged = false;

  PlateOperator compensator() const;
};

struct ChipSide {
  PlateCascade alpha;
  PlateCascade beta{{PlateSpec{kPi / 8.0, kPi}}};
  PlateCascade gamma{{PlateSpec{0.0, kPi / 2.0}, PlateSpec{kPi / 8.0, kPi}}};
  PlateOperator prefix;
  PlateOperator compensator;
  double transmittance = 1.0;
  double detector_efficiency = 1.0;

  static ChipSide ideal() { return ChipSide{}; }

  const PlateCascade& arm(Arm a) const;
  PlateOperator input_operator() const { return prefix * compensator; }
  PlateOperator arm_operator(Arm a) const { return cascade_evaluate(arm(a)) * input_operator(); }

  /// State |e> whose overlap gives the conditional probability of landing in (arm, port).
  Vector2c effective_state(Arm a, PbsPort p) const;
  /// POVM element of output port i (including the 1/3 split and losses).
  Matrix2c povm(int port) const;
};

using ProjectorTable = std::array<std::array<Projector, 2>, 3>;

/// Identifies the canonical projector realized by each (arm, port). Throws
/// std::invalid_argument if some port does not project on a canonical state.
ProjectorTable ideal_projector_map(const ChipSide& side);

/// Conditional port probabilities of one arm for a single-photon input.
std::array<double, 2> arm_probabilities(const ChipSide& side, Arm a, const PolarizationState& input);

/// Throws std::invalid_argument if U is not unitary to 1e-9.
ChipSide apply_prefix(const ChipSide& side, const PlateOperator& u);
ChipSide with_compensation(const ChipSide& side, const CompensationSettings& settings);

/**
 * Two-stage controller alignment using only simulated port statistics:
 * (1) with H injected, tune the fiber PC until the alpha outputs show no V;
 * (2) with D injected, tune the LC phase until the beta outputs show no A.
 * The circular residual is then measured with R injected.
 */
CompensationSettings compensate(const ChipSide& side);

struct CoincidenceRecord {
  std::array<std::array<std::uint64_t, 6>, 6> counts{};
  std::uint64_t total_pairs = 0;
  std::uint64_t seed = 0;

  std::uint64_t sum() const;
};

struct SingleCountRecord {
  std::array<std::uint64_t, 6> counts{};
  std::uint64_t total_events = 0;
  std::uint64_t seed = 0;

  std::uint64_t sum() const;
};

using ExpectedCounts2 = std::array<std::array<double, 6>, 6>;
using ExpectedCounts1 = std::array<double, 6>;

struct SimulationOptions {
  double accidentals_per_cell = 0.0;
};

using ChipSides = std::pair<ChipSide, ChipSide>;

/// Mean coincidences N Tr[rho (E_a x E_b)] (+ accidentals) for every port pair.
ExpectedCounts2 expected_counts(const DensityMatrix& rho, const ChipSides& sides, double total_pairs,
                                const SimulationOptions& opt = {});
ExpectedCounts1 expected_single_counts(const DensityMatrix& rho, const ChipSide& side, double total_events,
                                       const SimulationOptions& opt = {});

/**
 * Poisson-sampled coincidences. The 36 cells are drawn in row-major order
 * from one CounterRng(seed), so a seed fixes the record bit for bit.
 * Throws std::invalid_argument if total_pairs == 0.
 */
CoincidenceRecord simulate_counts(const DensityMatrix& rho, const ChipSides& sides, std::uint64_t total_pairs,
                                  std::uint64_t seed, const SimulationOptions& opt = {});
CoincidenceRecord simulate_counts(const TwoPhotonState& state, const ChipSides& sides,
                                  std::uint64_t total_pairs, std::uint64_t seed,
                                  const SimulationOptions& opt = {});
SingleCountRecord simulate_single_counts(const DensityMatrix& rho, const ChipSide& side,
                                         std::uint64_t total_events, std::uint64_t seed,
                                         const SimulationOptions& opt = {});

/// (1 - p) |psi-><psi-| + p I/4.
DensityMatrix werner_state(double mixing);

/// Haar-random 2x2 unitary.
PlateOperator random_unitary(CounterRng& rng);
/// SU(2) rotation about a random axis whose up-to-phase distance from the identity is @p distance (0..2).
PlateOperator residual_unitary(double distance, CounterRng& rng);

}  // namespace iwp
