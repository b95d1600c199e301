/**
 * @file tomography.hpp
 * @brief One- and two-qubit polarization state reconstruction from projector counts.
 *
 * Counts are indexed by the nominal projector order H,V,D,A,R,L (two-qubit
 * tables are [photon A][photon B]). They are held as doubles so that exact
 * expected counts can be fed through the same path as sampled ones.
 *
 * Normalization is per measurement group (a basis for one qubit, a basis pair
 * for two), so arm-dependent losses do not bias the estimate.
 */

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "iwp/jones.hpp"
#include "iwp/qst_device.hpp"

namespace iwp {

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Counts1 = std::array<double, 6>;
using Counts2 = std::array<std::array<double, 6>, 6>;

Counts1 to_counts(const SingleCountRecord& rec);
Counts2 to_counts(const CoincidenceRecord& rec);

/// rho = (I + sum S_i sigma_i)/2 from the three basis asymmetries. May be non-physical.
DensityMatrix linear_reconstruct_1q(const Counts1& counts);
/// rho = 1/4 sum S_ij sigma_i x sigma_j. Marginal terms pool all three partner bases.
DensityMatrix linear_reconstruct_2q(const Counts2& counts);

/// One term of the Poisson likelihood: observed n, group total N, projector.
struct MeasurementTerm {
  double count = 0.0;
  double group_total = 0.0;
  Eigen::MatrixXcd projector;
};

std::vector<MeasurementTerm> measurement_terms(const Counts1& counts);
std::vector<MeasurementTerm> measurement_terms(const Counts2& counts);

inline constexpr double kMuFloor = 1e-12;

/// sum_k n_k ln(mu_k) - mu_k with mu_k = max(N_k Tr(rho P_k), 1e-12).
double log_likelihood(const std::vector<MeasurementTerm>& terms, const Eigen::MatrixXcd& rho);

struct MleOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
};

struct MleResult {
  DensityMatrix rho;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  ///< log-likelihood after every accepted iterate (first entry: start)
};

/**
 * Maximum-likelihood estimate over rho = T^dag T / Tr(T^dag T), T lower
 * triangular with a real diagonal (d^2 real parameters). Gradient ascent
 * preconditioned by the damped, positive-definite likelihood curvature, with Armijo
 * backtracking; the
 * likelihood trace is non-decreasing. Stops when the gradient of the
 * per-count log-likelihood falls below the tolerance or after
 * max_iterations, in which case the best iterate is returned with
 * converged == false. A non-PSD initial guess is projected onto the PSD cone.
 */
MleResult mle_refine(const std::vector<MeasurementTerm>& terms, const DensityMatrix& initial,
                     const MleOptions& opt = {});
MleResult mle_refine(const Counts1& counts, const DensityMatrix& initial, const MleOptions& opt = {});
MleResult mle_refine(const Counts2& counts, const DensityMatrix& initial, const MleOptions& opt = {});

enum class ReconstructionMethod { Auto, Linear, Mle };

const char* to_string(ReconstructionMethod m);
/// "auto", "linear", "mle". Throws std::invalid_argument.
ReconstructionMethod method_from_string(std::string_view s);

struct TomographyResult {
  DensityMatrix rho = DensityMatrix::maximally_mixed(2);
  ReconstructionMethod method = ReconstructionMethod::Linear;  ///< what actually produced rho
  bool linear_physical = true;
  bool converged = true;
  double log_likelihood = 0.0;
  std::optional<double> fidelity;        ///< against the target, when given
  std::optional<double> fidelity_sigma;  ///< Monte-Carlo, when requested
  int n_montecarlo = 0;
};

/**
 * Linear inversion, then MLE when requested or when (Auto) the linear
 * estimate is not PSD. Fidelity is evaluated against @p target when given.
 */
TomographyResult reconstruct(const Counts1& counts, ReconstructionMethod method = ReconstructionMethod::Auto,
                             const std::optional<DensityMatrix>& target = std::nullopt);
TomographyResult reconstruct(const Counts2& counts, ReconstructionMethod method = ReconstructionMethod::Auto,
                             const std::optional<DensityMatrix>& target = std::nullopt);

struct MonteCarloErrors {
  int trials = 0;
  double fidelity_mean = 0.0;
  double fidelity_sigma = 0.0;
  Eigen::MatrixXd real_sigma;
  Eigen::MatrixXd imag_sigma;
};

/**
 * Parametric bootstrap: every cell is redrawn as Poisson(observed) with a
 * per-trial derived seed, the reconstruction is repeated, and sample standard
 * deviations are reported. With resample == false every trial reuses the
 * observed counts (zero-variance mode). Throws std::invalid_argument for
 * fewer than 50 trials.
 */
MonteCarloErrors montecarlo_errors(const Counts1& counts, const DensityMatrix& target, int n_trials,
                                   std::uint64_t seed, ReconstructionMethod method = ReconstructionMethod::Auto,
                                   bool resample = true);
MonteCarloErrors montecarlo_errors(const Counts2& counts, const DensityMatrix& target, int n_trials,
                                   std::uint64_t seed, ReconstructionMethod method = ReconstructionMethod::Auto,
                                   bool resample = true);

struct ExperimentConfig {
  std::uint64_t single_photon_events = 10000;  ///< heralded photons per input state
  std::uint64_t pair_events = 100000;
  std::uint64_t seed = 42;
  bool poisson = true;                    ///< false: exact expected counts
  bool run_single = true;
  bool run_pairs = true;
  double residual_prefix_distance = 0.0;  ///< up-to-phase distance of the leftover prefix, per side
  bool random_prefix = false;             ///< draw Haar prefixes and align them with compensate()
  double werner_mixing = 0.0;
  ReconstructionMethod method = ReconstructionMethod::Auto;
  int montecarlo_trials = 0;              ///< 0 or >= 50

  /// Throws std::invalid_argument.
  void validate() const;
};

struct SingleQubitEntry {
  char side = 'A';
  Projector input = Projector::H;
  TomographyResult result;
};

struct ExperimentReport {
  std::vector<SingleQubitEntry> single;
  std::optional<TomographyResult> pair;
  std::array<CompensationSettings, 2> compensation{};
  double mean_single_fidelity = 0.0;
};

/// Six single-photon states into each side plus the psi- pair, through the simulated chip.
ExperimentReport run_full_experiment(const ExperimentConfig& config);

}  // namespace iwp
