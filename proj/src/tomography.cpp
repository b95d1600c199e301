#include "iwp/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace iwp {

namespace {

// Sign of outcome index within its basis: + for H, D, R.
constexpr double sign_of(int outcome) { return outcome % 2 == 0 ? 1.0 : -1.0; }

Eigen::MatrixXcd params_to_t(const Eigen::VectorXd& x, int d) {
  Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i) t(i, i) = x(k++);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j) {
      t(i, j) = Complex(x(k), x(k + 1));
      k += 2;
    }
  return t;
}

Eigen::VectorXd t_to_params(const Eigen::MatrixXcd& t) {
  const int d = static_cast<int>(t.rows());
  Eigen::VectorXd x(d * d);
  int k = 0;
  for (int i = 0; i < d; ++i) x(k++) = t(i, i).real();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j) {
      x(k++) = t(i, j).real();
      x(k++) = t(i, j).imag();
    }
  return x;
}

Eigen::MatrixXcd rho_from_t(const Eigen::MatrixXcd& t) {
  const Eigen::MatrixXcd a = t.adjoint() * t;
  return a / a.trace().real();
}

// Lower-triangular T with T^dag T proportional to a PSD projection of rho (plus a tiny floor).
Eigen::MatrixXcd t_from_rho(const Eigen::MatrixXcd& rho) {
  const int d = static_cast<int>(rho.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  ev /= ev.sum();
  ev.array() += 1e-13;
  const Eigen::MatrixXcd psd = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
  // T = J L^dag J where J psd J = L L^dag.
  Eigen::MatrixXcd rev(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) rev(i, j) = psd(d - 1 - i, d - 1 - j);
  const Eigen::MatrixXcd l = Eigen::LLT<Eigen::MatrixXcd>(rev).matrixL();
  const Eigen::MatrixXcd ld = l.adjoint();
  Eigen::MatrixXcd t(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) t(i, j) = ld(d - 1 - i, d - 1 - j);
  for (int i = 0; i < d; ++i) t(i, i) = Complex(t(i, i).real(), 0.0);
  return t;
}

double total_count(const std::vector<MeasurementTerm>& terms) {
  double n = 0.0;
  for (const auto& t : terms) n += t.count;
  return n;
}

// Gradient of the per-count log-likelihood with respect to the T parameters.
Eigen::VectorXd likelihood_gradient(const std::vector<MeasurementTerm>& terms, const Eigen::MatrixXcd& t,
                                    double scale) {
  const int d = static_cast<int>(t.rows());
  const Eigen::MatrixXcd rho = rho_from_t(t);
  const double tau = (t.adjoint() * t).trace().real();
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(d, d);
  for (const auto& term : terms) {
    const double mu = std::max(term.group_total * (rho * term.projector).trace().real(), kMuFloor);
    g += ((term.count / mu - 1.0) * term.group_total) * term.projector;
  }
  g *= scale;
  const Complex gr = (g * rho).trace();
  const Eigen::MatrixXcd h = (g - gr * Eigen::MatrixXcd::Identity(d, d)) / tau;
  const Eigen::MatrixXcd w = h * t.adjoint();
  Eigen::VectorXd grad(d * d);
  int k = 0;
  for (int i = 0; i < d; ++i) grad(k++) = 2.0 * w(i, i).real();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j) {
      grad(k++) = 2.0 * w(j, i).real();
      grad(k++) = -2.0 * w(j, i).imag();
    }
  return grad;
}

// Negative Hessian of the per-count log-likelihood, by central differences of
// the analytic gradient, with its spectrum clamped to be positive definite.
Eigen::MatrixXd curvature(const std::vector<MeasurementTerm>& terms, const Eigen::VectorXd& x, int d,
                          double scale) {
  const int np = static_cast<int>(x.size());
  constexpr double h = 1e-6;
  Eigen::MatrixXd hess(np, np);
  for (int k = 0; k < np; ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    hess.col(k) = -(likelihood_gradient(terms, params_to_t(xp, d), scale) -
                    likelihood_gradient(terms, params_to_t(xm, d), scale)) /
                  (2.0 * h);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
  Eigen::VectorXd ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  ev = ev.cwiseMax(1e-8 * top);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void check_group(double total, const char* what) {
  if (!(total > 0.0)) throw EstimationError(std::string("no counts in ") + what);
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  // Deviations from the first sample, so identical samples give exactly zero.
  double shift_mean = 0.0;
  for (double x : v) shift_mean += x - v.front();
  shift_mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - v.front() - shift_mean) * (x - v.front() - shift_mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

template <class Counts>
TomographyResult reconstruct_impl(const Counts& counts, ReconstructionMethod method,
                                  const std::optional<DensityMatrix>& target) {
  const auto terms = measurement_terms(counts);
  DensityMatrix lin = [&] {
    if constexpr (std::is_same_v<Counts, Counts1>) {
      return linear_reconstruct_1q(counts);
    } else {
      return linear_reconstruct_2q(counts);
    }
  }();

  TomographyResult r;
  r.linear_physical = lin.is_psd(1e-9);
  const bool use_mle =
      method == ReconstructionMethod::Mle || (method == ReconstructionMethod::Auto && !r.linear_physical);
  if (method == ReconstructionMethod::Linear || !use_mle) {
    r.rho = lin;
    r.method = ReconstructionMethod::Linear;
    r.converged = true;
    r.log_likelihood = log_likelihood(terms, lin.matrix());
  } else {
    const MleResult mle = mle_refine(terms, lin);
    r.rho = mle.rho;
    r.method = ReconstructionMethod::Mle;
    r.converged = mle.converged;
    r.log_likelihood = mle.log_likelihood;
  }
  if (target) {
    if (r.rho.is_psd(1e-9)) {
      r.fidelity = fidelity(r.rho, *target);
    } else {
      // Non-physical linear estimate: fall back to the overlap with the pure target.
      r.fidelity = (r.rho.matrix() * target->matrix()).trace().real();
    }
  }
  return r;
}

template <class Counts, class Resample>
MonteCarloErrors montecarlo_impl(const Counts& counts, const DensityMatrix& target, int n_trials,
                                 std::uint64_t seed, ReconstructionMethod method, bool resample,
                                 Resample&& redraw) {
  if (n_trials < 50) throw std::invalid_argument("montecarlo_errors: need at least 50 trials");
  const int d = target.dim();
  std::vector<double> fids;
  std::vector<Eigen::MatrixXcd> rhos;
  fids.reserve(n_trials);
  rhos.reserve(n_trials);
  for (int t = 0; t < n_trials; ++t) {
    CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const Counts sample = resample ? redraw(counts, rng) : counts;
    const TomographyResult r = reconstruct_impl(sample, method, target);
    fids.push_back(*r.fidelity);
    rhos.push_back(r.rho.matrix());
  }
  MonteCarloErrors out;
  out.trials = n_trials;
  out.fidelity_mean = std::accumulate(fids.begin(), fids.end(), 0.0) / n_trials;
  out.fidelity_sigma = sample_std(fids);
  out.real_sigma = Eigen::MatrixXd::Zero(d, d);
  out.imag_sigma = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> re(n_trials), im(n_trials);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      for (int t = 0; t < n_trials; ++t) {
        re[t] = rhos[t](i, j).real();
        im[t] = rhos[t](i, j).imag();
      }
      out.real_sigma(i, j) = sample_std(re);
      out.imag_sigma(i, j) = sample_std(im);
    }
  return out;
}

double poisson_draw(double observed, CounterRng& rng) {
  return static_cast<double>(rng.poisson(std::max(observed, 0.0)));
}

}  // namespace

Counts1 to_counts(const SingleCountRecord& rec) {
  Counts1 c{};
  for (int i = 0; i < 6; ++i) c[i] = static_cast<double>(rec.counts[i]);
  return c;
}

Counts2 to_counts(const CoincidenceRecord& rec) {
  Counts2 c{};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) c[i][j] = static_cast<double>(rec.counts[i][j]);
  return c;
}

DensityMatrix linear_reconstruct_1q(const Counts1& n) {
  Matrix2c rho = pauli(0);
  for (int basis = 0; basis < 3; ++basis) {
    const double plus = n[2 * basis];
    const double minus = n[2 * basis + 1];
    check_group(plus + minus, "a measurement basis");
    rho += ((plus - minus) / (plus + minus)) * pauli(basis + 1);
  }
  return DensityMatrix(0.5 * rho);
}

DensityMatrix linear_reconstruct_2q(const Counts2& n) {
  // block(i, j): counts of A in basis i and B in basis j
  auto block_total = [&](int i, int j) {
    double s = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) s += n[2 * i + a][2 * j + b];
    return s;
  };
  double stokes[4][4] = {};
  stokes[0][0] = 1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double total = block_total(i, j);
      check_group(total, "a basis pair (incomplete coincidence record)");
      double corr = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) corr += sign_of(a) * sign_of(b) * n[2 * i + a][2 * j + b];
      stokes[i + 1][j + 1] = corr / total;
    }
  for (int i = 0; i < 3; ++i) {
    double num_a = 0.0, num_b = 0.0, den_a = 0.0, den_b = 0.0;
    for (int j = 0; j < 3; ++j) {
      den_a += block_total(i, j);
      den_b += block_total(j, i);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          num_a += sign_of(a) * n[2 * i + a][2 * j + b];
          num_b += sign_of(b) * n[2 * j + a][2 * i + b];
        }
    }
    stokes[i + 1][0] = num_a / den_a;
    stokes[0][i + 1] = num_b / den_b;
  }
  Matrix4c rho = Matrix4c::Zero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) rho += stokes[i][j] * kron(pauli(i), pauli(j));
  return DensityMatrix(0.25 * rho);
}

std::vector<MeasurementTerm> measurement_terms(const Counts1& n) {
  std::vector<MeasurementTerm> terms;
  for (int i = 0; i < 6; ++i) {
    const int base = 2 * (i / 2);
    terms.push_back({n[i], n[base] + n[base + 1], projector_matrix(kAllProjectors[i])});
  }
  return terms;
}

std::vector<MeasurementTerm> measurement_terms(const Counts2& n) {
  std::vector<MeasurementTerm> terms;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const int bi = 2 * (i / 2), bj = 2 * (j / 2);
      double group = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) group += n[bi + a][bj + b];
      terms.push_back({n[i][j], group,
                       kron(projector_matrix(kAllProjectors[i]), projector_matrix(kAllProjectors[j]))});
    }
  return terms;
}

double log_likelihood(const std::vector<MeasurementTerm>& terms, const Eigen::MatrixXcd& rho) {
  double l = 0.0;
  for (const auto& t : terms) {
    const double mu = std::max(t.group_total * (rho * t.projector).trace().real(), kMuFloor);
    l += (t.count > 0.0 ? t.count * std::log(mu) : 0.0) - mu;
  }
  return l;
}

MleResult mle_refine(const std::vector<MeasurementTerm>& terms, const DensityMatrix& initial,
                     const MleOptions& opt) {
  if (terms.empty()) throw std::invalid_argument("mle_refine: no measurement terms");
  const int d = initial.dim();
  for (const auto& t : terms) {
    if (t.projector.rows() != d) throw std::invalid_argument("mle_refine: projector/state dimension mismatch");
    if (t.count < 0.0 || t.group_total < 0.0) throw std::invalid_argument("mle_refine: negative counts");
  }
  const double n_total = total_count(terms);
  if (!(n_total > 0.0)) throw EstimationError("mle_refine: no counts");
  const double scale = 1.0 / n_total;

  Eigen::MatrixXcd t = t_from_rho(initial.matrix());
  Eigen::VectorXd x = t_to_params(t);
  x /= x.norm();
  double f = log_likelihood(terms, rho_from_t(params_to_t(x, d)));

  MleResult res{DensityMatrix(rho_from_t(params_to_t(x, d))), 0.0, 0.0, 0, false, {}};
  res.trace.push_back(f);
  Eigen::VectorXd grad = likelihood_gradient(terms, params_to_t(x, d), scale);

  // Levenberg-damped curvature preconditioner; lambda shrinks after full
  // steps and grows when the line search has to backtrack.
  int it = 0;
  double lambda = 1e-3;
  const int np = d * d;
  for (; it < opt.max_iterations; ++it) {
    if (grad.norm() < opt.gradient_tolerance) break;
    const Eigen::MatrixXd info = curvature(terms, x, d, scale);
    const double diag_max = std::max(info.diagonal().maxCoeff(), 1e-300);

    bool accepted = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      Eigen::MatrixXd damped = info;
      for (int k = 0; k < np; ++k) damped(k, k) += lambda * (info(k, k) + 1e-6 * diag_max) + 1e-300;
      const Eigen::VectorXd dir = damped.ldlt().solve(grad);
      const double slope = grad.dot(dir) / scale;  // in unnormalized likelihood units
      if (!dir.allFinite() || !(slope > 0.0)) {
        lambda *= 10.0;
        continue;
      }
      double alpha = 1.0;
      for (int bt = 0; bt < 4; ++bt, alpha *= 0.5) {
        Eigen::VectorXd xn = x + alpha * dir;
        xn /= xn.norm();
        const double fn = log_likelihood(terms, rho_from_t(params_to_t(xn, d)));
        if (std::isfinite(fn) && fn >= f + 1e-4 * alpha * slope && fn >= f) {
          x = xn;
          f = fn;
          accepted = true;
          break;
        }
      }
      if (accepted && alpha == 1.0) {
        lambda = std::max(lambda * 0.1, 1e-12);
      } else if (!accepted || alpha < 0.5) {
        lambda *= 10.0;
      }
      if (lambda > 1e20) break;
    }
    if (!accepted) break;
    res.trace.push_back(f);
    grad = likelihood_gradient(terms, params_to_t(x, d), scale);
  }

  res.rho = DensityMatrix(rho_from_t(params_to_t(x, d)));
  res.log_likelihood = f;
  res.gradient_norm = grad.norm();
  res.iterations = it;
  res.converged = res.gradient_norm < opt.gradient_tolerance;
  return res;
}

MleResult mle_refine(const Counts1& counts, const DensityMatrix& initial, const MleOptions& opt) {
  if (initial.dim() != 2) throw std::invalid_argument("mle_refine: single-qubit counts need a 2x2 initial state");
  return mle_refine(measurement_terms(counts), initial, opt);
}

MleResult mle_refine(const Counts2& counts, const DensityMatrix& initial, const MleOptions& opt) {
  if (initial.dim() != 4) throw std::invalid_argument("mle_refine: two-qubit counts need a 4x4 initial state");
  return mle_refine(measurement_terms(counts), initial, opt);
}

const char* to_string(ReconstructionMethod m) {
  switch (m) {
    case ReconstructionMethod::Auto: return "auto";
    case ReconstructionMethod::Linear: return "linear";
    case ReconstructionMethod::Mle: return "mle";
  }
  return "?";
}

ReconstructionMethod method_from_string(std::string_view s) {
  if (s == "auto") return ReconstructionMethod::Auto;
  if (s == "linear") return ReconstructionMethod::Linear;
  if (s == "mle") return ReconstructionMethod::Mle;
  throw std::invalid_argument("unknown reconstruction method '" + std::string(s) + "'");
}

TomographyResult reconstruct(const Counts1& counts, ReconstructionMethod method,
                             const std::optional<DensityMatrix>& target) {
  if (target && target->dim() != 2) throw std::invalid_argument("reconstruct: target must be a qubit state");
  return reconstruct_impl(counts, method, target);
}

TomographyResult reconstruct(const Counts2& counts, ReconstructionMethod method,
                             const std::optional<DensityMatrix>& target) {
  if (target && target->dim() != 4) throw std::invalid_argument("reconstruct: target must be a two-qubit state");
  return reconstruct_impl(counts, method, target);
}

MonteCarloErrors montecarlo_errors(const Counts1& counts, const DensityMatrix& target, int n_trials,
                                   std::uint64_t seed, ReconstructionMethod method, bool resample) {
  return montecarlo_impl(counts, target, n_trials, seed, method, resample, [](const Counts1& c, CounterRng& rng) {
    Counts1 out{};
    for (int i = 0; i < 6; ++i) out[i] = poisson_draw(c[i], rng);
    return out;
  });
}

MonteCarloErrors montecarlo_errors(const Counts2& counts, const DensityMatrix& target, int n_trials,
                                   std::uint64_t seed, ReconstructionMethod method, bool resample) {
  return montecarlo_impl(counts, target, n_trials, seed, method, resample, [](const Counts2& c, CounterRng& rng) {
    Counts2 out{};
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) out[i][j] = poisson_draw(c[i][j], rng);
    return out;
  });
}

void ExperimentConfig::validate() const {
  if (run_single && single_photon_events == 0) throw std::invalid_argument("single_photon_events must be positive");
  if (run_pairs && pair_events == 0) throw std::invalid_argument("pair_events must be positive");
  if (!run_single && !run_pairs) throw std::invalid_argument("nothing to run");
  if (!(residual_prefix_distance >= 0.0 && residual_prefix_distance <= 2.0)) {
    throw std::invalid_argument("residual_prefix_distance must be in [0, 2]");
  }
  if (!(werner_mixing >= 0.0 && werner_mixing <= 1.0)) throw std::invalid_argument("werner_mixing must be in [0, 1]");
  if (montecarlo_trials != 0 && montecarlo_trials < 50) {
    throw std::invalid_argument("montecarlo_trials must be 0 or at least 50");
  }
}

ExperimentReport run_full_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;

  // Stream ids for derived seeds.
  enum : std::uint64_t { kPrefix = 1, kResidual = 3, kSingle = 100, kPairs = 200, kBootstrap = 300 };

  std::array<ChipSide, 2> sides{ChipSide::ideal(), ChipSide::ideal()};
  for (int s = 0; s < 2; ++s) {
    PlateOperator raw;
    if (config.random_prefix) {
      CounterRng rng(derive_seed(config.seed, kPrefix + s));
      raw = random_unitary(rng);
      report.compensation[s] = compensate(apply_prefix(sides[s], raw));
      sides[s].compensator = report.compensation[s].compensator();
    }
    PlateOperator residual;
    if (config.residual_prefix_distance > 0.0) {
      CounterRng rng(derive_seed(config.seed, kResidual + s));
      residual = residual_unitary(config.residual_prefix_distance, rng);
    }
    sides[s].prefix = residual * raw;
  }

  auto bootstrap_seed = [&](std::uint64_t stream) { return derive_seed(config.seed, kBootstrap + stream); };

  if (config.run_single) {
    double sum = 0.0;
    for (int s = 0; s < 2; ++s) {
      for (int k = 0; k < 6; ++k) {
        const Projector label = kAllProjectors[k];
        const DensityMatrix rho = DensityMatrix::from_pure(PolarizationState::from_projector(label));
        const std::uint64_t stream = static_cast<std::uint64_t>(6 * s + k);
        Counts1 counts;
        if (config.poisson) {
          counts = to_counts(simulate_single_counts(rho, sides[s], config.single_photon_events,
                                                    derive_seed(config.seed, kSingle + stream)));
        } else {
          counts = expected_single_counts(rho, sides[s], static_cast<double>(config.single_photon_events));
        }
        TomographyResult r = reconstruct(counts, config.method, rho);
        if (config.montecarlo_trials > 0) {
          const auto mc = montecarlo_errors(counts, rho, config.montecarlo_trials, bootstrap_seed(stream),
                                            config.method);
          r.fidelity_sigma = mc.fidelity_sigma;
          r.n_montecarlo = mc.trials;
        }
        sum += *r.fidelity;
        report.single.push_back({s == 0 ? 'A' : 'B', label, r});
      }
    }
    report.mean_single_fidelity = sum / static_cast<double>(report.single.size());
  }

  if (config.run_pairs) {
    const DensityMatrix source = werner_state(config.werner_mixing);
    const DensityMatrix target = DensityMatrix::from_pure(TwoPhotonState::psi_minus());
    const ChipSides pair{sides[0], sides[1]};
    Counts2 counts;
    if (config.poisson) {
      counts = to_counts(
          simulate_counts(source, pair, config.pair_events, derive_seed(config.seed, kPairs)));
    } else {
      counts = expected_counts(source, pair, static_cast<double>(config.pair_events));
    }
    TomographyResult r = reconstruct(counts, config.method, target);
    if (config.montecarlo_trials > 0) {
      const auto mc = montecarlo_errors(counts, target, config.montecarlo_trials, bootstrap_seed(12), config.method);
      r.fidelity_sigma = mc.fidelity_sigma;
      r.n_montecarlo = mc.trials;
    }
    report.pair = r;
  }
  return report;
}

}  // namespace iwp
