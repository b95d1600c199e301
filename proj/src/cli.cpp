#include "iwp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "iwp/characterization.hpp"
#include "iwp/fabrication.hpp"
#include "iwp/qst_device.hpp"
#include "iwp/records.hpp"
#include "iwp/rng.hpp"
#include "iwp/tomography.hpp"
#include "iwp/waveguide.hpp"
#include "iwp/waveplate_algebra.hpp"

namespace iwp::cli {

namespace {

using nlohmann::json;

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ValidationError(std::string(name) + " must be finite");
  return v;
}

struct OutputOptions {
  bool json = false;
  std::string path;
};

void add_output_options(CLI::App* sub, OutputOptions& o) {
  sub->add_flag("--json", o.json, "Machine-readable JSON output");
  sub->add_option("--out", o.path, "Write the result to this file instead of stdout");
}

void emit(const OutputOptions& o, std::ostream& out, const std::string& text) {
  if (o.path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(o.path, std::ios::binary);
  if (!f) throw ValidationError("cannot open output file " + o.path);
  f << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open input file " + path);
  return f;
}

json read_json_file(const std::string& path) {
  auto f = open_input(path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

CsvTable read_csv_file(const std::string& path) {
  auto f = open_input(path);
  return read_csv(f);
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------- synthesize

struct SynthesizeArgs {
  double theta_deg = 0.0;
  double delta_deg = 0.0;
  double birefringence = kTypicalBirefringence;
  double wavelength_nm = 800.0;
  OutputOptions out;
};

int cmd_synthesize(const SynthesizeArgs& a, std::ostream& out) {
  const PlateSpec target{deg_to_rad(finite(a.theta_deg, "theta")), deg_to_rad(finite(a.delta_deg, "delta"))};
  if (!(a.birefringence > 0.0) || !(a.wavelength_nm > 0.0)) {
    throw ValidationError("birefringence and wavelength must be positive");
  }
  const double wl = a.wavelength_nm * 1e-9;
  const EquivalentPlate canon = canonicalize(target);
  // A canonical plate whose axis already lies inside the writable tilt range
  // is realized by one segment.
  const bool shortcut = std::abs(canon.spec.theta) <= kPi / 8.0;
  const PlateCascade cascade = shortcut ? PlateCascade{{canon.spec}} : decompose_sandwich(canon.spec);

  WaveguideDevice dev;
  dev.wavelength = wl;
  for (const auto& p : cascade.plates) {
    const double delta = wrap_two_pi(p.delta);
    dev.segments.push_back({delta * wl / (2.0 * kPi * a.birefringence), a.birefringence, p.theta});
  }
  const DeviceResponse resp = device_operator(dev);
  const double residual = distance_up_to_phase(resp.polarization, target.matrix());
  const double loss_db = -10.0 * std::log10(resp.transmittance);

  json j;
  j["target"] = {{"theta_deg", a.theta_deg}, {"delta_deg", a.delta_deg}};
  j["canonical"] = {{"theta_deg", rad_to_deg(canon.spec.theta)},
                    {"delta_deg", rad_to_deg(canon.spec.delta)},
                    {"global_phase_rad", canon.global_phase}};
  j["shortcut"] = shortcut;
  j["birefringence"] = a.birefringence;
  j["wavelength_nm"] = a.wavelength_nm;
  json plates = json::array();
  for (std::size_t i = 0; i < cascade.plates.size(); ++i) {
    plates.push_back({{"tilt_deg", rad_to_deg(cascade.plates[i].theta)},
                      {"retardance_deg", rad_to_deg(wrap_two_pi(cascade.plates[i].delta))},
                      {"length_mm", dev.segments[i].length * 1e3}});
  }
  j["plates"] = plates;
  j["max_abs_tilt_deg"] = rad_to_deg(max_abs_tilt(cascade));
  j["total_length_mm"] = dev.total_length() * 1e3;
  j["loss_db"] = loss_db;
  j["transmittance"] = resp.transmittance;
  j["residual"] = residual;

  if (a.out.json) {
    emit(a.out, out, dump(j));
    return kExitOk;
  }
  std::ostringstream s;
  s << fmt("target     theta = %.6f deg, delta = %.6f deg\n", a.theta_deg, a.delta_deg);
  s << fmt("canonical  theta = %.6f deg, delta = %.6f deg, phase = %.6f rad\n", rad_to_deg(canon.spec.theta),
           rad_to_deg(canon.spec.delta), canon.global_phase);
  s << (shortcut ? "single-segment shortcut\n" : fmt("%zu-plate cascade\n", cascade.plates.size()));
  for (std::size_t i = 0; i < cascade.plates.size(); ++i) {
    s << fmt("  plate %zu: tilt %+9.4f deg  retardance %8.4f deg  length %8.4f mm\n", i + 1,
             rad_to_deg(cascade.plates[i].theta), rad_to_deg(wrap_two_pi(cascade.plates[i].delta)),
             dev.segments[i].length * 1e3);
  }
  s << fmt("total length %.4f mm, loss %.3f dB (b = %.3e, lambda = %.1f nm)\n", dev.total_length() * 1e3, loss_db,
           a.birefringence, a.wavelength_nm);
  s << fmt("verification residual %.3e\n", residual);
  emit(a.out, out, s.str());
  return kExitOk;
}

// -------------------------------------------------------------------- curves

struct CurvesArgs {
  double tilt_deg = 22.5;
  double wavelength_nm = 800.0;
  std::optional<double> birefringence;
  double half_wave_mm = 18.0;
  double length_max_mm = 36.0;
  int points = 361;
  OutputOptions out;
};

int cmd_curves(const CurvesArgs& a, std::ostream& out) {
  if (a.points < 2) throw ValidationError("--points must be at least 2");
  if (!(a.length_max_mm > 0.0) || !(a.wavelength_nm > 0.0)) {
    throw ValidationError("length and wavelength must be positive");
  }
  const double wl = a.wavelength_nm * 1e-9;
  double b;
  if (a.birefringence) {
    b = *a.birefringence;
  } else {
    if (!(a.half_wave_mm > 0.0)) throw ValidationError("--half-wave-mm must be positive");
    b = wl / (2.0 * a.half_wave_mm * 1e-3);
  }
  if (!(b > 0.0)) throw ValidationError("birefringence must be positive");
  std::vector<double> lengths;
  for (int i = 0; i < a.points; ++i) lengths.push_back(a.length_max_mm * 1e-3 * i / (a.points - 1));
  const auto pts = transfer_curves(deg_to_rad(finite(a.tilt_deg, "tilt")), b, wl, lengths);

  if (!a.out.json) {
    std::ostringstream s;
    write_transfer_csv(s, pts);
    emit(a.out, out, s.str());
    return kExitOk;
  }
  json j;
  j["tilt_deg"] = a.tilt_deg;
  j["birefringence"] = b;
  j["wavelength_nm"] = a.wavelength_nm;
  j["half_wave_length_mm"] = half_wave_length(b, wl) * 1e3;
  json rows = json::array();
  for (const auto& p : pts) {
    rows.push_back({{"length_mm", p.length * 1e3}, {"p_H", p.p_h}, {"p_V", p.p_v}, {"p_D", p.p_d}, {"p_A", p.p_a}});
  }
  j["points"] = rows;
  emit(a.out, out, dump(j));
  return kExitOk;
}

// ----------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string input;
  std::vector<double> angles_deg{0.0, 5.0, 10.0, 15.0, 20.0, 22.5, 25.0, 30.0, 35.0};
  OutputOptions out;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto samples = calibration_samples_from_csv(read_csv_file(a.input));
  const CalibrationFit fit = fit_calibration(samples);
  std::vector<double> angles;
  for (double d : a.angles_deg) angles.push_back(deg_to_rad(finite(d, "angle")));
  const auto table = offset_compensation_table(fit.model, angles);
  const double f = objective_focal_from_calibration(fit.model, reference_setup());
  const double sc = std::sqrt(std::max(0.0, fit.covariance(0, 0)));
  const double ss = std::sqrt(std::max(0.0, fit.covariance(1, 1)));

  json j;
  j["C_per_mm"] = fit.model.c_per_mm;
  j["C_sigma_per_mm"] = sc;
  j["s0_mm"] = fit.model.s0_mm;
  j["s0_sigma_mm"] = ss;
  j["rms_deg"] = rad_to_deg(fit.rms);
  j["converged"] = fit.converged;
  j["samples"] = samples.size();
  j["objective_focal_mm"] = f * 1e3;
  json rows = json::array();
  for (const auto& e : table) {
    rows.push_back({{"theta_deg", rad_to_deg(e.theta)},
                    {"lens_shift_mm", e.lens_shift_mm},
                    {"lateral_offset_um", e.lateral_offset_um},
                    {"out_of_range", e.out_of_range}});
  }
  j["offset_table"] = rows;

  if (a.out.json) {
    emit(a.out, out, dump(j));
  } else {
    std::ostringstream s;
    s << fmt("C  = %.6f +- %.6f 1/mm\n", fit.model.c_per_mm, sc);
    s << fmt("s0 = %.6f +- %.6f mm\n", fit.model.s0_mm, ss);
    s << fmt("rms residual %.4f deg over %zu samples, %s\n", rad_to_deg(fit.rms), samples.size(),
             fit.converged ? "converged" : "NOT converged");
    s << fmt("implied objective focal length %.4f mm\n", f * 1e3);
    s << "theta_deg,lens_shift_mm,lateral_offset_um,out_of_range\n";
    for (const auto& e : table) {
      s << fmt("%.3f,%.6f,%.4f,%d\n", rad_to_deg(e.theta), e.lens_shift_mm, e.lateral_offset_um,
               e.out_of_range ? 1 : 0);
    }
    emit(a.out, out, s.str());
  }
  return fit.converged ? kExitOk : kExitNonConvergence;
}

// -------------------------------------------------------------- characterize

struct CharacterizeArgs {
  std::string mode = "polarimetry";
  std::string input;
  std::optional<double> length_mm;
  double wavelength_nm = 800.0;
  double birefringence = kTypicalBirefringence;
  bool fit_birefringence = false;
  std::optional<int> branch;
  OutputOptions out;
};

int cmd_characterize(const CharacterizeArgs& a, std::ostream& out) {
  const double wl = a.wavelength_nm * 1e-9;
  if (!(wl > 0.0)) throw ValidationError("wavelength must be positive");
  const CsvTable table = read_csv_file(a.input);
  json j;
  std::ostringstream s;
  bool converged = true;

  if (a.mode == "polarimetry") {
    const AxisRetardanceFit fit = fit_axis_and_retardance(polarimetry_samples_from_csv(table));
    converged = fit.converged;
    j["mode"] = "polarimetry";
    j["theta_deg"] = rad_to_deg(fit.theta);
    j["theta_sigma_deg"] = rad_to_deg(std::sqrt(std::max(0.0, fit.covariance(0, 0))));
    j["delta_deg"] = rad_to_deg(fit.delta);
    j["delta_sigma_deg"] = rad_to_deg(std::sqrt(std::max(0.0, fit.covariance(1, 1))));
    j["rms"] = fit.rms;
    j["converged"] = fit.converged;
    s << fmt("theta = %.4f deg, delta = %.4f deg, rms %.3e, %s\n", rad_to_deg(fit.theta), rad_to_deg(fit.delta),
             fit.rms, fit.converged ? "converged" : "NOT converged");
    if (a.length_mm) {
      if (!(*a.length_mm > 0.0)) throw ValidationError("--length-mm must be positive");
      const auto est = birefringence_from_retardance(fit.delta, *a.length_mm * 1e-3, wl, a.branch);
      j["birefringence"] = est.birefringence;
      j["branch"] = est.branch;
      j["ambiguous"] = est.ambiguous;
      j["plausible_birefringence"] = est.plausible;
      s << fmt("b = %.4e (branch %d%s)\n", est.birefringence, est.branch, est.ambiguous ? ", ambiguous" : "");
    }
  } else {
    const TiltFit fit = fit_tilt_from_scan(scan_samples_from_csv(table), a.birefringence, wl, a.fit_birefringence);
    converged = fit.converged;
    j["mode"] = "scan";
    j["theta_deg"] = rad_to_deg(fit.theta);
    j["theta_sigma_deg"] = rad_to_deg(std::sqrt(std::max(0.0, fit.covariance(0, 0))));
    j["birefringence"] = fit.birefringence;
    if (a.fit_birefringence && fit.covariance.rows() > 1) {
      j["birefringence_sigma"] = std::sqrt(std::max(0.0, fit.covariance(1, 1)));
    }
    j["rms"] = fit.rms;
    j["converged"] = fit.converged;
    j["ill_conditioned"] = fit.ill_conditioned;
    s << fmt("theta = %.4f deg, b = %.5e, rms %.3e, %s%s\n", rad_to_deg(fit.theta), fit.birefringence, fit.rms,
             fit.converged ? "converged" : "NOT converged", fit.ill_conditioned ? ", ill-conditioned scan" : "");
  }
  emit(a.out, out, a.out.json ? dump(j) : s.str());
  return converged ? kExitOk : kExitNonConvergence;
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string state = "psi-minus";
  std::uint64_t events = 100000;
  std::uint64_t seed = 42;
  double werner_mixing = 0.0;
  double residual_distance = 0.0;
  double accidentals = 0.0;
  int montecarlo = 0;
  std::string method = "auto";
  OutputOptions out;
};

ChipSide residual_side(double distance, std::uint64_t seed, std::uint64_t stream) {
  if (distance == 0.0) return ChipSide::ideal();
  CounterRng rng(derive_seed(seed, stream));
  return apply_prefix(ChipSide::ideal(), residual_unitary(distance, rng));
}

json tomography_json(const TomographyResult& r);

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  if (!(a.residual_distance >= 0.0 && a.residual_distance <= 2.0)) {
    throw ValidationError("--residual-distance must lie in [0, 2]");
  }
  if (!(a.accidentals >= 0.0)) throw ValidationError("--accidentals must be >= 0");
  if (a.events == 0) throw ValidationError("--events must be positive");
  SimulationOptions opt;
  opt.accidentals_per_cell = a.accidentals;

  if (a.state == "experiment") {
    ExperimentConfig cfg;
    cfg.single_photon_events = a.events;
    cfg.pair_events = a.events;
    cfg.seed = a.seed;
    cfg.residual_prefix_distance = a.residual_distance;
    cfg.werner_mixing = a.werner_mixing;
    cfg.method = method_from_string(a.method);
    cfg.montecarlo_trials = a.montecarlo;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
    const ExperimentReport rep = run_full_experiment(cfg);
    json j;
    json single = json::array();
    bool converged = true;
    for (const auto& e : rep.single) {
      json entry = tomography_json(e.result);
      entry["side"] = std::string(1, e.side);
      entry["input"] = std::string(to_string(e.input));
      single.push_back(entry);
      converged = converged && e.result.converged;
    }
    j["single"] = single;
    j["mean_single_fidelity"] = rep.mean_single_fidelity;
    if (rep.pair) {
      j["pair"] = tomography_json(*rep.pair);
      converged = converged && rep.pair->converged;
    }
    json comp = json::array();
    for (const auto& c : rep.compensation) {
      comp.push_back({{"pc_theta_deg", rad_to_deg(c.pc_theta)},
                      {"pc_delta_deg", rad_to_deg(c.pc_delta)},
                      {"lc_phase_deg", rad_to_deg(c.lc_phase)},
                      {"stage1_residual", c.stage1_residual},
                      {"stage2_residual", c.stage2_residual},
                      {"circular_residual", c.circular_residual},
                      {"converged", c.converged}});
    }
    j["compensation"] = comp;
    if (a.out.json || !a.out.path.empty()) {
      emit(a.out, out, dump(j));
    } else {
      std::ostringstream s;
      auto sigma = [](const TomographyResult& r) {
        return r.fidelity_sigma ? fmt(" +- %.5f", *r.fidelity_sigma) : std::string();
      };
      for (const auto& e : rep.single) {
        s << fmt("side %c input %s  fidelity %.5f%s\n", e.side, to_string(e.input).data(),
                 e.result.fidelity.value_or(0.0), sigma(e.result).c_str());
      }
      s << fmt("mean single-photon fidelity %.5f\n", rep.mean_single_fidelity);
      if (rep.pair) {
        s << fmt("psi- fidelity %.5f%s\n", rep.pair->fidelity.value_or(0.0), sigma(*rep.pair).c_str());
      }
      emit(a.out, out, s.str());
    }
    return converged ? kExitOk : kExitNonConvergence;
  }

  const ChipSides sides{residual_side(a.residual_distance, a.seed, 3), residual_side(a.residual_distance, a.seed, 4)};
  const auto rec_seed = derive_seed(a.seed, 200);
  if (a.state == "psi-minus" || a.state == "werner") {
    const DensityMatrix rho = a.state == "werner" ? werner_state(a.werner_mixing)
                                                  : DensityMatrix::from_pure(TwoPhotonState::psi_minus());
    CoincidenceRecord rec = simulate_counts(rho, sides, a.events, rec_seed, opt);
    rec.seed = a.seed;
    emit(a.out, out, dump(to_json(rec)));
    return kExitOk;
  }
  Projector p;
  try {
    p = projector_from_string(a.state);
  } catch (const std::invalid_argument&) {
    throw ValidationError("unknown --state '" + a.state + "'");
  }
  SingleCountRecord rec = simulate_single_counts(DensityMatrix::from_pure(PolarizationState::from_projector(p)),
                                                 sides.first, a.events, rec_seed, opt);
  rec.seed = a.seed;
  emit(a.out, out, dump(to_json(rec)));
  return kExitOk;
}

// ---------------------------------------------------------------- tomography

struct TomographyArgs {
  std::string input;
  std::string method = "auto";
  std::string target = "auto";
  int montecarlo = 0;
  std::uint64_t seed = 42;
  OutputOptions out;
};

std::vector<std::string> basis_labels(int dim) {
  if (dim == 2) return {"H", "V"};
  return {"HH", "HV", "VH", "VV"};
}

json tomography_json(const TomographyResult& r) {
  const Eigen::MatrixXcd& m = r.rho.matrix();
  json j;
  j["dimension"] = m.rows();
  j["basis"] = basis_labels(static_cast<int>(m.rows()));
  j["method"] = to_string(r.method);
  j["linear_physical"] = r.linear_physical;
  j["converged"] = r.converged;
  j["log_likelihood"] = r.log_likelihood;
  j["rho_real"] = matrix_json(m.real());
  j["rho_imag"] = matrix_json(m.imag());
  j["min_eigenvalue"] = r.rho.min_eigenvalue();
  j["purity"] = r.rho.purity();
  if (r.fidelity) j["fidelity"] = *r.fidelity;
  if (r.fidelity_sigma) j["fidelity_sigma"] = *r.fidelity_sigma;
  if (r.n_montecarlo > 0) j["montecarlo_trials"] = r.n_montecarlo;
  return j;
}

// Text bar chart of the matrix elements, one line per entry.
std::string render_bars(const Eigen::MatrixXd& m, const std::vector<std::string>& labels, const char* title) {
  constexpr int kWidth = 20;
  std::ostringstream s;
  s << title << "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      const int n = std::clamp(static_cast<int>(std::lround(std::abs(v) * kWidth)), 0, kWidth);
      std::string bar(static_cast<std::size_t>(n), v < 0.0 ? '-' : '#');
      bar.resize(kWidth, ' ');
      s << fmt("  %-2s,%-2s %+8.4f |%s|\n", labels[r].c_str(), labels[c].c_str(), v, bar.c_str());
    }
  }
  return s.str();
}

std::optional<DensityMatrix> resolve_target(const std::string& name, int dim) {
  if (name == "none") return std::nullopt;
  if (name == "auto") {
    if (dim == 4) return DensityMatrix::from_pure(TwoPhotonState::psi_minus());
    return std::nullopt;
  }
  if (name == "psi-minus") {
    if (dim != 4) throw ValidationError("target psi-minus needs a two-photon record");
    return DensityMatrix::from_pure(TwoPhotonState::psi_minus());
  }
  Projector p;
  try {
    p = projector_from_string(name);
  } catch (const std::invalid_argument&) {
    throw ValidationError("unknown --target '" + name + "'");
  }
  if (dim != 2) throw ValidationError("single-photon target needs a single-photon record");
  return DensityMatrix::from_pure(PolarizationState::from_projector(p));
}

int cmd_tomography(const TomographyArgs& a, std::ostream& out) {
  if (a.montecarlo != 0 && a.montecarlo < 50) throw ValidationError("--montecarlo needs 0 or at least 50 trials");
  const CountRecord rec = [&]() -> CountRecord {
    const std::string& p = a.input;
    if (p.size() >= 4 && p.compare(p.size() - 4, 4, ".csv") == 0) return single_record_from_csv(read_csv_file(p));
    return count_record_from_json(read_json_file(p));
  }();
  const ReconstructionMethod method = method_from_string(a.method);

  TomographyResult result;
  std::optional<DensityMatrix> target;
  std::optional<MonteCarloErrors> mc;
  std::visit(
      [&](const auto& r) {
        const auto counts = to_counts(r);
        const int dim = std::is_same_v<std::decay_t<decltype(r)>, CoincidenceRecord> ? 4 : 2;
        target = resolve_target(a.target, dim);
        result = reconstruct(counts, method, target);
        if (a.montecarlo > 0) {
          if (!target) throw ValidationError("--montecarlo needs a fidelity target");
          mc = montecarlo_errors(counts, *target, a.montecarlo, a.seed, method);
          result.fidelity_sigma = mc->fidelity_sigma;
          result.n_montecarlo = mc->trials;
        }
      },
      rec);

  json j = tomography_json(result);
  if (mc) {
    j["rho_real_sigma"] = matrix_json(mc->real_sigma);
    j["rho_imag_sigma"] = matrix_json(mc->imag_sigma);
  }
  if (a.out.json) {
    emit(a.out, out, dump(j));
  } else {
    const auto labels = basis_labels(result.rho.dim());
    std::ostringstream s;
    s << fmt("method %s%s, %s\n", to_string(result.method), result.linear_physical ? "" : " (linear estimate non-physical)",
             result.converged ? "converged" : "NOT converged");
    if (result.fidelity) {
      s << fmt("fidelity %.5f", *result.fidelity);
      if (result.fidelity_sigma) s << fmt(" +- %.5f (%d trials)", *result.fidelity_sigma, result.n_montecarlo);
      s << "\n";
    }
    s << render_bars(result.rho.matrix().real(), labels, "Re(rho)");
    s << render_bars(result.rho.matrix().imag(), labels, "Im(rho)");
    emit(a.out, out, s.str());
  }
  return result.converged ? kExitOk : kExitNonConvergence;
}

// -------------------------------------------------------------------- config

std::string config_value(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  throw ValidationError("config key '" + key + "' has an unsupported value type");
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& s) {
    return s == flag || s.rfind(flag + "=", 0) == 0;
  });
}

// Turns the config object into flags for @p sub, skipping keys given explicitly.
std::vector<std::string> config_to_args(const json& cfg, CLI::App* sub, const std::vector<std::string>& explicit_args) {
  std::vector<std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "command") continue;
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || key == "config") {
      throw ValidationError("unknown config key '" + key + "' for command " + sub->get_name());
    }
    if (given_on_command_line(explicit_args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (!value.is_boolean()) throw ValidationError("config key '" + key + "' must be a boolean");
      if (value.get<bool>()) out.push_back(flag);
      continue;
    }
    if (value.is_array()) {
      out.push_back(flag);
      for (const auto& v : value) out.push_back(config_value(v, key));
      continue;
    }
    out.push_back(flag + "=" + config_value(value, key));
  }
  return out;
}

void print_error(std::ostream& err, const char* kind, const std::string& message, int code) {
  json j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_code"] = code;
  err << j.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Integrated waveplate design, characterization and polarization tomography"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthesizeArgs syn;
  auto* s_syn = app.add_subcommand("synthesize", "Decompose a target waveplate into writable segments");
  s_syn->add_option("--theta", syn.theta_deg, "Target optical-axis tilt [deg]")->required();
  s_syn->add_option("--delta", syn.delta_deg, "Target retardance [deg]")->required();
  s_syn->add_option("--birefringence", syn.birefringence, "Waveguide birefringence")->capture_default_str();
  s_syn->add_option("--wavelength-nm", syn.wavelength_nm, "Wavelength [nm]")->capture_default_str();
  add_output_options(s_syn, syn.out);

  CurvesArgs cur;
  double cur_b = 0.0;
  auto* s_cur = app.add_subcommand("curves", "Power transfer vs. length for H input (CSV)");
  s_cur->add_option("--tilt-deg", cur.tilt_deg, "Optical-axis tilt [deg]")->capture_default_str();
  s_cur->add_option("--wavelength-nm", cur.wavelength_nm, "Wavelength [nm]")->capture_default_str();
  auto* o_b = s_cur->add_option("--birefringence", cur_b, "Birefringence (overrides --half-wave-mm)");
  s_cur->add_option("--half-wave-mm", cur.half_wave_mm, "Length giving half-wave retardance [mm]")
      ->capture_default_str();
  s_cur->add_option("--length-max-mm", cur.length_max_mm, "Largest length [mm]")->capture_default_str();
  s_cur->add_option("--points", cur.points, "Number of lengths")->capture_default_str();
  add_output_options(s_cur, cur.out);

  CalibrateArgs cal;
  auto* s_cal = app.add_subcommand("calibrate", "Fit theta = atan((s - s0) C) to lens-shift data");
  s_cal->add_option("--input", cal.input, "CSV with columns s_mm,theta_deg")->required();
  s_cal->add_option("--angles-deg", cal.angles_deg, "Tilts for the offset table [deg]");
  add_output_options(s_cal, cal.out);

  CharacterizeArgs chr;
  int chr_branch = 0;
  double chr_length = 0.0;
  auto* s_chr = app.add_subcommand("characterize", "Fit axis/retardance (polarimetry) or tilt (length scan)");
  s_chr->add_option("--mode", chr.mode, "polarimetry or scan")
      ->check(CLI::IsMember({"polarimetry", "scan"}))
      ->capture_default_str();
  s_chr->add_option("--input", chr.input, "Input CSV")->required();
  auto* o_len = s_chr->add_option("--length-mm", chr_length, "Plate length for a birefringence estimate [mm]");
  s_chr->add_option("--wavelength-nm", chr.wavelength_nm, "Wavelength [nm]")->capture_default_str();
  s_chr->add_option("--birefringence", chr.birefringence, "Known birefringence (scan mode)")->capture_default_str();
  s_chr->add_flag("--fit-birefringence", chr.fit_birefringence, "Also fit b (scan mode)");
  auto* o_branch = s_chr->add_option("--branch", chr_branch, "Retardance branch k in delta + 2 pi k");
  add_output_options(s_chr, chr.out);

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Simulate chip counts (JSON record) or the full experiment");
  s_sim->add_option("--state", sim.state, "psi-minus, werner, H, V, D, A, R, L or experiment")->capture_default_str();
  s_sim->add_option("--events", sim.events, "Pairs (or photons) sent")->capture_default_str();
  s_sim->add_option("--seed", sim.seed, "RNG seed")->capture_default_str();
  s_sim->add_option("--werner-mixing", sim.werner_mixing, "White-noise weight p")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  s_sim->add_option("--residual-distance", sim.residual_distance, "Leftover prefix distance per side")
      ->capture_default_str();
  s_sim->add_option("--accidentals", sim.accidentals, "Mean accidental counts per cell")->capture_default_str();
  s_sim->add_option("--montecarlo", sim.montecarlo, "Bootstrap trials (experiment)")->capture_default_str();
  s_sim->add_option("--method", sim.method, "auto, linear or mle (experiment)")
      ->check(CLI::IsMember({"auto", "linear", "mle"}))
      ->capture_default_str();
  add_output_options(s_sim, sim.out);

  TomographyArgs tom;
  auto* s_tom = app.add_subcommand("tomography", "Reconstruct a density matrix from a count record");
  s_tom->add_option("--input", tom.input, "Count record (.json, or .csv label,count)")->required();
  s_tom->add_option("--method", tom.method, "auto, linear or mle")
      ->check(CLI::IsMember({"auto", "linear", "mle"}))
      ->capture_default_str();
  s_tom->add_option("--target", tom.target, "auto, none, psi-minus or H/V/D/A/R/L")->capture_default_str();
  s_tom->add_option("--montecarlo", tom.montecarlo, "Bootstrap trials for error bars")->capture_default_str();
  s_tom->add_option("--seed", tom.seed, "Bootstrap seed")->capture_default_str();
  add_output_options(s_tom, tom.out);

  try {
    // --config is handled before CLI11 sees the arguments.
    std::vector<std::string> args;
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < raw_args.size(); ++i) {
      const std::string& s = raw_args[i];
      if (s == "--config") {
        if (i + 1 >= raw_args.size()) throw ValidationError("--config needs a file");
        config_path = raw_args[++i];
      } else if (s.rfind("--config=", 0) == 0) {
        config_path = s.substr(9);
      } else {
        args.push_back(s);
      }
    }
    if (config_path) {
      const json cfg = read_json_file(*config_path);
      if (!cfg.is_object()) throw ValidationError("config must be a JSON object");
      auto cmd_it = std::find_if(args.begin(), args.end(),
                                 [&](const std::string& s) { return app.get_subcommand_no_throw(s) != nullptr; });
      if (cmd_it == args.end()) {
        if (!cfg.contains("command") || !cfg["command"].is_string()) {
          throw ValidationError("no command given on the command line or in the config");
        }
        args.insert(args.begin(), cfg["command"].get<std::string>());
        cmd_it = args.begin();
      }
      CLI::App* sub = app.get_subcommand_no_throw(*cmd_it);
      if (sub == nullptr) throw ValidationError("unknown command '" + *cmd_it + "'");
      const auto extra = config_to_args(cfg, sub, args);
      args.insert(cmd_it + 1, extra.begin(), extra.end());
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      print_error(err, "validation", e.what(), kExitValidation);
      return kExitValidation;
    }

    if (*o_b) cur.birefringence = cur_b;
    if (*o_len) chr.length_mm = chr_length;
    if (*o_branch) chr.branch = chr_branch;

    if (s_syn->parsed()) return cmd_synthesize(syn, out);
    if (s_cur->parsed()) return cmd_curves(cur, out);
    if (s_cal->parsed()) return cmd_calibrate(cal, out);
    if (s_chr->parsed()) return cmd_characterize(chr, out);
    if (s_sim->parsed()) return cmd_simulate(sim, out);
    if (s_tom->parsed()) return cmd_tomography(tom, out);
    return kExitValidation;
  } catch (const AmbiguityError& e) {
    print_error(err, "ambiguous", e.what(), kExitNonConvergence);
    return kExitNonConvergence;
  } catch (const EstimationError& e) {
    print_error(err, "estimation", e.what(), kExitNonConvergence);
    return kExitNonConvergence;
  } catch (const ValidationError& e) {
    print_error(err, "validation", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const FormatError& e) {
    print_error(err, "format", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const json::exception& e) {
    print_error(err, "format", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    print_error(err, "validation", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const std::domain_error& e) {
    print_error(err, "validation", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what(), kExitInternal);
    return kExitInternal;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace iwp::cli
