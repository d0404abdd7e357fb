#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hetsim/field_optics.hpp"
#include "hetsim/io.hpp"
#include "hetsim/noise_analytic.hpp"
#include "hetsim/photocurrent_sim.hpp"
#include "hetsim/rng.hpp"
#include "hetsim/spectral_dsp.hpp"

namespace hetsim {

// ---------------------------------------------------------------------------
// configuration model
// ---------------------------------------------------------------------------

/// Flat, sectioned key-value scenario format. Units live in the key names;
/// every key has a default, so a minimal file is just [scenario] name = ...
struct RunConfig {
  // [field]
  double wavelength_nm = 1064.0;
  double lo_power_mw = 4.0;
  double signal_power_pw = 20.0;
  double signal_flux = 0.0;  // photons/s; when > 0 overrides signal_power_pw
                             // and is NOT scaled by mc_flux_scale
  double het_frequency_mhz = 0.0;
  double relative_phase_rad = 0.0;
  double lo_linewidth_hz = 0.0;
  // [path]
  double collection_efficiency = 0.70;
  double visibility_1 = 0.98;
  double visibility_2 = 0.99;
  // [detector]
  double efficiency = 1.0;
  std::string pulse_kind = "rectangular";
  double pulse_width_ns = 10.0;
  double pulse_area_c = constants::electron_charge_c;
  double electronics_psd_a2hz = 0.0;
  double dark_rate_hz = 0.0;  // reserved knob, defaults off
  // [noise]
  std::string noise_model = "coherence";
  // [sim]
  double sample_rate_mhz = 100.0;
  std::uint64_t samples = 1u << 20;
  int trials = 100;
  std::uint64_t master_seed = 20260809;
  double mc_flux_scale = 1e-8;  // scales both fluxes for the whole run;
                                // floor differences are scale-invariant
  int threads = 1;
  std::uint64_t trace_samples_out = 65536;
  // [spectrum]
  double rbw_khz = 3.0;
  double span_lo_mhz = 1.0;
  double span_hi_mhz = 5.0;
  double tone_guard_khz = 100.0;  // auto-exclusion half-width at the beat
  std::vector<std::pair<double, double>> exclude_mhz;
  double db_ref_a2 = 1.0;
};

enum class ScenarioMode { single, compare, fringe };

struct Expectation {
  std::string metric;
  double target = 0.0;
  double tolerance = 0.0;
};

struct FringeConfig {
  double visibility_1 = 0.98;
  double visibility_2 = 0.99;
  double mean_intensity = 1.0;
  int points = 4096;
  double periods = 4.0;
  double noise_rel = 0.01;
  double phase_1_rad = 0.0;
  double phase_2_rad = 0.6;
};

struct Scenario {
  std::string name;
  std::string note;
  ScenarioMode mode = ScenarioMode::single;
  RunConfig base;
  // compare mode: qualified "section.key" overrides building leg B
  std::vector<std::pair<std::string, std::string>> variant_b;
  FringeConfig fringe;
  std::vector<Expectation> expects;
};

struct ScenarioParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ScenarioValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// exit-code contract of the scenario runner
enum class RunStatus : int {
  ok = 0,
  expectation_failed = 1,
  parse_error = 2,
  validation_error = 3,
  runtime_error = 4,
};

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ScenarioParseError(where + ": not a number: '" + v + "'");
  }
  if (trim(v.substr(pos)) != "")
    throw ScenarioParseError(where + ": trailing text after number: '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    return std::stoull(trim(v));
  } catch (const std::exception&) {
    throw ScenarioParseError(where + ": not an unsigned integer: '" + v + "'");
  }
}

inline int parse_int(const std::string& v, const std::string& where) {
  try {
    return std::stoi(trim(v));
  } catch (const std::exception&) {
    throw ScenarioParseError(where + ": not an integer: '" + v + "'");
  }
}

inline std::pair<double, double> parse_pair(const std::string& v,
                                            const std::string& where) {
  std::istringstream ss(v);
  double a, b;
  if (!(ss >> a >> b))
    throw ScenarioParseError(where + ": expected two numbers: '" + v + "'");
  std::string rest;
  if (ss >> rest)
    throw ScenarioParseError(where + ": trailing text: '" + v + "'");
  return {a, b};
}

// Applies one key to the run config; returns false for unknown keys.
inline bool apply_run_key(RunConfig& rc, const std::string& section,
                          const std::string& key, const std::string& value,
                          const std::string& where) {
  const std::string q = section + "." + key;
  auto d = [&] { return parse_double(value, where); };
  if (q == "field.wavelength_nm") rc.wavelength_nm = d();
  else if (q == "field.lo_power_mw") rc.lo_power_mw = d();
  else if (q == "field.signal_power_pw") rc.signal_power_pw = d();
  else if (q == "field.signal_flux") rc.signal_flux = d();
  else if (q == "field.het_frequency_mhz") rc.het_frequency_mhz = d();
  else if (q == "field.relative_phase_rad") rc.relative_phase_rad = d();
  else if (q == "field.lo_linewidth_hz") rc.lo_linewidth_hz = d();
  else if (q == "path.collection_efficiency") rc.collection_efficiency = d();
  else if (q == "path.visibility_1") rc.visibility_1 = d();
  else if (q == "path.visibility_2") rc.visibility_2 = d();
  else if (q == "detector.efficiency") rc.efficiency = d();
  else if (q == "detector.pulse_kind") rc.pulse_kind = trim(value);
  else if (q == "detector.pulse_width_ns") rc.pulse_width_ns = d();
  else if (q == "detector.pulse_area_c") rc.pulse_area_c = d();
  else if (q == "detector.electronics_psd_a2hz") rc.electronics_psd_a2hz = d();
  else if (q == "detector.dark_rate_hz") rc.dark_rate_hz = d();
  else if (q == "noise.model") rc.noise_model = trim(value);
  else if (q == "sim.sample_rate_mhz") rc.sample_rate_mhz = d();
  else if (q == "sim.samples") rc.samples = parse_u64(value, where);
  else if (q == "sim.trials") rc.trials = parse_int(value, where);
  else if (q == "sim.master_seed") rc.master_seed = parse_u64(value, where);
  else if (q == "sim.mc_flux_scale") rc.mc_flux_scale = d();
  else if (q == "sim.threads") rc.threads = parse_int(value, where);
  else if (q == "sim.trace_samples_out") rc.trace_samples_out = parse_u64(value, where);
  else if (q == "spectrum.rbw_khz") rc.rbw_khz = d();
  else if (q == "spectrum.span_lo_mhz") rc.span_lo_mhz = d();
  else if (q == "spectrum.span_hi_mhz") rc.span_hi_mhz = d();
  else if (q == "spectrum.tone_guard_khz") rc.tone_guard_khz = d();
  else if (q == "spectrum.exclude_mhz")
    rc.exclude_mhz.push_back(parse_pair(value, where));
  else if (q == "spectrum.db_ref_a2") rc.db_ref_a2 = d();
  else return false;
  return true;
}

inline bool apply_fringe_key(FringeConfig& fc, const std::string& key,
                             const std::string& value,
                             const std::string& where) {
  auto d = [&] { return parse_double(value, where); };
  if (key == "visibility_1") fc.visibility_1 = d();
  else if (key == "visibility_2") fc.visibility_2 = d();
  else if (key == "mean_intensity") fc.mean_intensity = d();
  else if (key == "points") fc.points = parse_int(value, where);
  else if (key == "periods") fc.periods = d();
  else if (key == "noise_rel") fc.noise_rel = d();
  else if (key == "phase_1_rad") fc.phase_1_rad = d();
  else if (key == "phase_2_rad") fc.phase_2_rad = d();
  else return false;
  return true;
}

}  // namespace detail

inline void validate_scenario(const Scenario& s);

inline Scenario load_scenario_text(const std::string& text,
                                   const std::string& origin = "<string>") {
  Scenario s;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  bool saw_name = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ScenarioParseError(where + ": malformed section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      static const char* known[] = {"scenario", "field",     "path",
                                    "detector", "noise",     "sim",
                                    "spectrum", "variant_b", "fringe",
                                    "expect"};
      bool ok = false;
      for (const char* k : known) ok = ok || section == k;
      if (!ok)
        throw ScenarioParseError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ScenarioParseError(where + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (section.empty())
      throw ScenarioParseError(where + ": key outside any section");
    if (section == "scenario") {
      if (key == "name") {
        s.name = value;
        saw_name = !value.empty();
      } else if (key == "note") {
        s.note = value;
      } else if (key == "mode") {
        if (value == "single") s.mode = ScenarioMode::single;
        else if (value == "compare") s.mode = ScenarioMode::compare;
        else if (value == "fringe") s.mode = ScenarioMode::fringe;
        else
          throw ScenarioParseError(where + ": unknown mode '" + value +
                                   "' (single|compare|fringe)");
      } else {
        throw ScenarioParseError(where + ": unknown key scenario." + key);
      }
    } else if (section == "variant_b") {
      // validated by applying to a scratch config
      RunConfig scratch = s.base;
      const auto dot = key.find('.');
      if (dot == std::string::npos)
        throw ScenarioParseError(where +
                                 ": variant_b keys must be section.key");
      if (!detail::apply_run_key(scratch, key.substr(0, dot),
                                 key.substr(dot + 1), value, where))
        throw ScenarioParseError(where + ": unknown key " + key);
      s.variant_b.emplace_back(key, value);
    } else if (section == "fringe") {
      if (!detail::apply_fringe_key(s.fringe, key, value, where))
        throw ScenarioParseError(where + ": unknown key fringe." + key);
    } else if (section == "expect") {
      const auto [target, tol] = detail::parse_pair(value, where);
      s.expects.push_back(Expectation{key, target, tol});
    } else {
      if (!detail::apply_run_key(s.base, section, key, value, where))
        throw ScenarioParseError(where + ": unknown key " + section + "." + key);
    }
  }
  if (!saw_name)
    throw ScenarioValidationError(origin +
                                  ": missing required fields: scenario.name");
  validate_scenario(s);
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  auto s = load_scenario_text(buf.str(), path);
  return s;
}

inline const std::vector<std::string>& known_metrics(ScenarioMode mode) {
  static const std::vector<std::string> single = {
      "analytic_floor_db",   "analytic_variance_a2", "mc_floor_db",
      "mc_minus_analytic_db", "mc_flatness_db",       "mc_variance_a2",
      "mc_variance_rel_err", "variance_pull_sigma"};
  static const std::vector<std::string> compare = {
      "analytic_floor_a_db", "analytic_floor_b_db", "analytic_floor_diff_db",
      "imageband_prediction_db", "mc_floor_a_db",   "mc_floor_b_db",
      "mc_floor_diff_db"};
  static const std::vector<std::string> fringe = {
      "visibility_1", "visibility_2", "visibility_err_1", "visibility_err_2"};
  switch (mode) {
    case ScenarioMode::single: return single;
    case ScenarioMode::compare: return compare;
    case ScenarioMode::fringe: return fringe;
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// domain assembly and validation
// ---------------------------------------------------------------------------

struct AssembledRun {
  FieldSpec signal;
  FieldSpec lo;
  BeatConfig beat;
  OpticalPath path;
  DetectorPair detectors;
  NoiseModel model = NoiseModel::coherence;
  SimConfig sim;
  SpectrumConfig spectrum;
  std::vector<FrequencyInterval> exclusions;
};

inline NoiseModel parse_noise_model(const std::string& name) {
  if (name == "coherence") return NoiseModel::coherence;
  if (name == "imageband" || name == "image_band") return NoiseModel::image_band;
  if (name == "classical_noiseless") return NoiseModel::classical_noiseless;
  throw ScenarioValidationError(
      "noise.model must be coherence|imageband|classical_noiseless, got '" +
      name + "'");
}

inline PulseKind parse_pulse_kind(const std::string& name) {
  if (name == "rectangular") return PulseKind::rectangular;
  if (name == "delta") return PulseKind::delta;
  if (name == "exponential" || name == "one_sided_exponential")
    return PulseKind::one_sided_exponential;
  throw ScenarioValidationError(
      "detector.pulse_kind must be delta|rectangular|exponential, got '" +
      name + "'");
}

/// Build and validate the physical objects of one run leg. Throws
/// ScenarioValidationError naming the offending field.
inline AssembledRun assemble_run(const RunConfig& rc) {
  auto fail = [](const std::string& msg) {
    throw ScenarioValidationError(msg);
  };
  if (!(rc.wavelength_nm > 0)) fail("field.wavelength_nm must be positive");
  if (!(rc.lo_power_mw >= 0)) fail("field.lo_power_mw must be >= 0");
  if (!(rc.signal_power_pw >= 0)) fail("field.signal_power_pw must be >= 0");
  if (!(rc.signal_flux >= 0)) fail("field.signal_flux must be >= 0");
  if (!(rc.mc_flux_scale > 0)) fail("sim.mc_flux_scale must be positive");
  if (!(rc.rbw_khz > 0)) fail("rbw must be positive");
  if (!(rc.sample_rate_mhz > 0)) fail("sim.sample_rate_mhz must be positive");
  if (rc.samples == 0) fail("sim.samples must be positive");
  if (rc.trials < 0) fail("sim.trials must be >= 0");
  if (rc.threads < 1) fail("sim.threads must be >= 1");

  AssembledRun run;
  const double wavelength_m = rc.wavelength_nm * 1e-9;
  const double omega_l = optical_angular_frequency(wavelength_m);
  const double omega_het = 2.0 * std::numbers::pi * rc.het_frequency_mhz * 1e6;
  const double lo_flux =
      photon_rate_from_power(rc.lo_power_mw * 1e-3, wavelength_m) *
      rc.mc_flux_scale;
  const double sig_flux =
      rc.signal_flux > 0.0
          ? rc.signal_flux
          : photon_rate_from_power(rc.signal_power_pw * 1e-12, wavelength_m) *
                rc.mc_flux_scale;
  run.lo = FieldSpec{omega_l, std::sqrt(lo_flux), 0.0};
  run.signal = FieldSpec{omega_l + omega_het, std::sqrt(sig_flux), 0.0};
  run.beat = BeatConfig{omega_het, rc.relative_phase_rad};
  run.path = OpticalPath{rc.collection_efficiency, rc.visibility_1,
                         rc.visibility_2};
  try {
    validate(run.path);
  } catch (const std::domain_error& e) {
    fail(std::string("path: ") + e.what());
  }
  DetectorModel det;
  det.efficiency = rc.efficiency;
  det.pulse = PulseShape{parse_pulse_kind(rc.pulse_kind), rc.pulse_area_c,
                         rc.pulse_width_ns * 1e-9};
  det.electronics_psd_a2hz = rc.electronics_psd_a2hz;
  det.dark_rate_hz = rc.dark_rate_hz;
  try {
    validate(det);
  } catch (const std::domain_error& e) {
    fail(std::string("detector: ") + e.what());
  }
  run.detectors = DetectorPair{det, det};
  run.model = parse_noise_model(rc.noise_model);

  const double fs = rc.sample_rate_mhz * 1e6;
  run.sim.sample_rate_hz = fs;
  run.sim.duration_s = static_cast<double>(rc.samples) / fs;
  run.sim.master_seed = rc.master_seed;
  run.sim.trials = std::max(rc.trials, 1);
  run.sim.lo_linewidth_hz = rc.lo_linewidth_hz;
  run.sim.threads = rc.threads;

  run.spectrum.rbw_hz = rc.rbw_khz * 1e3;
  run.spectrum.span_lo_hz = rc.span_lo_mhz * 1e6;
  run.spectrum.span_hi_hz = rc.span_hi_mhz * 1e6;
  run.spectrum.averaging = std::max(rc.trials, 1);
  run.spectrum.db_ref_a2 = rc.db_ref_a2;
  try {
    validate(run.spectrum);
  } catch (const std::domain_error& e) {
    fail(std::string("spectrum: ") + e.what());
  }
  const double span_hi = run.spectrum.span_hi_hz;
  const double f_het = std::abs(omega_het) / (2.0 * std::numbers::pi);
  if (!(fs > 2.0 * (f_het + span_hi)))
    fail("sim.sample_rate_mhz violates Nyquist: need > 2 x "
         "(het_frequency + span_hi)");

  for (const auto& [lo_mhz, hi_mhz] : rc.exclude_mhz) {
    if (!(hi_mhz > lo_mhz)) fail("spectrum.exclude_mhz interval is empty");
    run.exclusions.emplace_back(lo_mhz * 1e6, hi_mhz * 1e6);
  }
  if (f_het > 0.0 && rc.tone_guard_khz > 0.0)
    run.exclusions.emplace_back(f_het - rc.tone_guard_khz * 1e3,
                                f_het + rc.tone_guard_khz * 1e3);
  return run;
}

inline void validate(const FringeConfig& fc) {
  if (fc.points < 16)
    throw ScenarioValidationError("fringe.points must be at least 16");
  if (!(fc.periods >= 1.0))
    throw ScenarioValidationError("fringe.periods must cover >= 1 fringe");
  if (!(fc.mean_intensity > 0.0))
    throw ScenarioValidationError("fringe.mean_intensity must be positive");
  if (!(fc.noise_rel >= 0.0))
    throw ScenarioValidationError("fringe.noise_rel must be >= 0");
  auto vis_ok = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!vis_ok(fc.visibility_1) || !vis_ok(fc.visibility_2))
    throw ScenarioValidationError("fringe visibility must be in [0,1]");
}

/// Whole-scenario validation: every sub-config must assemble, and every
/// expectation must reference a metric the mode can produce.
inline void validate_scenario(const Scenario& s) {
  assemble_run(s.base);
  if (s.mode == ScenarioMode::compare) {
    RunConfig rc_b = s.base;
    for (const auto& [qkey, value] : s.variant_b) {
      const auto dot = qkey.find('.');
      detail::apply_run_key(rc_b, qkey.substr(0, dot), qkey.substr(dot + 1),
                            value, "variant_b." + qkey);
    }
    assemble_run(rc_b);
  }
  if (s.mode == ScenarioMode::fringe) validate(s.fringe);
  for (const auto& e : s.expects) {
    const auto& known = known_metrics(s.mode);
    bool ok = false;
    for (const auto& name : known) ok = ok || name == e.metric;
    if (!ok)
      throw ScenarioValidationError(
          "expectation references an undefined metric for this mode: " +
          e.metric);
    if (!(e.tolerance >= 0.0))
      throw ScenarioValidationError("expectation tolerance must be >= 0 for " +
                                    e.metric);
  }
}

// ---------------------------------------------------------------------------
// serialization (canonical echo of a scenario with all defaults filled)
// ---------------------------------------------------------------------------

inline std::string serialize_scenario(const Scenario& s) {
  using detail::fmt_double;
  std::ostringstream out;
  const RunConfig& b = s.base;
  out << "[scenario]\n";
  out << "name = " << s.name << "\n";
  if (!s.note.empty()) out << "note = " << s.note << "\n";
  out << "mode = "
      << (s.mode == ScenarioMode::single
              ? "single"
              : s.mode == ScenarioMode::compare ? "compare" : "fringe")
      << "\n\n";
  out << "[field]\n";
  out << "wavelength_nm = " << fmt_double(b.wavelength_nm) << "\n";
  out << "lo_power_mw = " << fmt_double(b.lo_power_mw) << "\n";
  out << "signal_power_pw = " << fmt_double(b.signal_power_pw) << "\n";
  out << "signal_flux = " << fmt_double(b.signal_flux) << "\n";
  out << "het_frequency_mhz = " << fmt_double(b.het_frequency_mhz) << "\n";
  out << "relative_phase_rad = " << fmt_double(b.relative_phase_rad) << "\n";
  out << "lo_linewidth_hz = " << fmt_double(b.lo_linewidth_hz) << "\n\n";
  out << "[path]\n";
  out << "collection_efficiency = " << fmt_double(b.collection_efficiency)
      << "\n";
  out << "visibility_1 = " << fmt_double(b.visibility_1) << "\n";
  out << "visibility_2 = " << fmt_double(b.visibility_2) << "\n\n";
  out << "[detector]\n";
  out << "efficiency = " << fmt_double(b.efficiency) << "\n";
  out << "pulse_kind = " << b.pulse_kind << "\n";
  out << "pulse_width_ns = " << fmt_double(b.pulse_width_ns) << "\n";
  out << "pulse_area_c = " << fmt_double(b.pulse_area_c) << "\n";
  out << "electronics_psd_a2hz = " << fmt_double(b.electronics_psd_a2hz)
      << "\n";
  out << "dark_rate_hz = " << fmt_double(b.dark_rate_hz) << "\n\n";
  out << "[noise]\n";
  out << "model = " << b.noise_model << "\n\n";
  out << "[sim]\n";
  out << "sample_rate_mhz = " << fmt_double(b.sample_rate_mhz) << "\n";
  out << "samples = " << b.samples << "\n";
  out << "trials = " << b.trials << "\n";
  out << "master_seed = " << b.master_seed << "\n";
  out << "mc_flux_scale = " << fmt_double(b.mc_flux_scale) << "\n";
  out << "threads = " << b.threads << "\n";
  out << "trace_samples_out = " << b.trace_samples_out << "\n\n";
  out << "[spectrum]\n";
  out << "rbw_khz = " << fmt_double(b.rbw_khz) << "\n";
  out << "span_lo_mhz = " << fmt_double(b.span_lo_mhz) << "\n";
  out << "span_hi_mhz = " << fmt_double(b.span_hi_mhz) << "\n";
  out << "tone_guard_khz = " << fmt_double(b.tone_guard_khz) << "\n";
  for (const auto& [lo, hi] : b.exclude_mhz)
    out << "exclude_mhz = " << fmt_double(lo) << " " << fmt_double(hi) << "\n";
  out << "db_ref_a2 = " << fmt_double(b.db_ref_a2) << "\n";
  if (!s.variant_b.empty()) {
    out << "\n[variant_b]\n";
    for (const auto& [k, v] : s.variant_b) out << k << " = " << v << "\n";
  }
  if (s.mode == ScenarioMode::fringe) {
    out << "\n[fringe]\n";
    out << "visibility_1 = " << fmt_double(s.fringe.visibility_1) << "\n";
    out << "visibility_2 = " << fmt_double(s.fringe.visibility_2) << "\n";
    out << "mean_intensity = " << fmt_double(s.fringe.mean_intensity) << "\n";
    out << "points = " << s.fringe.points << "\n";
    out << "periods = " << fmt_double(s.fringe.periods) << "\n";
    out << "noise_rel = " << fmt_double(s.fringe.noise_rel) << "\n";
    out << "phase_1_rad = " << fmt_double(s.fringe.phase_1_rad) << "\n";
    out << "phase_2_rad = " << fmt_double(s.fringe.phase_2_rad) << "\n";
  }
  if (!s.expects.empty()) {
    out << "\n[expect]\n";
    for (const auto& e : s.expects)
      out << e.metric << " = " << fmt_double(e.target) << " "
          << fmt_double(e.tolerance) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// execution
// ---------------------------------------------------------------------------

struct MetricValue {
  std::string name;
  double value = 0.0;
};

struct ExpectationResult {
  Expectation expectation;
  double value = std::numeric_limits<double>::quiet_NaN();
  bool available = false;
  bool pass = false;
};

struct RunReport {
  std::string scenario;
  std::string note;
  ScenarioMode mode = ScenarioMode::single;
  std::uint64_t master_seed = 0;
  int trials = 0;
  std::vector<MetricValue> metrics;
  std::vector<ExpectationResult> expectations;
  std::vector<std::pair<std::string, std::string>> artifacts;
  std::vector<std::string> warnings;

  bool all_pass() const {
    for (const auto& e : expectations)
      if (!e.available || !e.pass) return false;
    return true;
  }
};

struct RunOptions {
  std::string out_dir;  // empty: no artifacts
  std::optional<std::uint64_t> seed_override;
  std::optional<int> trials_override;
};

namespace detail {

struct TrialSummary {
  std::vector<double> psd;
  std::vector<double> dark_psd;
  double variance = 0.0;
  double mean = 0.0;
};

struct LegResult {
  NoiseSpectrum analytic;
  std::optional<NoiseSpectrum> mc;
  double analytic_floor_db = 0.0;
  std::optional<double> mc_floor_db;
  std::optional<double> mc_flatness_db;
  double analytic_variance = 0.0;
  std::optional<double> mc_variance;
  std::optional<double> mc_variance_se;
};

// Analytic model PSD of J_- on the same grid the Welch estimator uses.
inline NoiseSpectrum analytic_spectrum(const AssembledRun& run) {
  WelchAccumulator probe(run.sim.sample_rate_hz, run.spectrum);
  const double df =
      run.sim.sample_rate_hz / static_cast<double>(probe.window_length());
  NoiseSpectrum out;
  out.rbw_hz = probe.enbw_hz();
  out.db_ref_a2 = run.spectrum.db_ref_a2;
  const bool classical = run.model == NoiseModel::classical_noiseless;
  double excess_factor = 0.0;
  if (run.model == NoiseModel::image_band && !run.beat.homodyne()) {
    const double v = run.path.mean_visibility();
    excess_factor = run.path.collection_efficiency * v * v;
  }
  const auto k_lo = static_cast<std::size_t>(
      std::ceil(run.spectrum.span_lo_hz / df - 1e-9));
  const auto k_hi = static_cast<std::size_t>(
      std::floor(run.spectrum.span_hi_hz / df + 1e-9));
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    const double f = static_cast<double>(k) * df;
    const double p = classical ? 0.0
                               : shot_psd(run.lo, run.detectors, f) *
                                     (1.0 + excess_factor);
    out.freqs_hz.push_back(f);
    out.psd_a2hz.push_back(p);
    out.power_db.push_back(to_db(p * out.rbw_hz / out.db_ref_a2));
  }
  return out;
}

// Full-model time-domain variance of J_- (shot + excess + electronics +
// deterministic beat power over whole periods).
inline double analytic_variance(const AssembledRun& run) {
  double var = run.model == NoiseModel::classical_noiseless
                   ? 0.0
                   : shot_variance(run.lo, run.detectors);
  if (run.model == NoiseModel::image_band && !run.beat.homodyne()) {
    const double v = run.path.mean_visibility();
    const double excess_psd = run.path.collection_efficiency * v * v *
                              shot_psd(run.lo, run.detectors, 0.0);
    var += excess_psd * run.sim.sample_rate_hz / 2.0;
  }
  for (const auto& d : run.detectors)
    var += d.electronics_psd_a2hz * run.sim.sample_rate_hz / 2.0;
  if (!run.beat.homodyne()) {
    // deterministic beat power; the pulse response attenuates the tone
    const double f_het =
        std::abs(run.beat.het_frequency_rad_s) / (2.0 * std::numbers::pi);
    const double amp =
        (run.detectors[0].efficiency * run.path.visibility_1 *
             std::sqrt(pulse_transfer_mag2(run.detectors[0].pulse, f_het)) +
         run.detectors[1].efficiency * run.path.visibility_2 *
             std::sqrt(pulse_transfer_mag2(run.detectors[1].pulse, f_het))) *
        run.lo.flux_amplitude * run.signal.flux_amplitude;
    var += 0.5 * amp * amp;
  }
  return var;
}

inline double flatness_db(const NoiseSpectrum& spec,
                          std::span<const FrequencyInterval> exclusions) {
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < spec.power_db.size(); ++k) {
    if (!spec.bin_valid(k)) continue;
    if (in_intervals(spec.freqs_hz[k], exclusions)) continue;
    sum += spec.power_db[k];
    sum2 += spec.power_db[k] * spec.power_db[k];
    ++n;
  }
  if (n < 2) throw std::out_of_range("flatness: not enough bins");
  const double mean = sum / static_cast<double>(n);
  const double var = sum2 / static_cast<double>(n) - mean * mean;
  return std::sqrt(std::max(var, 0.0));
}

inline LegResult run_leg(const RunConfig& rc, const AssembledRun& run,
                         std::span<const FrequencyInterval> exclusions,
                         int trials, std::uint64_t leg_seed,
                         const RunOptions& opts, const std::string& leg_label,
                         RunReport& report) {
  LegResult result;
  result.analytic = analytic_spectrum(run);
  result.analytic_floor_db = noise_floor(result.analytic, exclusions);
  result.analytic_variance = analytic_variance(run);

  if (!opts.out_dir.empty()) {
    const auto path = std::filesystem::path(opts.out_dir) /
                      (report.scenario + leg_label + "_analytic_spectrum.txt");
    write_spectrum(path.string(), result.analytic,
                   {{"scenario", report.scenario}, {"kind", "analytic"}});
    report.artifacts.emplace_back("analytic_spectrum" + leg_label,
                                  path.string());
  }
  if (trials < 1) return result;

  SimConfig sim = run.sim;
  sim.master_seed = leg_seed;
  sim.trials = trials;
  const bool dark_needed = run.detectors[0].electronics_psd_a2hz > 0.0 ||
                           run.detectors[1].electronics_psd_a2hz > 0.0;

  auto one_trial = [&](int trial) {
    auto trace = simulate_balanced(run.signal, run.lo, run.beat, run.path,
                                   run.detectors, run.model, sim,
                                   static_cast<std::uint64_t>(trial));
    TrialSummary summary;
    WelchAccumulator acc(sim.sample_rate_hz, run.spectrum);
    acc.add_trace(trace.j_minus);
    summary.psd = acc.finalize().psd_a2hz;
    const double mean = kahan_mean(trace.j_minus);
    KahanSum ss;
    for (double v : trace.j_minus) ss.add((v - mean) * (v - mean));
    summary.mean = mean;
    summary.variance =
        ss.sum / static_cast<double>(trace.j_minus.size() - 1);
    if (dark_needed) {
      // dark run: light off, electronics only
      FieldSpec dark_sig = run.signal, dark_lo = run.lo;
      dark_sig.flux_amplitude = 0.0;
      dark_lo.flux_amplitude = 0.0;
      SimConfig dark_sim = sim;
      dark_sim.master_seed = mix64(leg_seed ^ 0x6a09e667f3bcc909ULL);
      auto dark = simulate_balanced(dark_sig, dark_lo, run.beat, run.path,
                                    run.detectors, NoiseModel::coherence,
                                    dark_sim, static_cast<std::uint64_t>(trial));
      WelchAccumulator dacc(sim.sample_rate_hz, run.spectrum);
      dacc.add_trace(dark.j_minus);
      summary.dark_psd = dacc.finalize().psd_a2hz;
    }
    if (trial == 0 && !opts.out_dir.empty() && rc.trace_samples_out > 0) {
      const auto path = std::filesystem::path(opts.out_dir) /
                        (report.scenario + leg_label + "_trace.txt");
      write_trace(path.string(), trace,
                  {{"scenario", report.scenario},
                   {"noise_model", rc.noise_model},
                   {"het_frequency_mhz", fmt_double(rc.het_frequency_mhz)},
                   {"lo_power_mw", fmt_double(rc.lo_power_mw)},
                   {"mc_flux_scale", fmt_double(rc.mc_flux_scale)}},
                  rc.trace_samples_out);
      return std::make_pair(summary, path.string());
    }
    return std::make_pair(summary, std::string());
  };

  auto summaries = parallel_map_trials(trials, sim.threads, one_trial);
  for (auto& [summary, artifact] : summaries)
    if (!artifact.empty())
      report.artifacts.emplace_back("trace" + leg_label, artifact);

  // order-fixed reduction by trial index
  NoiseSpectrum avg = result.analytic;  // reuse the grid
  std::fill(avg.psd_a2hz.begin(), avg.psd_a2hz.end(), 0.0);
  std::vector<double> dark_avg(avg.psd_a2hz.size(), 0.0);
  double var_sum = 0.0, var_sum2 = 0.0;
  for (const auto& [summary, artifact] : summaries) {
    for (std::size_t k = 0; k < avg.psd_a2hz.size(); ++k)
      avg.psd_a2hz[k] += summary.psd[k];
    if (!summary.dark_psd.empty())
      for (std::size_t k = 0; k < dark_avg.size(); ++k)
        dark_avg[k] += summary.dark_psd[k];
    var_sum += summary.variance;
    var_sum2 += summary.variance * summary.variance;
  }
  const double nt = static_cast<double>(trials);
  for (double& p : avg.psd_a2hz) p /= nt;
  avg.rbw_hz = result.analytic.rbw_hz;
  for (std::size_t k = 0; k < avg.psd_a2hz.size(); ++k)
    avg.power_db[k] = to_db(avg.psd_a2hz[k] * avg.rbw_hz / avg.db_ref_a2);

  if (dark_needed) {
    NoiseSpectrum dark = avg;
    for (std::size_t k = 0; k < dark_avg.size(); ++k) {
      dark.psd_a2hz[k] = dark_avg[k] / nt;
      dark.power_db[k] =
          to_db(dark.psd_a2hz[k] * dark.rbw_hz / dark.db_ref_a2);
    }
    avg = subtract_electronics(avg, dark);
  }

  result.mc = avg;
  result.mc_floor_db = noise_floor(avg, exclusions);
  result.mc_flatness_db = flatness_db(avg, exclusions);
  result.mc_variance = var_sum / nt;
  if (trials > 1) {
    const double var_of_var =
        std::max(0.0, var_sum2 / nt - (var_sum / nt) * (var_sum / nt));
    result.mc_variance_se = std::sqrt(var_of_var / (nt - 1.0));
  }

  if (!opts.out_dir.empty()) {
    const auto path = std::filesystem::path(opts.out_dir) /
                      (report.scenario + leg_label + "_mc_spectrum.txt");
    write_spectrum(path.string(), avg,
                   {{"scenario", report.scenario},
                    {"kind", "monte-carlo"},
                    {"trials", std::to_string(trials)},
                    {"master_seed", std::to_string(leg_seed)}});
    report.artifacts.emplace_back("mc_spectrum" + leg_label, path.string());
  }
  return result;
}

inline void add_metric(RunReport& r, const std::string& name, double value) {
  r.metrics.push_back(MetricValue{name, value});
}

}  // namespace detail

/// Synthetic interference scan with per-detector visibility and relative
/// additive noise; the generate side of the generate-and-recover check.
inline FringeScan generate_fringe_scan(const FringeConfig& fc,
                                       std::uint64_t seed) {
  validate(fc);
  FringeScan scan;
  scan.axis.resize(static_cast<std::size_t>(fc.points));
  const double span = 2.0 * std::numbers::pi * fc.periods;
  for (int k = 0; k < fc.points; ++k)
    scan.axis[static_cast<std::size_t>(k)] =
        span * static_cast<double>(k) / static_cast<double>(fc.points);
  auto rng = make_engine(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double vis[2] = {fc.visibility_1, fc.visibility_2};
  const double ph[2] = {fc.phase_1_rad, fc.phase_2_rad};
  for (int d = 0; d < 2; ++d) {
    std::vector<double> rec(scan.axis.size());
    for (std::size_t k = 0; k < scan.axis.size(); ++k) {
      const double clean =
          fc.mean_intensity * (1.0 + vis[d] * std::sin(scan.axis[k] + ph[d]));
      rec[k] = clean + fc.noise_rel * fc.mean_intensity * gauss(rng);
    }
    scan.intensity.push_back(std::move(rec));
  }
  return scan;
}

inline RunReport run_scenario(const Scenario& s, const RunOptions& opts = {}) {
  RunReport report;
  report.scenario = s.name;
  report.note = s.note;
  report.mode = s.mode;

  RunConfig base = s.base;
  if (opts.seed_override) base.master_seed = *opts.seed_override;
  const int trials = opts.trials_override.value_or(base.trials);
  report.master_seed = base.master_seed;
  report.trials = trials;

  if (!opts.out_dir.empty())
    std::filesystem::create_directories(opts.out_dir);

  if (s.mode == ScenarioMode::fringe) {
    const auto scan = generate_fringe_scan(
        s.fringe, trial_seed(base.master_seed, 0, RngChannel::fringe));
    if (!opts.out_dir.empty()) {
      const auto path =
          std::filesystem::path(opts.out_dir) / (s.name + "_fringe_scan.txt");
      write_fringe_scan(path.string(), scan,
                        {{"scenario", s.name},
                         {"master_seed", std::to_string(base.master_seed)}});
      report.artifacts.emplace_back("fringe_scan", path.string());
    }
    const auto vis = fringe_visibility(scan);
    detail::add_metric(report, "visibility_1", vis[0]);
    detail::add_metric(report, "visibility_2", vis[1]);
    detail::add_metric(report, "visibility_err_1",
                       vis[0] - s.fringe.visibility_1);
    detail::add_metric(report, "visibility_err_2",
                       vis[1] - s.fringe.visibility_2);
  } else if (s.mode == ScenarioMode::single) {
    const auto run = assemble_run(base);
    if (!strong_lo_ok(run.signal, run.lo))
      report.warnings.push_back(
          "strong-LO approximation is weak: oscillator/signal flux ratio "
          "below 100");
    auto leg = detail::run_leg(base, run, run.exclusions, trials,
                               leg_master(base.master_seed, 0), opts, "",
                               report);
    detail::add_metric(report, "analytic_floor_db", leg.analytic_floor_db);
    detail::add_metric(report, "analytic_variance_a2", leg.analytic_variance);
    if (leg.mc) {
      detail::add_metric(report, "mc_floor_db", *leg.mc_floor_db);
      detail::add_metric(report, "mc_minus_analytic_db",
                         *leg.mc_floor_db - leg.analytic_floor_db);
      detail::add_metric(report, "mc_flatness_db", *leg.mc_flatness_db);
      detail::add_metric(report, "mc_variance_a2", *leg.mc_variance);
      detail::add_metric(
          report, "mc_variance_rel_err",
          (*leg.mc_variance - leg.analytic_variance) / leg.analytic_variance);
      if (leg.mc_variance_se)
        detail::add_metric(report, "variance_pull_sigma",
                           (*leg.mc_variance - leg.analytic_variance) /
                               *leg.mc_variance_se);
    }
  } else {  // compare
    RunConfig rc_b = base;
    for (const auto& [qkey, value] : s.variant_b) {
      const auto dot = qkey.find('.');
      detail::apply_run_key(rc_b, qkey.substr(0, dot), qkey.substr(dot + 1),
                            value, "variant_b." + qkey);
    }
    const auto run_a = assemble_run(base);
    const auto run_b = assemble_run(rc_b);
    if (!strong_lo_ok(run_a.signal, run_a.lo) ||
        !strong_lo_ok(run_b.signal, run_b.lo))
      report.warnings.push_back(
          "strong-LO approximation is weak: oscillator/signal flux ratio "
          "below 100");
    // both floors are read over the identical band: the union of the two
    // legs' exclusions, so the comparison never mixes bin sets
    std::vector<FrequencyInterval> shared = run_a.exclusions;
    shared.insert(shared.end(), run_b.exclusions.begin(),
                  run_b.exclusions.end());
    auto leg_a = detail::run_leg(base, run_a, shared, trials,
                                 leg_master(base.master_seed, 0), opts, "_a",
                                 report);
    auto leg_b = detail::run_leg(rc_b, run_b, shared, trials,
                                 leg_master(base.master_seed, 1), opts, "_b",
                                 report);
    detail::add_metric(report, "analytic_floor_a_db", leg_a.analytic_floor_db);
    detail::add_metric(report, "analytic_floor_b_db", leg_b.analytic_floor_db);
    detail::add_metric(report, "analytic_floor_diff_db",
                       leg_b.analytic_floor_db - leg_a.analytic_floor_db);
    if (run_a.model == NoiseModel::image_band ||
        run_b.model == NoiseModel::image_band) {
      const double pred_b = run_b.beat.homodyne()
                                ? 0.0
                                : floor_difference_db(run_b.model, run_b.path);
      const double pred_a = run_a.beat.homodyne()
                                ? 0.0
                                : floor_difference_db(run_a.model, run_a.path);
      detail::add_metric(report, "imageband_prediction_db", pred_b - pred_a);
    }
    if (leg_a.mc && leg_b.mc) {
      detail::add_metric(report, "mc_floor_a_db", *leg_a.mc_floor_db);
      detail::add_metric(report, "mc_floor_b_db", *leg_b.mc_floor_db);
      detail::add_metric(report, "mc_floor_diff_db",
                         *leg_b.mc_floor_db - *leg_a.mc_floor_db);
    }
  }

  for (const auto& e : s.expects) {
    ExpectationResult res;
    res.expectation = e;
    for (const auto& m : report.metrics) {
      if (m.name == e.metric) {
        res.value = m.value;
        res.available = true;
        res.pass = std::abs(m.value - e.target) <= e.tolerance;
        break;
      }
    }
    report.expectations.push_back(res);
  }
  return report;
}

// ---------------------------------------------------------------------------
// report emission
// ---------------------------------------------------------------------------

enum class ReportFormat { text, columnar };

inline std::string emit_report(const RunReport& r, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::text) {
    out << "scenario: " << r.scenario << "\n";
    if (!r.note.empty()) out << "note: " << r.note << "\n";
    out << "master_seed: " << r.master_seed << "\n";
    out << "trials: " << r.trials << "\n";
    for (const auto& w : r.warnings) out << "warning: " << w << "\n";
    for (const auto& m : r.metrics)
      out << "metric " << m.name << " = " << detail::fmt_double(m.value)
          << "\n";
    for (const auto& [label, path] : r.artifacts)
      out << "artifact " << label << ": " << path << "\n";
    std::size_t passed = 0;
    for (const auto& e : r.expectations) {
      const char* status =
          !e.available ? "MISSING" : (e.pass ? "PASS" : "FAIL");
      if (e.available && e.pass) ++passed;
      out << status << " " << e.expectation.metric << " = "
          << (e.available ? detail::fmt_double(e.value) : "n/a") << " (target "
          << detail::fmt_double(e.expectation.target) << " +- "
          << detail::fmt_double(e.expectation.tolerance) << ")\n";
    }
    out << "result: " << (r.all_pass() ? "PASS" : "FAIL") << " (" << passed
        << "/" << r.expectations.size() << " expectations)\n";
  } else {
    out << "# hetsim-report\n";
    out << "scenario " << r.scenario << "\n";
    out << "seed " << r.master_seed << "\n";
    out << "trials " << r.trials << "\n";
    for (const auto& m : r.metrics)
      out << "metric " << m.name << " " << detail::fmt_double(m.value) << "\n";
    for (const auto& e : r.expectations)
      out << "expect " << e.expectation.metric << " "
          << (e.available ? detail::fmt_double(e.value) : "nan") << " "
          << detail::fmt_double(e.expectation.target) << " "
          << detail::fmt_double(e.expectation.tolerance) << " "
          << (!e.available ? "MISSING" : (e.pass ? "PASS" : "FAIL")) << "\n";
    for (const auto& [label, path] : r.artifacts)
      out << "artifact " << label << " " << path << "\n";
    out << "result " << (r.all_pass() ? "PASS" : "FAIL") << "\n";
  }
  return out.str();
}

/// Minimal parse of the columnar report form (round-trip checks, CI).
struct ParsedReport {
  std::string scenario;
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<MetricValue> metrics;
  bool pass = false;
};

inline ParsedReport parse_columnar_report(const std::string& text) {
  ParsedReport out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "scenario") ss >> out.scenario;
    else if (tag == "seed") ss >> out.seed;
    else if (tag == "trials") ss >> out.trials;
    else if (tag == "metric") {
      MetricValue m;
      ss >> m.name >> m.value;
      out.metrics.push_back(m);
    } else if (tag == "result") {
      std::string v;
      ss >> v;
      out.pass = v == "PASS";
    }
  }
  return out;
}

inline RunStatus report_status(const RunReport& r) {
  return r.all_pass() ? RunStatus::ok : RunStatus::expectation_failed;
}

}  // namespace hetsim
