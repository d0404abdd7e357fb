// hetsim: balanced optical homodyne/heterodyne quantum-noise workbench.
//
// Subcommands: analytic, simulate, spectrum, fringe, scenario {run,list,dump}.
// Exit codes: 0 ok / all expectations pass, 1 expectation failure,
// 2 parse error, 3 validation error, 4 runtime error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "hetsim/hetsim.hpp"

namespace {

int to_exit(hetsim::RunStatus s) { return static_cast<int>(s); }

std::string resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("HETSIM_OUT_DIR"); env && *env)
    return env;
  return "out";
}

void print_report(const hetsim::RunReport& report, const std::string& format,
                  const std::string& out_dir) {
  const auto fmt = format == "columnar" ? hetsim::ReportFormat::columnar
                                        : hetsim::ReportFormat::text;
  const std::string body = hetsim::emit_report(report, fmt);
  std::cout << body;
  if (!out_dir.empty()) {
    const auto path =
        std::filesystem::path(out_dir) /
        (report.scenario + (fmt == hetsim::ReportFormat::columnar
                                ? "_report.cols"
                                : "_report.txt"));
    std::ofstream out(path);
    out << body;
  }
}

struct AnalyticArgs {
  double lo_power_mw = 4.0;
  double wavelength_nm = 1064.0;
  double het_mhz = 0.0;
  double collection = 0.70;
  double vis1 = 0.98;
  double vis2 = 0.99;
  double efficiency = 1.0;
  double pulse_width_ns = 10.0;
  double pulse_area_c = hetsim::constants::electron_charge_c;
  std::string pulse_kind = "rectangular";
  double at_mhz = 3.0;
};

int run_analytic(const AnalyticArgs& a) {
  using namespace hetsim;
  const double wavelength_m = a.wavelength_nm * 1e-9;
  const auto lo = field_from_power(a.lo_power_mw * 1e-3, wavelength_m);
  DetectorModel det;
  det.efficiency = a.efficiency;
  det.pulse = PulseShape{parse_pulse_kind(a.pulse_kind), a.pulse_area_c,
                         a.pulse_width_ns * 1e-9};
  const DetectorPair dets{det, det};
  const OpticalPath path{a.collection, a.vis1, a.vis2};

  std::cout << "lo_flux_per_s = " << lo.flux() << "\n";
  std::cout << "shot_psd_a2hz(at " << a.at_mhz << " MHz) = "
            << shot_psd(lo, dets, a.at_mhz * 1e6) << "\n";
  if (det.pulse.kind != PulseKind::delta)
    std::cout << "shot_variance_a2 = " << shot_variance(lo, dets) << "\n";
  std::cout << "floor_difference_db(coherence) = "
            << floor_difference_db(NoiseModel::coherence, path) << "\n";
  std::cout << "floor_difference_db(imageband) = "
            << floor_difference_db(NoiseModel::image_band, path) << "\n";
  std::cout << "floor_difference_db(imageband, ideal path) = "
            << floor_difference_db(NoiseModel::image_band,
                                   OpticalPath{1.0, 1.0, 1.0})
            << "\n";
  const double het = 2.0 * std::numbers::pi * a.het_mhz * 1e6;
  std::cout << "mode = " << (het == 0.0 ? "homodyne" : "heterodyne") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "balanced optical homodyne/heterodyne quantum-noise simulator"};
  app.require_subcommand(1);

  // shared flags
  std::string out_dir_flag;
  std::string format = "text";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int trials = -1;

  // --- analytic -------------------------------------------------------
  AnalyticArgs an;
  auto* analytic = app.add_subcommand(
      "analytic", "closed-form noise metrics for a detection setup");
  analytic->add_option("--lo-power-mw", an.lo_power_mw, "oscillator power");
  analytic->add_option("--wavelength-nm", an.wavelength_nm, "wavelength");
  analytic->add_option("--het-mhz", an.het_mhz, "beat frequency, 0 = homodyne");
  analytic->add_option("--collection", an.collection, "collection efficiency");
  analytic->add_option("--visibility-1", an.vis1, "detector 1 visibility");
  analytic->add_option("--visibility-2", an.vis2, "detector 2 visibility");
  analytic->add_option("--efficiency", an.efficiency, "detector efficiency");
  analytic->add_option("--pulse-kind", an.pulse_kind,
                       "delta|rectangular|exponential");
  analytic->add_option("--pulse-width-ns", an.pulse_width_ns, "pulse width");
  analytic->add_option("--pulse-area-c", an.pulse_area_c, "pulse area");
  analytic->add_option("--at-mhz", an.at_mhz, "PSD evaluation frequency");

  // --- simulate -------------------------------------------------------
  std::string sim_scenario;
  std::uint64_t sim_trial = 0;
  bool full_trace = false;
  auto* simulate = app.add_subcommand(
      "simulate", "generate one photocurrent trace from a scenario");
  simulate->add_option("scenario", sim_scenario, "scenario file or bundled name")
      ->required();
  simulate->add_option("--trial", sim_trial, "trial index to generate");
  simulate->add_flag("--full", full_trace,
                     "write the full trace, not the preview length");
  simulate->add_option("--seed", seed, "master seed override")
      ->each([&](const std::string&) { seed_set = true; });
  simulate->add_option("--out-dir", out_dir_flag, "artifact directory");

  // --- spectrum -------------------------------------------------------
  std::string trace_path;
  double rbw_khz = 3.0, span_lo_mhz = 1.0, span_hi_mhz = 5.0;
  std::vector<std::string> excl;
  auto* spectrum = app.add_subcommand(
      "spectrum", "estimate the PSD of a stored trace file");
  spectrum->add_option("trace", trace_path, "trace file")->required();
  spectrum->add_option("--rbw-khz", rbw_khz, "resolution bandwidth");
  spectrum->add_option("--span-lo-mhz", span_lo_mhz, "span lower edge");
  spectrum->add_option("--span-hi-mhz", span_hi_mhz, "span upper edge");
  spectrum->add_option("--exclude-mhz", excl,
                       "lo:hi interval excluded from the floor (repeatable)");
  spectrum->add_option("--out-dir", out_dir_flag, "artifact directory");

  // --- fringe ---------------------------------------------------------
  std::string scan_path;
  auto* fringe = app.add_subcommand(
      "fringe", "fit per-detector fringe visibility from a scan file");
  fringe->add_option("scan", scan_path, "fringe scan file")->required();

  // --- scenario -------------------------------------------------------
  auto* scenario = app.add_subcommand("scenario", "scenario operations");
  scenario->require_subcommand(1);
  std::string scn_arg;
  auto* scn_run = scenario->add_subcommand("run", "run a scenario");
  scn_run->add_option("scenario", scn_arg, "scenario file or bundled name")
      ->required();
  scn_run->add_option("--seed", seed, "master seed override")
      ->each([&](const std::string&) { seed_set = true; });
  scn_run->add_option("--trials", trials, "trial count override (0 = analytic only)");
  scn_run->add_option("--out-dir", out_dir_flag, "artifact directory");
  scn_run->add_option("--format", format, "report format: text|columnar")
      ->check(CLI::IsMember({"text", "columnar"}));
  auto* scn_list = scenario->add_subcommand("list", "list bundled scenarios");
  std::string dump_name;
  auto* scn_dump =
      scenario->add_subcommand("dump", "print a bundled scenario file");
  scn_dump->add_option("scenario", dump_name, "bundled name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return to_exit(hetsim::RunStatus::parse_error);
  }

  try {
    if (*analytic) return run_analytic(an);

    if (*simulate) {
      auto s = hetsim::resolve_scenario(sim_scenario);
      if (seed_set) s.base.master_seed = seed;
      const auto run = hetsim::assemble_run(s.base);
      if (!hetsim::strong_lo_ok(run.signal, run.lo))
        std::cerr << "warning: strong-LO approximation is weak "
                     "(oscillator/signal flux ratio below 100)\n";
      // same stream derivation as leg A of `scenario run`, so trial k here
      // reproduces the scenario's trace artifact
      auto sim = run.sim;
      sim.master_seed = hetsim::leg_master(s.base.master_seed, 0);
      auto trace = hetsim::simulate_balanced(run.signal, run.lo, run.beat,
                                             run.path, run.detectors,
                                             run.model, sim, sim_trial);
      const auto dir = resolve_out_dir(out_dir_flag);
      std::filesystem::create_directories(dir);
      const auto path = std::filesystem::path(dir) /
                        (s.name + "_trace_trial" +
                         std::to_string(sim_trial) + ".txt");
      hetsim::write_trace(path.string(), trace,
                          {{"scenario", s.name},
                           {"noise_model", s.base.noise_model},
                           {"het_frequency_mhz",
                            std::to_string(s.base.het_frequency_mhz)}},
                          full_trace ? 0 : s.base.trace_samples_out);
      std::cout << "trace: " << path.string() << "\n";
      return 0;
    }

    if (*spectrum) {
      const auto trace = hetsim::read_trace(trace_path);
      hetsim::SpectrumConfig cfg;
      cfg.rbw_hz = rbw_khz * 1e3;
      cfg.span_lo_hz = span_lo_mhz * 1e6;
      cfg.span_hi_hz = span_hi_mhz * 1e6;
      const auto psd =
          hetsim::estimate_psd(trace.j_minus, trace.sample_rate_hz, cfg);
      std::vector<hetsim::FrequencyInterval> exclusions;
      for (const auto& e : excl) {
        const auto colon = e.find(':');
        if (colon == std::string::npos)
          throw hetsim::ScenarioParseError(
              "--exclude-mhz expects lo:hi, got '" + e + "'");
        exclusions.emplace_back(std::stod(e.substr(0, colon)) * 1e6,
                                std::stod(e.substr(colon + 1)) * 1e6);
      }
      const auto dir = resolve_out_dir(out_dir_flag);
      std::filesystem::create_directories(dir);
      const auto out_path =
          std::filesystem::path(dir) /
          (std::filesystem::path(trace_path).stem().string() + "_spectrum.txt");
      hetsim::write_spectrum(out_path.string(), psd, {{"source", trace_path}});
      std::cout << "spectrum: " << out_path.string() << "\n";
      std::cout << "noise_floor_db = " << hetsim::noise_floor(psd, exclusions)
                << "\n";
      return 0;
    }

    if (*fringe) {
      const auto scan = hetsim::read_fringe_scan(scan_path);
      const auto vis = hetsim::fringe_visibility(scan);
      for (std::size_t d = 0; d < vis.size(); ++d)
        std::cout << "visibility_" << d + 1 << " = " << vis[d] << "\n";
      return 0;
    }

    if (*scn_list) {
      for (const auto& b : hetsim::bundled_scenarios())
        std::cout << b.name << " - " << b.description << "\n";
      return 0;
    }

    if (*scn_dump) {
      const auto* b = hetsim::find_bundled_scenario(dump_name);
      if (!b)
        throw hetsim::ScenarioParseError("no bundled scenario named " +
                                         dump_name);
      std::cout << b->text;
      return 0;
    }

    if (*scn_run) {
      auto s = hetsim::resolve_scenario(scn_arg);
      hetsim::RunOptions opts;
      opts.out_dir = resolve_out_dir(out_dir_flag);
      if (seed_set) opts.seed_override = seed;
      if (trials >= 0) opts.trials_override = trials;
      const auto report = hetsim::run_scenario(s, opts);
      for (const auto& w : report.warnings)
        std::cerr << "warning: " << w << "\n";
      print_report(report, format, opts.out_dir);
      return to_exit(hetsim::report_status(report));
    }
  } catch (const hetsim::ScenarioParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return to_exit(hetsim::RunStatus::parse_error);
  } catch (const hetsim::ScenarioValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return to_exit(hetsim::RunStatus::validation_error);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return to_exit(hetsim::RunStatus::runtime_error);
  }
  return 0;
}
