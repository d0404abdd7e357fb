#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hetsim/bundled_scenarios.hpp"
#include "hetsim/scenario.hpp"

using namespace hetsim;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace {

// small-budget single run that still clears the Welch minimum
const char* kSmallSingle = R"(
[scenario]
name = small_single
mode = single

[field]
lo_power_mw = 4
signal_power_pw = 20
het_frequency_mhz = 0

[sim]
samples = 65536
trials = 4
master_seed = 123
threads = 1

[spectrum]
rbw_khz = 20
span_lo_mhz = 1
span_hi_mhz = 5

[expect]
mc_minus_analytic_db = 0 0.5
variance_pull_sigma = 0 5
)";

const char* kSmallCompare = R"(
[scenario]
name = small_compare
mode = compare

[field]
lo_power_mw = 4
signal_flux = 1e5

[sim]
samples = 65536
trials = 4
master_seed = 321

[spectrum]
rbw_khz = 20

[variant_b]
field.het_frequency_mhz = 3

[expect]
analytic_floor_diff_db = 0 1e-9
mc_floor_diff_db = 0 1.0
)";

}  // namespace

TEST_CASE("scenario parse errors") {
  SECTION("empty file lists the required field") {
    CHECK_THROWS_WITH(load_scenario_text("", "empty"),
                      ContainsSubstring("scenario.name"));
  }

  SECTION("unknown key carries the line number") {
    const char* text = "[scenario]\nname = x\n[field]\nbogus_key = 1\n";
    CHECK_THROWS_WITH(load_scenario_text(text, "t"),
                      ContainsSubstring("t:4"));
  }

  SECTION("malformed number carries the line number") {
    const char* text = "[scenario]\nname = x\n[field]\nlo_power_mw = four\n";
    CHECK_THROWS_WITH(load_scenario_text(text, "t"),
                      ContainsSubstring("not a number"));
  }

  SECTION("keys outside any section are rejected") {
    CHECK_THROWS_WITH(load_scenario_text("name = x\n", "t"),
                      ContainsSubstring("outside any section"));
  }

  SECTION("unknown mode and unknown section") {
    CHECK_THROWS_AS(
        load_scenario_text("[scenario]\nname = x\nmode = sideways\n", "t"),
        ScenarioParseError);
    CHECK_THROWS_AS(load_scenario_text("[scenario]\nname = x\n[junk]\n", "t"),
                    ScenarioParseError);
  }
}

TEST_CASE("invalid configs are rejected at load time") {
  SECTION("rbw must be positive") {
    const char* text =
        "[scenario]\nname = x\n[spectrum]\nrbw_khz = 0\n";
    CHECK_THROWS_WITH(load_scenario_text(text, "t"),
                      ContainsSubstring("rbw must be positive"));
  }

  SECTION("expectations must reference metrics the mode can produce") {
    const char* text =
        "[scenario]\nname = x\nmode = single\n[expect]\n"
        "mc_floor_diff_db = 0 0.1\n";
    CHECK_THROWS_WITH(load_scenario_text(text, "t"),
                      ContainsSubstring("undefined metric"));
  }

  SECTION("variant overrides are validated as a whole config") {
    const char* text =
        "[scenario]\nname = x\nmode = compare\n[variant_b]\n"
        "field.het_frequency_mhz = 60\n";
    CHECK_THROWS_WITH(load_scenario_text(text, "t"),
                      ContainsSubstring("Nyquist"));
  }
}

TEST_CASE("scenario validation names the field") {
  auto base = load_scenario_text("[scenario]\nname = v\n", "t");

  SECTION("rbw must be positive") {
    auto s = base;
    s.base.rbw_khz = 0.0;
    CHECK_THROWS_WITH(assemble_run(s.base),
                      ContainsSubstring("rbw must be positive"));
  }

  SECTION("Nyquist guard") {
    auto s = base;
    s.base.het_frequency_mhz = 60.0;  // fs = 100 MHz cannot hold 60 + 5 MHz
    CHECK_THROWS_WITH(assemble_run(s.base), ContainsSubstring("Nyquist"));
  }

  SECTION("noise model and pulse kind names") {
    auto s = base;
    s.base.noise_model = "telepathy";
    CHECK_THROWS_AS(assemble_run(s.base), ScenarioValidationError);
    s = base;
    s.base.pulse_kind = "sawtooth";
    CHECK_THROWS_AS(assemble_run(s.base), ScenarioValidationError);
  }

  SECTION("visibility range") {
    auto s = base;
    s.base.visibility_1 = 1.5;
    CHECK_THROWS_AS(assemble_run(s.base), ScenarioValidationError);
  }
}

TEST_CASE("bundled scenarios load, validate, and round-trip") {
  REQUIRE(!bundled_scenarios().empty());
  for (const auto& b : bundled_scenarios()) {
    INFO(b.name);
    const auto s = load_scenario_text(b.text, b.name);
    CHECK(s.name == b.name);
    if (s.mode != ScenarioMode::fringe) CHECK_NOTHROW(assemble_run(s.base));
    CHECK(!s.expects.empty());

    // load -> serialize -> load -> serialize is a fixed point
    const auto echoed = serialize_scenario(s);
    const auto reloaded = load_scenario_text(echoed, b.name + "#echo");
    CHECK(serialize_scenario(reloaded) == echoed);
    CHECK(reloaded.name == s.name);
    CHECK(reloaded.base.master_seed == s.base.master_seed);
    CHECK(reloaded.base.lo_power_mw == s.base.lo_power_mw);
    CHECK(reloaded.expects.size() == s.expects.size());
  }
}

TEST_CASE("bundled 4 mW homodyne floor scenario carries the bench numbers") {
  const auto s = load_scenario_text(
      find_bundled_scenario("floors_homodyne_4mw")->text, "b");
  const auto run = assemble_run(s.base);
  CHECK(run.beat.homodyne());
  CHECK(run.model == NoiseModel::coherence);
  // oscillator flux = photon rate of 4 mW at 1064 nm, times the MC scale
  CHECK_THAT(run.lo.flux(),
             WithinRel(photon_rate_from_power(4e-3, 1064e-9) *
                           s.base.mc_flux_scale,
                       1e-12));
  const auto het = load_scenario_text(
      find_bundled_scenario("floors_heterodyne_4mw")->text, "b");
  const auto hrun = assemble_run(het.base);
  CHECK_THAT(hrun.beat.het_frequency_rad_s,
             WithinRel(2.0 * std::numbers::pi * 3e6, 1e-12));
}

TEST_CASE("analytic-only run: trials override 0 skips Monte Carlo") {
  const auto s = load_scenario_text(kSmallCompare, "small_compare");
  RunOptions opts;
  opts.trials_override = 0;
  const auto report = run_scenario(s, opts);

  double analytic_diff = std::numeric_limits<double>::quiet_NaN();
  bool has_mc = false;
  for (const auto& m : report.metrics) {
    if (m.name == "analytic_floor_diff_db") analytic_diff = m.value;
    if (m.name == "mc_floor_diff_db") has_mc = true;
  }
  CHECK(analytic_diff == 0.0);
  CHECK_FALSE(has_mc);

  // the mc expectation is reported as missing and fails the run
  CHECK_FALSE(report.all_pass());
  CHECK(report_status(report) == RunStatus::expectation_failed);
  const auto text = emit_report(report, ReportFormat::text);
  CHECK_THAT(text, ContainsSubstring("MISSING"));
}

TEST_CASE("small Monte Carlo single run passes its expectations") {
  const auto s = load_scenario_text(kSmallSingle, "small_single");
  const auto report = run_scenario(s);
  INFO(emit_report(report, ReportFormat::text));
  CHECK(report.all_pass());
  CHECK(report_status(report) == RunStatus::ok);

  const auto text = emit_report(report, ReportFormat::text);
  CHECK_THAT(text, ContainsSubstring("PASS"));
  CHECK_THAT(text, ContainsSubstring("master_seed: 123"));
}

TEST_CASE("columnar report round-trips metric values exactly") {
  const auto s = load_scenario_text(kSmallSingle, "small_single");
  const auto report = run_scenario(s);
  const auto cols = emit_report(report, ReportFormat::columnar);
  const auto parsed = parse_columnar_report(cols);
  CHECK(parsed.scenario == report.scenario);
  CHECK(parsed.seed == report.master_seed);
  CHECK(parsed.trials == report.trials);
  REQUIRE(parsed.metrics.size() == report.metrics.size());
  for (std::size_t k = 0; k < parsed.metrics.size(); ++k) {
    CHECK(parsed.metrics[k].name == report.metrics[k].name);
    CHECK(parsed.metrics[k].value == report.metrics[k].value);
  }
  CHECK(parsed.pass == report.all_pass());
}

TEST_CASE("reports are reproducible from the recorded seed") {
  const auto s = load_scenario_text(kSmallSingle, "small_single");
  const auto a = run_scenario(s);
  const auto b = run_scenario(s);
  CHECK(emit_report(a, ReportFormat::columnar) ==
        emit_report(b, ReportFormat::columnar));

  RunOptions other;
  other.seed_override = 999;
  const auto c = run_scenario(s, other);
  CHECK(emit_report(a, ReportFormat::columnar) !=
        emit_report(c, ReportFormat::columnar));

  // rerunning with the seed recorded in the report reproduces it
  RunOptions replay;
  replay.seed_override = c.master_seed;
  const auto d = run_scenario(s, replay);
  CHECK(emit_report(c, ReportFormat::columnar) ==
        emit_report(d, ReportFormat::columnar));
}

TEST_CASE("fringe scenario recovers the configured visibilities") {
  const auto s = load_scenario_text(
      find_bundled_scenario("fringe_visibility")->text, "b");
  const auto report = run_scenario(s);
  INFO(emit_report(report, ReportFormat::text));
  CHECK(report.all_pass());
}

TEST_CASE("expectations referencing unknown metrics are reported missing") {
  auto s = load_scenario_text(kSmallSingle, "small_single");
  s.expects.push_back(Expectation{"no_such_metric", 0.0, 1.0});
  const auto report = run_scenario(s);
  CHECK_FALSE(report.all_pass());
  bool found = false;
  for (const auto& e : report.expectations)
    if (e.expectation.metric == "no_such_metric") {
      found = true;
      CHECK_FALSE(e.available);
    }
  CHECK(found);
}

TEST_CASE("weak oscillator emits the strong-LO warning") {
  auto s = load_scenario_text(kSmallSingle, "small_single");
  s.base.signal_flux = 1e12;  // comparable to the scaled oscillator
  s.base.trials = 0;
  const auto report = run_scenario(s);
  REQUIRE(!report.warnings.empty());
  CHECK_THAT(report.warnings.front(), ContainsSubstring("strong-LO"));
}

TEST_CASE("scenario artifacts land in the output directory") {
  const auto dir =
      std::filesystem::temp_directory_path() / "hetsim_scenario_test";
  std::filesystem::remove_all(dir);
  auto s = load_scenario_text(kSmallSingle, "small_single");
  s.base.trace_samples_out = 1024;
  RunOptions opts;
  opts.out_dir = dir.string();
  const auto report = run_scenario(s, opts);
  REQUIRE(!report.artifacts.empty());
  for (const auto& [label, path] : report.artifacts) {
    INFO(label << " -> " << path);
    CHECK(std::filesystem::exists(path));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("resolve_scenario prefers files and falls back to bundled names") {
  CHECK_NOTHROW(resolve_scenario("het_vs_hom_coherence"));
  CHECK_THROWS_AS(resolve_scenario("no_such_scenario_anywhere"),
                  ScenarioParseError);

  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "hetsim_resolve_test.cfg";
  std::ofstream(path) << "[scenario]\nname = from_file\n";
  const auto s = resolve_scenario(path.string());
  CHECK(s.name == "from_file");
  std::filesystem::remove(path);
}
