#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hetsim/scenario.hpp"

namespace hetsim {

struct BundledScenario {
  std::string name;
  std::string description;
  std::string text;
};

// Canned experiments at the bench operating point: 1064 nm, oscillator at
// 4 or 8 mW, signal in the tens-of-picowatts range, RBW a few kHz, 3 MHz
// beat for heterodyne runs. Monte Carlo runs scale both fluxes by
// sim.mc_flux_scale; floor differences are invariant under that scaling.
inline const std::vector<BundledScenario>& bundled_scenarios() {
  static const std::vector<BundledScenario> list = {
      {"floors_homodyne_4mw",
       "homodyne quantum-noise floor, 4 mW oscillator: white, at the "
       "analytic shot level",
       R"(# homodyne noise floor at 4 mW oscillator power
[scenario]
name = floors_homodyne_4mw
mode = single
note = quantum-limited floor; spectrally white across the analysis band

[field]
wavelength_nm = 1064
lo_power_mw = 4
signal_power_pw = 20
het_frequency_mhz = 0

[noise]
model = coherence

[sim]
trials = 100
master_seed = 411064

[expect]
mc_minus_analytic_db = 0 0.1
mc_flatness_db = 0 0.2
variance_pull_sigma = 0 5
)"},
      {"floors_homodyne_8mw",
       "homodyne quantum-noise floor, 8 mW oscillator",
       R"(# homodyne noise floor at 8 mW oscillator power
[scenario]
name = floors_homodyne_8mw
mode = single
note = same run as 4 mW with the oscillator power doubled

[field]
wavelength_nm = 1064
lo_power_mw = 8
signal_power_pw = 20
het_frequency_mhz = 0

[noise]
model = coherence

[sim]
trials = 100
master_seed = 811064

[expect]
mc_minus_analytic_db = 0 0.1
mc_flatness_db = 0 0.2
variance_pull_sigma = 0 5
)"},
      {"floors_heterodyne_4mw",
       "heterodyne quantum-noise floor, 4 mW oscillator, 3 MHz beat "
       "excluded",
       R"(# heterodyne noise floor at 4 mW oscillator power
[scenario]
name = floors_heterodyne_4mw
mode = single
note = beat tone at 3 MHz sits atop a white floor; the floor is read with the tone excluded

[field]
wavelength_nm = 1064
lo_power_mw = 4
signal_power_pw = 20
het_frequency_mhz = 3

[noise]
model = coherence

[sim]
trials = 100
master_seed = 431064

[expect]
mc_minus_analytic_db = 0 0.1
mc_flatness_db = 0 0.2
variance_pull_sigma = 0 5
)"},
      {"floors_heterodyne_8mw",
       "heterodyne quantum-noise floor, 8 mW oscillator",
       R"(# heterodyne noise floor at 8 mW oscillator power
[scenario]
name = floors_heterodyne_8mw
mode = single
note = doubling the oscillator lifts the white floor by 3 dB, beat tone excluded

[field]
wavelength_nm = 1064
lo_power_mw = 8
signal_power_pw = 20
het_frequency_mhz = 3

[noise]
model = coherence

[sim]
trials = 100
master_seed = 831064

[expect]
mc_minus_analytic_db = 0 0.1
mc_flatness_db = 0 0.2
variance_pull_sigma = 0 5
)"},
      {"het_vs_hom_coherence",
       "central comparison: heterodyne and homodyne floors coincide for "
       "coherent light",
       R"(# heterodyne vs homodyne noise floors, coherent light
[scenario]
name = het_vs_hom_coherence
mode = compare
note = heterodyne and homodyne detection share one quantum-noise floor; no 3 dB penalty appears

[field]
wavelength_nm = 1064
lo_power_mw = 4
signal_flux = 1e5
het_frequency_mhz = 0

[noise]
model = coherence

[sim]
trials = 100
master_seed = 20131064

[variant_b]
field.het_frequency_mhz = 3

[expect]
analytic_floor_diff_db = 0 1e-9
mc_floor_diff_db = 0 0.1
)"},
      {"lo_doubling",
       "floor calibration: doubling the oscillator power lifts the floor "
       "by 3.01 dB",
       R"(# oscillator doubling, 4 mW vs 8 mW
[scenario]
name = lo_doubling
mode = compare
note = shot-limited floors scale linearly with oscillator power

[field]
wavelength_nm = 1064
lo_power_mw = 4
signal_flux = 1e5
het_frequency_mhz = 0

[noise]
model = coherence

[sim]
trials = 100
master_seed = 4811064

[variant_b]
field.lo_power_mw = 8

[expect]
analytic_floor_diff_db = 3.0103 0.001
mc_floor_diff_db = 3.0103 0.1
)"},
      {"imageband_ideal",
       "rival image-band hypothesis at ideal collection and visibility: "
       "3.01 dB heterodyne excess",
       R"(# image-band hypothesis, ideal optics
[scenario]
name = imageband_ideal
mode = compare
note = rival image-band model: heterodyne floor doubled relative to homodyne at perfect collection and visibility

[field]
wavelength_nm = 1064
lo_power_mw = 4
signal_flux = 1e5
het_frequency_mhz = 0

[path]
collection_efficiency = 1
visibility_1 = 1
visibility_2 = 1

[noise]
model = imageband

[sim]
trials = 100
master_seed = 30164

[variant_b]
field.het_frequency_mhz = 3

[expect]
analytic_floor_diff_db = 3.01 0.01
imageband_prediction_db = 3.01 0.01
mc_floor_diff_db = 3.01 0.1
)"},
      {"imageband_prediction",
       "rival image-band hypothesis at the bench parameters (70% "
       "collection, 98/99% visibility): 2.25 dB predicted excess",
       R"(# image-band hypothesis at the bench parameters
[scenario]
name = imageband_prediction
mode = compare
note = rival image-band model prediction at 70% collection and 98/99% visibility; balanced-detection data show no such heterodyne excess, falsifying the hypothesis

[field]
wavelength_nm = 1064
lo_power_mw = 4
signal_flux = 1e5
het_frequency_mhz = 0

[path]
collection_efficiency = 0.70
visibility_1 = 0.98
visibility_2 = 0.99

[noise]
model = imageband

[sim]
trials = 100
master_seed = 230164

[variant_b]
field.het_frequency_mhz = 3

[expect]
analytic_floor_diff_db = 2.25 0.05
imageband_prediction_db = 2.25 0.05
mc_floor_diff_db = 2.25 0.1
)"},
      {"fringe_visibility",
       "interference fringes with near-unity visibility, recovered by the "
       "sinusoid fit",
       R"(# fringe visibility recovery from a noisy scan
[scenario]
name = fringe_visibility
mode = fringe
note = near-unity fringe visibility seen by both photodiodes

[fringe]
visibility_1 = 0.98
visibility_2 = 0.99
points = 4096
periods = 4
noise_rel = 0.01

[sim]
master_seed = 9899

[expect]
visibility_1 = 0.98 0.005
visibility_2 = 0.99 0.005
)"},
  };
  return list;
}

inline const BundledScenario* find_bundled_scenario(const std::string& name) {
  for (const auto& s : bundled_scenarios())
    if (s.name == name) return &s;
  return nullptr;
}

/// Resolve a CLI argument: an existing file wins, otherwise a bundled name.
inline Scenario resolve_scenario(const std::string& file_or_name) {
  if (std::filesystem::exists(file_or_name))
    return load_scenario(file_or_name);
  if (const auto* bundled = find_bundled_scenario(file_or_name))
    return load_scenario_text(bundled->text, "bundled:" + bundled->name);
  throw ScenarioParseError("no such scenario file or bundled name: " +
                           file_or_name);
}

}  // namespace hetsim
