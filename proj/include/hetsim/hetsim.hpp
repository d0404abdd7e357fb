#pragma once

// Balanced optical homodyne/heterodyne detection: analytic quantum-noise
// floors, Poisson photocurrent Monte Carlo, spectrum-analyzer emulation,
// and canned bench scenarios.

#include "hetsim/bundled_scenarios.hpp"
#include "hetsim/field_optics.hpp"
#include "hetsim/io.hpp"
#include "hetsim/noise_analytic.hpp"
#include "hetsim/photocurrent_sim.hpp"
#include "hetsim/rng.hpp"
#include "hetsim/scenario.hpp"
#include "hetsim/spectral_dsp.hpp"
