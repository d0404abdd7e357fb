#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "hetsim/photocurrent_sim.hpp"
#include "hetsim/spectral_dsp.hpp"

using namespace hetsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> white_noise(std::size_t n, double sigma,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> out(n);
  for (double& v : out) v = g(rng);
  return out;
}

NoiseSpectrum flat_spectrum(std::size_t bins, double power_db, double rbw,
                            double df) {
  NoiseSpectrum s;
  s.rbw_hz = rbw;
  s.db_ref_a2 = 1.0;
  const double bin_power = std::pow(10.0, power_db / 10.0);
  for (std::size_t k = 0; k < bins; ++k) {
    s.freqs_hz.push_back(static_cast<double>(k) * df);
    s.psd_a2hz.push_back(bin_power / rbw);
    s.power_db.push_back(power_db);
  }
  return s;
}

double band_mean_psd(const NoiseSpectrum& s) {
  double acc = 0.0;
  for (double p : s.psd_a2hz) acc += p;
  return acc / static_cast<double>(s.psd_a2hz.size());
}

}  // namespace

TEST_CASE("window length realizes the requested ENBW") {
  CHECK(window_length_for_rbw(1e8, 3e3) == 50000);
  SpectrumConfig cfg;
  cfg.rbw_hz = 3e3;
  cfg.span_lo_hz = 1e6;
  cfg.span_hi_hz = 5e6;
  WelchAccumulator acc(1e8, cfg);
  CHECK_THAT(acc.enbw_hz(), WithinRel(3e3, 1e-9));
}

TEST_CASE("single-tone calibration: bin power reads A^2/2") {
  const double fs = 1e6;
  const double A = 0.5;
  const double f0 = 25e3;  // on-bin for L = 1000
  SpectrumConfig cfg;
  cfg.rbw_hz = 1500.0;  // L = 1000
  cfg.span_lo_hz = 0.0;
  cfg.span_hi_hz = 5e5;
  const std::size_t n = 16000;
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k)
    x[k] = A * std::sin(2.0 * kPi * f0 * static_cast<double>(k) / fs);
  const auto spec = estimate_psd(x, fs, cfg);
  // locate the tone bin
  std::size_t k0 = 0;
  for (std::size_t k = 0; k < spec.freqs_hz.size(); ++k)
    if (std::abs(spec.freqs_hz[k] - f0) < 1e-6) k0 = k;
  CHECK_THAT(spec.bin_power_a2(k0), WithinRel(A * A / 2.0, 1e-4));
  CHECK_THAT(spec.power_db[k0], WithinAbs(10.0 * std::log10(A * A / 2.0), 1e-3));
}

TEST_CASE("white noise gives the flat two-sided-folded level 2 sigma^2 / fs") {
  const double fs = 1e4;
  const double sigma = 0.3;
  SpectrumConfig cfg;
  cfg.rbw_hz = 30.0;  // L = 500
  cfg.span_lo_hz = 500.0;
  cfg.span_hi_hz = 4500.0;
  const auto x = white_noise(1 << 16, sigma, 4242);
  const auto spec = estimate_psd(x, fs, cfg);
  CHECK_THAT(band_mean_psd(spec), WithinRel(2.0 * sigma * sigma / fs, 0.02));
}

TEST_CASE("Parseval: integrated PSD equals the time-domain variance") {
  const double fs = 1e5;
  SpectrumConfig cfg;
  cfg.rbw_hz = 300.0;  // L = 500, 16+ windows over n = 1 << 14
  cfg.span_lo_hz = 0.0;
  cfg.span_hi_hz = fs / 2.0;
  const std::size_t n = 1 << 14;
  auto x = white_noise(n, 1.7, 777);
  for (std::size_t k = 0; k < n; ++k)
    x[k] += 2.5 * std::sin(2.0 * kPi * 12e3 * static_cast<double>(k) / fs);
  const auto spec = estimate_psd(x, fs, cfg);

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);

  const double df = spec.freqs_hz[1] - spec.freqs_hz[0];
  double integral = 0.0;
  for (double p : spec.psd_a2hz) integral += p * df;
  CHECK_THAT(integral, WithinRel(var, 0.01));
}

TEST_CASE("too-short traces are range errors naming the minimum") {
  SpectrumConfig cfg;
  cfg.rbw_hz = 1500.0;
  cfg.span_lo_hz = 0.0;
  cfg.span_hi_hz = 5e5;
  const auto x = white_noise(800, 1.0, 1);  // < 1.5 windows of L = 1000
  CHECK_THROWS_MATCHES(estimate_psd(x, 1e6, cfg), std::out_of_range,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("need at least")));
}

TEST_CASE("spectrum config validation") {
  SpectrumConfig cfg;
  cfg.rbw_hz = 0.0;
  cfg.span_lo_hz = 0.0;
  cfg.span_hi_hz = 1e5;
  CHECK_THROWS_WITH(validate(cfg),
                    Catch::Matchers::ContainsSubstring("rbw must be positive"));
  cfg.rbw_hz = 5e4;  // wider than span/10
  CHECK_THROWS_AS(validate(cfg), std::domain_error);
  cfg.rbw_hz = 1e3;
  cfg.span_hi_hz = 0.0;
  CHECK_THROWS_AS(validate(cfg), std::domain_error);
}

TEST_CASE("noise_floor median semantics") {
  SECTION("flat spectrum reads its own level") {
    const auto s = flat_spectrum(101, -90.0, 100.0, 50.0);
    CHECK(noise_floor(s) == -90.0);
  }

  SECTION("tone inside an exclusion interval does not move the floor") {
    auto s = flat_spectrum(101, -90.0, 100.0, 50.0);
    const auto base = noise_floor(s);
    s.power_db[40] = -20.0;  // narrowband tone at 2 kHz
    s.psd_a2hz[40] = std::pow(10.0, -2.0) / s.rbw_hz;
    const FrequencyInterval excl{1.9e3, 2.1e3};
    CHECK(noise_floor(s, std::vector<FrequencyInterval>{excl}) == base);
  }

  SECTION("covering the whole span is a range error") {
    const auto s = flat_spectrum(11, -90.0, 100.0, 50.0);
    const FrequencyInterval all{-1.0, 1e9};
    CHECK_THROWS_AS(noise_floor(s, std::vector<FrequencyInterval>{all}),
                    std::out_of_range);
  }
}

TEST_CASE("subtract_electronics") {
  const auto total = flat_spectrum(64, -87.0, 100.0, 50.0);

  SECTION("zero dark spectrum is the identity") {
    auto dark = total;
    for (auto& p : dark.psd_a2hz) p = 0.0;
    for (auto& p : dark.power_db) p = -400.0;
    const auto out = subtract_electronics(total, dark);
    for (std::size_t k = 0; k < out.psd_a2hz.size(); ++k) {
      CHECK(out.psd_a2hz[k] == total.psd_a2hz[k]);
      CHECK(out.bin_valid(k));
    }
  }

  SECTION("total = 2 x dark lands exactly at the dark level") {
    auto dark = total;
    for (auto& p : dark.psd_a2hz) p /= 2.0;
    const auto out = subtract_electronics(total, dark);
    for (std::size_t k = 0; k < out.psd_a2hz.size(); ++k) {
      CHECK_THAT(out.psd_a2hz[k], WithinRel(dark.psd_a2hz[k], 1e-12));
      CHECK_THAT(out.power_db[k] - total.power_db[k],
                 WithinAbs(-3.0103, 1e-3));
    }
  }

  SECTION("dark >= total flags the bin invalid; clamp keeps it") {
    auto dark = total;
    for (auto& p : dark.psd_a2hz) p /= 2.0;
    dark.psd_a2hz[10] = total.psd_a2hz[10] * 1.5;
    const auto out = subtract_electronics(total, dark);
    CHECK_FALSE(out.bin_valid(10));
    CHECK(out.bin_valid(11));
    const auto clamped = subtract_electronics(total, dark, 1e-30);
    CHECK(clamped.bin_valid(10));
    CHECK(clamped.psd_a2hz[10] == 1e-30);
    // the floor estimator skips the invalid bin
    CHECK_THAT(noise_floor(out), WithinAbs(-87.0 - 3.0103, 1e-3));
  }

  SECTION("grid mismatch is a shape error") {
    auto dark = flat_spectrum(63, -90.0, 100.0, 50.0);
    CHECK_THROWS_AS(subtract_electronics(total, dark), std::invalid_argument);
    auto shifted = total;
    shifted.freqs_hz[3] += 1.0;
    CHECK_THROWS_AS(subtract_electronics(total, shifted),
                    std::invalid_argument);
  }
}

TEST_CASE("check_3db_shift") {
  const auto a = flat_spectrum(64, -90.0, 100.0, 50.0);
  auto b = flat_spectrum(64, -90.0, 100.0, 50.0);
  for (std::size_t k = 0; k < b.psd_a2hz.size(); ++k) {
    b.psd_a2hz[k] *= 2.0;
    b.power_db[k] += 10.0 * std::log10(2.0);
  }
  const auto doubled = check_3db_shift(a, b);
  CHECK_THAT(doubled.difference_db, WithinRel(3.010299957, 1e-9));
  CHECK(doubled.pass);
  const auto same = check_3db_shift(a, a);
  CHECK(same.difference_db == 0.0);
  CHECK_FALSE(same.pass);
}

TEST_CASE("simulated heterodyne run: beat tone atop a white shot floor") {
  SimConfig cfg;
  cfg.sample_rate_hz = 1e8;
  cfg.duration_s = (1 << 18) / 1e8;
  cfg.master_seed = 3141064;
  DetectorModel det;
  det.pulse = PulseShape{PulseKind::rectangular,
                         constants::electron_charge_c, 1e-8};
  const DetectorPair dets{det, det};
  const FieldSpec lo{1.77e15, std::sqrt(2e8), 0.0};
  const FieldSpec sig{1.77e15 + 2.0 * kPi * 3e6, std::sqrt(1e6), 0.0};
  const auto trace = simulate_balanced(sig, lo, BeatConfig{2.0 * kPi * 3e6, 0.0},
                                       OpticalPath{1, 1, 1}, dets,
                                       NoiseModel::coherence, cfg);

  SpectrumConfig scfg;
  scfg.rbw_hz = 50e3;
  scfg.span_lo_hz = 1e6;
  scfg.span_hi_hz = 5e6;
  const auto spec = estimate_psd(trace.j_minus, cfg.sample_rate_hz, scfg);

  std::size_t tone = 0;
  for (std::size_t k = 0; k < spec.freqs_hz.size(); ++k)
    if (std::abs(spec.freqs_hz[k] - 3e6) < std::abs(spec.freqs_hz[tone] - 3e6))
      tone = k;
  const std::vector<FrequencyInterval> excl{{2.8e6, 3.2e6}};
  const double floor_db = noise_floor(spec, excl);

  // the tone pokes well out of the floor...
  CHECK(spec.power_db[tone] > floor_db + 10.0);
  // ...and the floor itself sits at the analytic shot level
  const double analytic_db =
      10.0 * std::log10(shot_psd(lo, dets, 0.0) * spec.rbw_hz);
  CHECK_THAT(floor_db, WithinAbs(analytic_db, 0.3));
}

TEST_CASE("rbw invariance: psd level fixed, bin power follows the rbw ratio") {
  const double fs = 1e5;
  const auto x = white_noise(1 << 15, 0.9, 31337);
  SpectrumConfig wide, narrow;
  wide.rbw_hz = 600.0;
  narrow.rbw_hz = 300.0;
  wide.span_lo_hz = narrow.span_lo_hz = 5e3;
  wide.span_hi_hz = narrow.span_hi_hz = 45e3;
  const auto sw = estimate_psd(x, fs, wide);
  const auto sn = estimate_psd(x, fs, narrow);
  CHECK_THAT(band_mean_psd(sw), WithinRel(band_mean_psd(sn), 0.02));
  const double floor_shift = noise_floor(sw) - noise_floor(sn);
  CHECK_THAT(floor_shift, WithinAbs(10.0 * std::log10(sw.rbw_hz / sn.rbw_hz),
                                    0.05));
}

TEST_CASE("fringe visibility") {
  auto make_scan = [](double v1, double v2, double noise, std::uint64_t seed,
                      int points = 2048, double periods = 3.0) {
    FringeScan scan;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    scan.axis.resize(static_cast<std::size_t>(points));
    const double span = 2.0 * kPi * periods;
    for (int k = 0; k < points; ++k)
      scan.axis[static_cast<std::size_t>(k)] =
          span * static_cast<double>(k) / points;
    const double vis[2] = {v1, v2};
    for (int d = 0; d < 2; ++d) {
      std::vector<double> rec(scan.axis.size());
      for (std::size_t k = 0; k < rec.size(); ++k)
        rec[k] = 1.0 + vis[d] * std::sin(scan.axis[k] + 0.3 * d) +
                 noise * g(rng);
      scan.intensity.push_back(std::move(rec));
    }
    return scan;
  };

  SECTION("clean full fringe reads V = 1") {
    const auto vis = fringe_visibility(make_scan(1.0, 1.0, 0.0, 1));
    CHECK_THAT(vis[0], WithinAbs(1.0, 1e-9));
    CHECK_THAT(vis[1], WithinAbs(1.0, 1e-9));
  }

  SECTION("0.99 fringe: (1.99 - 0.01) / (1.99 + 0.01)") {
    const auto vis = fringe_visibility(make_scan(0.99, 0.99, 0.0, 1));
    CHECK_THAT(vis[0], WithinAbs(0.99, 1e-9));
  }

  SECTION("generate-and-recover at 1% noise stays within 0.005") {
    for (std::uint64_t seed : {11u, 22u, 33u}) {
      const auto vis = fringe_visibility(make_scan(0.985, 0.985, 0.01, seed));
      CHECK_THAT(vis[0], WithinAbs(0.985, 0.005));
      CHECK_THAT(vis[1], WithinAbs(0.985, 0.005));
    }
  }

  SECTION("invariant under uniform intensity scaling") {
    auto scan = make_scan(0.8, 0.95, 0.005, 7);
    const auto base = fringe_visibility(scan);
    for (auto& rec : scan.intensity)
      for (double& v : rec) v *= 7.25;
    const auto scaled = fringe_visibility(scan);
    // the frequency polish takes a slightly different float path when the
    // residuals scale, so exact bit equality is not on the table
    CHECK_THAT(scaled[0], WithinAbs(base[0], 1e-9));
    CHECK_THAT(scaled[1], WithinAbs(base[1], 1e-9));
  }

  SECTION("time-axis scan with unknown fringe rate") {
    FringeScan scan;
    const double f = 123.4;
    const int n = 4000;
    scan.axis.resize(n);
    std::vector<double> rec(n);
    for (int k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * 1e-3;
      scan.axis[static_cast<std::size_t>(k)] = t;
      rec[static_cast<std::size_t>(k)] =
          2.0 * (1.0 + 0.97 * std::sin(2.0 * kPi * f * t + 0.4));
    }
    scan.intensity.push_back(rec);
    const auto vis = fringe_visibility(scan);
    CHECK_THAT(vis[0], WithinAbs(0.97, 1e-6));
  }

  SECTION("non-oscillatory scans fail the fit") {
    FringeScan flat;
    flat.axis.resize(512);
    std::vector<double> rec(512, 1.0);
    for (int k = 0; k < 512; ++k)
      flat.axis[static_cast<std::size_t>(k)] = 0.01 * k;
    flat.intensity.push_back(rec);
    CHECK_THROWS_AS(fringe_visibility(flat), std::runtime_error);
  }

  SECTION("less than one fringe period is rejected") {
    FringeScan scan;
    const int n = 512;
    scan.axis.resize(n);
    std::vector<double> rec(n);
    for (int k = 0; k < n; ++k) {
      const double th = 0.5 * kPi * static_cast<double>(k) / n;  // quarter turn
      scan.axis[static_cast<std::size_t>(k)] = th;
      rec[static_cast<std::size_t>(k)] = 1.0 + 0.9 * std::sin(th);
    }
    scan.intensity.push_back(rec);
    CHECK_THROWS_AS(fringe_visibility(scan), std::runtime_error);
  }
}
