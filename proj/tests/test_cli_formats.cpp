#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "hetsim/io.hpp"

using namespace hetsim;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("trace files round-trip bit-exactly") {
  PhotocurrentTrace trace;
  trace.sample_rate_hz = 1e8;
  trace.seed_used = 424242;
  trace.trial_index = 3;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1e-12);
  for (int k = 0; k < 500; ++k) {
    trace.j1.push_back(g(rng));
    trace.j2.push_back(g(rng));
    trace.j_minus.push_back(trace.j1.back() - trace.j2.back());
  }
  const auto path = temp_file("hetsim_trace_rt.txt");
  write_trace(path.string(), trace, {{"scenario", "roundtrip"}});
  const auto back = read_trace(path.string());
  CHECK(back.sample_rate_hz == trace.sample_rate_hz);
  CHECK(back.header.at("scenario") == "roundtrip");
  CHECK(back.header.at("master_seed") == "424242");
  REQUIRE(back.j1.size() == trace.j1.size());
  for (std::size_t k = 0; k < trace.j1.size(); ++k) {
    CHECK(back.j1[k] == trace.j1[k]);
    CHECK(back.j2[k] == trace.j2[k]);
    CHECK(back.j_minus[k] == trace.j_minus[k]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("trace preview limit truncates rows") {
  PhotocurrentTrace trace;
  trace.sample_rate_hz = 1e6;
  for (int k = 0; k < 100; ++k) {
    trace.j1.push_back(k);
    trace.j2.push_back(0.0);
    trace.j_minus.push_back(k);
  }
  const auto path = temp_file("hetsim_trace_preview.txt");
  write_trace(path.string(), trace, {}, 10);
  const auto back = read_trace(path.string());
  CHECK(back.j1.size() == 10);
  std::filesystem::remove(path);
}

TEST_CASE("spectrum files round-trip bit-exactly") {
  NoiseSpectrum s;
  s.rbw_hz = 3000.0;
  s.db_ref_a2 = 1.0;
  for (int k = 0; k < 200; ++k) {
    s.freqs_hz.push_back(1e6 + 2000.0 * k);
    s.psd_a2hz.push_back(1.1e-29 * (1.0 + 0.01 * std::sin(0.2 * k)));
    s.power_db.push_back(10.0 * std::log10(s.psd_a2hz.back() * s.rbw_hz));
  }
  const auto path = temp_file("hetsim_spectrum_rt.txt");
  write_spectrum(path.string(), s);
  const auto back = read_spectrum(path.string());
  CHECK(back.rbw_hz == s.rbw_hz);
  REQUIRE(back.freqs_hz.size() == s.freqs_hz.size());
  for (std::size_t k = 0; k < s.freqs_hz.size(); ++k) {
    CHECK(back.freqs_hz[k] == s.freqs_hz[k]);
    CHECK(back.psd_a2hz[k] == s.psd_a2hz[k]);
    CHECK(back.power_db[k] == s.power_db[k]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("invalid bins are dropped from spectrum files") {
  NoiseSpectrum s;
  s.rbw_hz = 100.0;
  s.db_ref_a2 = 1.0;
  for (int k = 0; k < 10; ++k) {
    s.freqs_hz.push_back(100.0 * k);
    s.psd_a2hz.push_back(1e-20);
    s.power_db.push_back(-180.0);
  }
  s.valid.assign(10, 1);
  s.valid[4] = 0;
  const auto path = temp_file("hetsim_spectrum_inv.txt");
  write_spectrum(path.string(), s);
  const auto back = read_spectrum(path.string());
  CHECK(back.freqs_hz.size() == 9);
  std::filesystem::remove(path);
}

TEST_CASE("fringe scans round-trip") {
  FringeScan scan;
  for (int k = 0; k < 64; ++k) {
    scan.axis.push_back(0.1 * k);
  }
  scan.intensity.resize(2);
  for (int k = 0; k < 64; ++k) {
    scan.intensity[0].push_back(1.0 + std::sin(scan.axis[k]));
    scan.intensity[1].push_back(1.0 - std::sin(scan.axis[k]));
  }
  const auto path = temp_file("hetsim_fringe_rt.txt");
  write_fringe_scan(path.string(), scan);
  const auto back = read_fringe_scan(path.string());
  REQUIRE(back.intensity.size() == 2);
  CHECK(back.axis == scan.axis);
  CHECK(back.intensity[0] == scan.intensity[0]);
  CHECK(back.intensity[1] == scan.intensity[1]);
  std::filesystem::remove(path);
}

TEST_CASE("reading a missing file fails loudly") {
  CHECK_THROWS_AS(read_trace("/nonexistent/hetsim_nope.txt"),
                  std::runtime_error);
  CHECK_THROWS_AS(read_spectrum("/nonexistent/hetsim_nope.txt"),
                  std::runtime_error);
}

TEST_CASE("malformed rows carry the line number") {
  const auto path = temp_file("hetsim_bad_rows.txt");
  {
    std::ofstream out(path);
    out << "# sample_rate_hz = 1000\n";
    out << "0 1 2 3\n";
    out << "0 oops 2 3\n";
  }
  CHECK_THROWS_WITH(read_trace(path.string()),
                    Catch::Matchers::ContainsSubstring(":3"));
  std::filesystem::remove(path);
}
