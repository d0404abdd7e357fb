#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsim/photocurrent_sim.hpp"
#include "hetsim/spectral_dsp.hpp"

namespace hetsim {

// All file outputs are headered columnar text: '#'-prefixed key = value
// lines, a '# columns:' line, then whitespace-separated rows. Doubles are
// written with enough digits to round-trip bit-exactly.

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ColumnarFile {
  std::map<std::string, std::string> header;
  std::vector<std::vector<double>> rows;
};

inline ColumnarFile read_columnar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  ColumnarFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto key = line.substr(1, eq - 1);
        auto value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
          const auto a = s.find_first_not_of(" \t");
          const auto b = s.find_last_not_of(" \t\r");
          s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(value);
        file.header[key] = value;
      }
      continue;
    }
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed numeric row");
    if (!row.empty()) file.rows.push_back(std::move(row));
  }
  return file;
}

inline double header_double(const ColumnarFile& f, const std::string& key,
                            const std::string& path) {
  auto it = f.header.find(key);
  if (it == f.header.end())
    throw std::runtime_error(path + ": missing header field " + key);
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": bad header field " + key);
  }
}

}  // namespace detail

/// Trace export: time, J1, J2, Jminus columns; header echoes the config and
/// the seed. max_rows == 0 writes the whole trace.
inline void write_trace(const std::string& path, const PhotocurrentTrace& trace,
                        const std::map<std::string, std::string>& extra = {},
                        std::size_t max_rows = 0) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::size_t n =
      max_rows == 0 ? trace.j1.size() : std::min(max_rows, trace.j1.size());
  out << "# hetsim trace\n";
  out << "# sample_rate_hz = " << detail::fmt_double(trace.sample_rate_hz)
      << "\n";
  out << "# master_seed = " << trace.seed_used << "\n";
  out << "# trial = " << trace.trial_index << "\n";
  out << "# rows = " << n << "\n";
  for (const auto& [k, v] : extra) out << "# " << k << " = " << v << "\n";
  out << "# columns: time_s j1_a j2_a jminus_a\n";
  for (std::size_t k = 0; k < n; ++k) {
    out << detail::fmt_double(static_cast<double>(k) / trace.sample_rate_hz)
        << ' ' << detail::fmt_double(trace.j1[k]) << ' '
        << detail::fmt_double(trace.j2[k]) << ' '
        << detail::fmt_double(trace.j_minus[k]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

struct TraceFile {
  std::vector<double> j1, j2, j_minus;
  double sample_rate_hz = 0.0;
  std::map<std::string, std::string> header;
};

inline TraceFile read_trace(const std::string& path) {
  auto file = detail::read_columnar(path);
  TraceFile out;
  out.sample_rate_hz = detail::header_double(file, "sample_rate_hz", path);
  out.header = std::move(file.header);
  for (const auto& row : file.rows) {
    if (row.size() != 4)
      throw std::runtime_error(path + ": trace rows need 4 columns");
    out.j1.push_back(row[1]);
    out.j2.push_back(row[2]);
    out.j_minus.push_back(row[3]);
  }
  return out;
}

/// Spectrum export: freq_hz, psd, power_db columns.
inline void write_spectrum(const std::string& path,
                           const NoiseSpectrum& spectrum,
                           const std::map<std::string, std::string>& extra = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# hetsim spectrum\n";
  out << "# rbw_hz = " << detail::fmt_double(spectrum.rbw_hz) << "\n";
  out << "# db_ref_a2 = " << detail::fmt_double(spectrum.db_ref_a2) << "\n";
  for (const auto& [k, v] : extra) out << "# " << k << " = " << v << "\n";
  out << "# columns: freq_hz psd_a2hz power_db\n";
  for (std::size_t k = 0; k < spectrum.freqs_hz.size(); ++k) {
    if (!spectrum.bin_valid(k)) continue;
    out << detail::fmt_double(spectrum.freqs_hz[k]) << ' '
        << detail::fmt_double(spectrum.psd_a2hz[k]) << ' '
        << detail::fmt_double(spectrum.power_db[k]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline NoiseSpectrum read_spectrum(const std::string& path) {
  auto file = detail::read_columnar(path);
  NoiseSpectrum out;
  out.rbw_hz = detail::header_double(file, "rbw_hz", path);
  out.db_ref_a2 = detail::header_double(file, "db_ref_a2", path);
  for (const auto& row : file.rows) {
    if (row.size() != 3)
      throw std::runtime_error(path + ": spectrum rows need 3 columns");
    out.freqs_hz.push_back(row[0]);
    out.psd_a2hz.push_back(row[1]);
    out.power_db.push_back(row[2]);
  }
  return out;
}

/// Fringe-scan export: axis plus one intensity column per detector.
inline void write_fringe_scan(const std::string& path, const FringeScan& scan,
                              const std::map<std::string, std::string>& extra = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# hetsim fringe-scan\n";
  out << "# detectors = " << scan.intensity.size() << "\n";
  for (const auto& [k, v] : extra) out << "# " << k << " = " << v << "\n";
  out << "# columns: axis intensity...\n";
  for (std::size_t k = 0; k < scan.axis.size(); ++k) {
    out << detail::fmt_double(scan.axis[k]);
    for (const auto& rec : scan.intensity)
      out << ' ' << detail::fmt_double(rec[k]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline FringeScan read_fringe_scan(const std::string& path) {
  auto file = detail::read_columnar(path);
  FringeScan scan;
  if (file.rows.empty())
    throw std::runtime_error(path + ": empty fringe scan");
  const std::size_t cols = file.rows.front().size();
  if (cols < 2)
    throw std::runtime_error(path + ": fringe rows need axis plus intensity");
  scan.intensity.resize(cols - 1);
  for (const auto& row : file.rows) {
    if (row.size() != cols)
      throw std::runtime_error(path + ": ragged fringe rows");
    scan.axis.push_back(row[0]);
    for (std::size_t d = 1; d < cols; ++d)
      scan.intensity[d - 1].push_back(row[d]);
  }
  return scan;
}

}  // namespace hetsim
