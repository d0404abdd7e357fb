#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hetsim/noise_analytic.hpp"

namespace hetsim {

enum class DetectorMode { rms };

/// Spectrum-analyzer settings. rbw is mapped to the equivalent noise
/// bandwidth of the Hann window, not the FFT bin spacing, so the per-bin
/// power of an on-bin tone reads the tone power directly (bench semantics).
struct SpectrumConfig {
  double rbw_hz = 3e3;
  double span_lo_hz = 0.0;
  double span_hi_hz = 0.0;
  int averaging = 1;  // traces averaged into one spectrum
  DetectorMode mode = DetectorMode::rms;
  double db_ref_a2 = 1.0;  // reference for power_db (per-bin power, A^2)
};

inline void validate(const SpectrumConfig& cfg) {
  if (!(cfg.rbw_hz > 0.0))
    throw std::domain_error("SpectrumConfig: rbw must be positive");
  if (!(cfg.span_hi_hz > cfg.span_lo_hz) || !(cfg.span_lo_hz >= 0.0))
    throw std::domain_error("SpectrumConfig: span must satisfy hi > lo >= 0");
  if (!(cfg.rbw_hz <= (cfg.span_hi_hz - cfg.span_lo_hz) / 10.0))
    throw std::domain_error(
        "SpectrumConfig: rbw must be at most a tenth of the span width");
  if (cfg.averaging < 1)
    throw std::domain_error("SpectrumConfig: averaging must be >= 1");
  if (!(cfg.db_ref_a2 > 0.0))
    throw std::domain_error("SpectrumConfig: db reference must be positive");
}

/// One-sided PSD with spectrum-analyzer annotations. power_db[k] is the
/// per-bin power psd[k]*rbw in dB relative to the configured reference.
/// Bins can be flagged invalid by electronics subtraction.
struct NoiseSpectrum {
  std::vector<double> freqs_hz;
  std::vector<double> psd_a2hz;
  std::vector<double> power_db;
  std::vector<std::uint8_t> valid;  // empty means all valid
  double rbw_hz = 0.0;
  double db_ref_a2 = 1.0;

  bool bin_valid(std::size_t k) const { return valid.empty() || valid[k] != 0; }
  double bin_power_a2(std::size_t k) const { return psd_a2hz[k] * rbw_hz; }
};

using FrequencyInterval = std::pair<double, double>;

namespace detail {

// FFTW real-to-complex plans keyed by length. Plan creation is not
// thread-safe; execution on distinct arrays is.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> in(n);
    std::vector<std::complex<double>> out(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(
        static_cast<int>(n), in.data(),
        reinterpret_cast<fftw_complex*>(out.data()),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(n, plan);
    return plan;
  }

 private:
  FftPlanCache() = default;
  std::mutex mu_;
  std::map<std::size_t, fftw_plan> plans_;
};

inline void rfft(std::span<const double> in, std::vector<double>& scratch,
                 std::vector<std::complex<double>>& out) {
  const std::size_t n = in.size();
  scratch.assign(in.begin(), in.end());
  out.resize(n / 2 + 1);
  fftw_plan plan = FftPlanCache::instance().get(n);
  fftw_execute_dft_r2c(plan, scratch.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k)
    w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                static_cast<double>(k) /
                                static_cast<double>(n));
  return w;
}

inline bool in_intervals(double f, std::span<const FrequencyInterval> iv) {
  for (const auto& [lo, hi] : iv)
    if (f >= lo && f <= hi) return true;
  return false;
}

inline double to_db(double linear) {
  if (linear <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(linear);
}

}  // namespace detail

/// Hann window length that realizes the requested equivalent noise
/// bandwidth: ENBW = 1.5 fs / L, rounded to the nearest even length.
inline std::size_t window_length_for_rbw(double sample_rate_hz, double rbw_hz) {
  auto len = static_cast<std::size_t>(std::llround(1.5 * sample_rate_hz / rbw_hz));
  len += len % 2;
  if (len < 16)
    throw std::domain_error(
        "window_length_for_rbw: rbw too wide for the sample rate");
  return len;
}

/// Welch accumulator: Hann window, 50% overlap, one-sided normalization,
/// per-trace mean removal. Traces are added in a fixed order; the result is
/// the average over all windows of all traces.
class WelchAccumulator {
 public:
  WelchAccumulator(double sample_rate_hz, const SpectrumConfig& cfg)
      : fs_(sample_rate_hz), cfg_(cfg) {
    validate(cfg);
    if (!(fs_ > 0.0)) throw std::domain_error("Welch: sample rate must be > 0");
    if (cfg.span_hi_hz > fs_ / 2.0 + 1e-9)
      throw std::domain_error("Welch: span exceeds the Nyquist frequency");
    len_ = window_length_for_rbw(fs_, cfg.rbw_hz);
    window_ = detail::hann_window(len_);
    double wsum = 0.0, w2sum = 0.0;
    for (double w : window_) {
      wsum += w;
      w2sum += w * w;
    }
    enbw_hz_ = fs_ * w2sum / (wsum * wsum);
    scale_ = 2.0 / (fs_ * w2sum);  // one-sided periodogram scale
    accum_.assign(len_ / 2 + 1, 0.0);
  }

  std::size_t window_length() const { return len_; }
  std::size_t min_trace_length() const { return len_ + len_ / 2; }
  double enbw_hz() const { return enbw_hz_; }

  void add_trace(std::span<const double> trace) {
    if (trace.size() < min_trace_length())
      throw std::out_of_range(
          "Welch: trace too short: " + std::to_string(trace.size()) +
          " samples, need at least " + std::to_string(min_trace_length()) +
          " (two 50%-overlapped windows of " + std::to_string(len_) + ")");
    const double mean = detail::kahan_mean(trace);
    const std::size_t hop = len_ / 2;
    std::vector<double> seg(len_);
    for (std::size_t start = 0; start + len_ <= trace.size(); start += hop) {
      for (std::size_t k = 0; k < len_; ++k)
        seg[k] = (trace[start + k] - mean) * window_[k];
      detail::rfft(seg, scratch_, spec_);
      for (std::size_t k = 0; k < accum_.size(); ++k)
        accum_[k] += std::norm(spec_[k]);
      ++windows_;
    }
  }

  std::size_t windows() const { return windows_; }

  NoiseSpectrum finalize() const {
    if (windows_ == 0) throw std::out_of_range("Welch: no windows accumulated");
    const double df = fs_ / static_cast<double>(len_);
    NoiseSpectrum out;
    out.rbw_hz = enbw_hz_;
    out.db_ref_a2 = cfg_.db_ref_a2;
    const auto k_lo =
        static_cast<std::size_t>(std::ceil(cfg_.span_lo_hz / df - 1e-9));
    const auto k_hi = std::min(
        accum_.size() - 1,
        static_cast<std::size_t>(std::floor(cfg_.span_hi_hz / df + 1e-9)));
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
      double p = accum_[k] * scale_ / static_cast<double>(windows_);
      if (k == 0 || k == accum_.size() - 1) p *= 0.5;  // DC and Nyquist
      out.freqs_hz.push_back(static_cast<double>(k) * df);
      out.psd_a2hz.push_back(p);
      out.power_db.push_back(detail::to_db(p * enbw_hz_ / cfg_.db_ref_a2));
    }
    return out;
  }

 private:
  double fs_;
  SpectrumConfig cfg_;
  std::size_t len_ = 0;
  std::vector<double> window_;
  double enbw_hz_ = 0.0;
  double scale_ = 0.0;
  std::vector<double> accum_;
  std::size_t windows_ = 0;
  // scratch kept across segments
  std::vector<double> scratch_;
  std::vector<std::complex<double>> spec_;
};

/// Averaged-periodogram PSD of a single trace.
inline NoiseSpectrum estimate_psd(std::span<const double> trace,
                                  double sample_rate_hz,
                                  const SpectrumConfig& cfg) {
  WelchAccumulator acc(sample_rate_hz, cfg);
  acc.add_trace(trace);
  return acc.finalize();
}

/// Median per-bin power in dB over the non-excluded, valid bins.
inline double noise_floor(const NoiseSpectrum& spectrum,
                          std::span<const FrequencyInterval> exclusions = {}) {
  std::vector<double> kept;
  kept.reserve(spectrum.power_db.size());
  for (std::size_t k = 0; k < spectrum.power_db.size(); ++k) {
    if (!spectrum.bin_valid(k)) continue;
    if (detail::in_intervals(spectrum.freqs_hz[k], exclusions)) continue;
    kept.push_back(spectrum.power_db[k]);
  }
  if (kept.empty())
    throw std::out_of_range(
        "noise_floor: exclusions leave no bins in the span");
  const auto mid = kept.begin() + static_cast<std::ptrdiff_t>(kept.size() / 2);
  std::nth_element(kept.begin(), mid, kept.end());
  if (kept.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(kept.begin(), mid);
  return 0.5 * (lo + hi);
}

/// Linear-power electronics subtraction per bin. Bins where the dark power
/// reaches the total are flagged invalid, unless a clamp floor (A^2/Hz) is
/// given, in which case they clamp to it.
inline NoiseSpectrum subtract_electronics(
    const NoiseSpectrum& total, const NoiseSpectrum& dark,
    std::optional<double> clamp_floor_a2hz = std::nullopt) {
  if (total.freqs_hz.size() != dark.freqs_hz.size())
    throw std::invalid_argument("subtract_electronics: grid size mismatch");
  if (total.rbw_hz != dark.rbw_hz)
    throw std::invalid_argument("subtract_electronics: rbw mismatch");
  for (std::size_t k = 0; k < total.freqs_hz.size(); ++k)
    if (total.freqs_hz[k] != dark.freqs_hz[k])
      throw std::invalid_argument("subtract_electronics: grid mismatch");
  NoiseSpectrum out = total;
  out.valid.assign(total.freqs_hz.size(), 1);
  for (std::size_t k = 0; k < total.freqs_hz.size(); ++k) {
    const double diff = total.psd_a2hz[k] - dark.psd_a2hz[k];
    if (diff > 0.0) {
      out.psd_a2hz[k] = diff;
    } else if (clamp_floor_a2hz) {
      out.psd_a2hz[k] = *clamp_floor_a2hz;
    } else {
      out.psd_a2hz[k] = 0.0;
      out.valid[k] = 0;
    }
    out.power_db[k] =
        detail::to_db(out.psd_a2hz[k] * out.rbw_hz / out.db_ref_a2);
  }
  return out;
}

struct ShiftCheck {
  double difference_db = 0.0;
  bool pass = false;
};

/// Floor difference b - a against the 3.01 dB doubling expectation.
inline ShiftCheck check_3db_shift(
    const NoiseSpectrum& a, const NoiseSpectrum& b,
    std::span<const FrequencyInterval> exclusions = {},
    double tolerance_db = 0.1) {
  const double diff = noise_floor(b, exclusions) - noise_floor(a, exclusions);
  const double target = 10.0 * std::log10(2.0);
  return ShiftCheck{diff, std::abs(diff - target) <= tolerance_db};
}

/// Interference scan: common axis (phase in radians, or time in seconds with
/// the fringe at an unknown rate) plus one intensity record per detector.
struct FringeScan {
  std::vector<double> axis;
  std::vector<std::vector<double>> intensity;
};

namespace detail {

// Least-squares sinusoid a + b1 sin(w x) + b2 cos(w x) at fixed w.
struct SinusoidFit {
  double offset = 0.0;
  double amplitude = 0.0;
  double residual = 0.0;
};

inline SinusoidFit fit_sinusoid_fixed_freq(std::span<const double> x,
                                           std::span<const double> y,
                                           double omega) {
  const std::size_t n = x.size();
  double s[3][3] = {};
  double r[3] = {};
  for (std::size_t k = 0; k < n; ++k) {
    const double basis[3] = {1.0, std::sin(omega * x[k]),
                             std::cos(omega * x[k])};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) s[i][j] += basis[i] * basis[j];
      r[i] += basis[i] * y[k];
    }
  }
  // solve the 3x3 normal equations by Gaussian elimination
  double a[3][4];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) a[i][j] = s[i][j];
    a[i][3] = r[i];
  }
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(a[row][col]) > std::abs(a[pivot][col])) pivot = row;
    if (std::abs(a[pivot][col]) < 1e-300)
      throw std::runtime_error("fringe fit: singular normal equations");
    std::swap(a[col], a[pivot]);
    for (int row = 0; row < 3; ++row) {
      if (row == col) continue;
      const double f = a[row][col] / a[col][col];
      for (int j = col; j < 4; ++j) a[row][j] -= f * a[col][j];
    }
  }
  const double c0 = a[0][3] / a[0][0];
  const double c1 = a[1][3] / a[1][1];
  const double c2 = a[2][3] / a[2][2];
  double res = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double fit = c0 + c1 * std::sin(omega * x[k]) +
                       c2 * std::cos(omega * x[k]);
    res += (y[k] - fit) * (y[k] - fit);
  }
  return SinusoidFit{c0, std::hypot(c1, c2), res};
}

// Dominant oscillation rate of a uniformly spaced record, FFT peak first,
// then a golden-section polish of the least-squares residual.
inline double estimate_fringe_omega(std::span<const double> x,
                                    std::span<const double> y) {
  const std::size_t n = x.size();
  const double dx = x[1] - x[0];
  for (std::size_t k = 1; k < n; ++k)
    if (std::abs((x[k] - x[k - 1]) - dx) > 1e-6 * std::abs(dx))
      throw std::runtime_error("fringe fit: axis must be uniformly spaced");
  const double mean = kahan_mean(y);
  std::vector<double> centered(n);
  for (std::size_t k = 0; k < n; ++k) centered[k] = y[k] - mean;
  std::vector<double> scratch;
  std::vector<std::complex<double>> spec;
  rfft(centered, scratch, spec);
  std::size_t peak = 1;
  double peak_pow = 0.0, total_pow = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    const double p = std::norm(spec[k]);
    total_pow += p;
    if (p > peak_pow) {
      peak_pow = p;
      peak = k;
    }
  }
  if (total_pow <= 0.0 || peak_pow < 0.5 * total_pow)
    throw std::runtime_error(
        "fringe fit: no dominant oscillation in the scan");
  const double span = dx * static_cast<double>(n);
  const double w_peak =
      2.0 * std::numbers::pi * static_cast<double>(peak) / span;
  // polish within +-1 FFT bin
  double lo = w_peak * (1.0 - 1.0 / static_cast<double>(peak));
  double hi = w_peak * (1.0 + 1.0 / static_cast<double>(peak));
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double m1 = hi - gr * (hi - lo);
  double m2 = lo + gr * (hi - lo);
  double f1 = fit_sinusoid_fixed_freq(x, y, m1).residual;
  double f2 = fit_sinusoid_fixed_freq(x, y, m2).residual;
  for (int iter = 0; iter < 60; ++iter) {
    if (f1 < f2) {
      hi = m2;
      m2 = m1;
      f2 = f1;
      m1 = hi - gr * (hi - lo);
      f1 = fit_sinusoid_fixed_freq(x, y, m1).residual;
    } else {
      lo = m1;
      m1 = m2;
      f1 = f2;
      m2 = lo + gr * (hi - lo);
      f2 = fit_sinusoid_fixed_freq(x, y, m2).residual;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Per-detector fringe visibility (I_max - I_min)/(I_max + I_min) with the
/// extrema taken from a least-squares sinusoid, not from raw samples (raw
/// extrema are noise-biased upward).
inline std::vector<double> fringe_visibility(const FringeScan& scan) {
  if (scan.axis.size() < 8)
    throw std::invalid_argument("fringe_visibility: scan too short");
  for (const auto& rec : scan.intensity)
    if (rec.size() != scan.axis.size())
      throw std::invalid_argument(
          "fringe_visibility: intensity record length mismatch");
  std::vector<double> out;
  out.reserve(scan.intensity.size());
  for (const auto& rec : scan.intensity) {
    const double omega = detail::estimate_fringe_omega(scan.axis, rec);
    const double covered =
        omega * (scan.axis.back() - scan.axis.front()) /
        (2.0 * std::numbers::pi);
    if (covered < 1.0)
      throw std::runtime_error(
          "fringe_visibility: scan covers less than one fringe period");
    const auto fit = detail::fit_sinusoid_fixed_freq(scan.axis, rec, omega);
    if (!(fit.offset > 0.0))
      throw std::runtime_error(
          "fringe_visibility: fitted mean intensity is not positive");
    out.push_back(std::min(1.0, fit.amplitude / fit.offset));
  }
  return out;
}

}  // namespace hetsim
