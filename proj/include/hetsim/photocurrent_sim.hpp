#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "hetsim/field_optics.hpp"
#include "hetsim/noise_analytic.hpp"
#include "hetsim/rng.hpp"

namespace hetsim {

struct SimConfig {
  double sample_rate_hz = 100e6;
  double duration_s = 0.0;
  std::uint64_t master_seed = 1;
  int trials = 1;
  double lo_linewidth_hz = 0.0;  // LO phase diffusion, 0 disables
  int threads = 1;               // trial-level parallelism

  std::size_t samples() const {
    return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  }
};

inline void validate(const SimConfig& cfg) {
  if (!(cfg.sample_rate_hz > 0.0))
    throw std::domain_error("SimConfig: sample_rate must be > 0");
  if (cfg.samples() == 0)
    throw std::domain_error("SimConfig: duration yields an empty trace");
  if (cfg.trials < 1) throw std::domain_error("SimConfig: trials must be >= 1");
  if (cfg.threads < 1) throw std::domain_error("SimConfig: threads must be >= 1");
  if (!(cfg.lo_linewidth_hz >= 0.0))
    throw std::domain_error("SimConfig: lo_linewidth must be >= 0");
}

/// Uniformly sampled photocurrents of one balanced-detection run.
/// j_minus[k] == j1[k] - j2[k] for every k.
struct PhotocurrentTrace {
  std::vector<double> j1;
  std::vector<double> j2;
  std::vector<double> j_minus;
  double sample_rate_hz = 0.0;
  std::uint64_t seed_used = 0;
  std::uint64_t trial_index = 0;
};

namespace detail {

// Inhomogeneous Poisson events by thinning against a fixed bound. Exact for
// bounded rates. on_event(t) is invoked in time order.
template <class RateFn, class OnEvent>
std::size_t thin_poisson(RateFn&& rate_fn, double max_rate, double duration_s,
                         std::mt19937_64& rng, OnEvent&& on_event) {
  if (!(max_rate >= 0.0))
    throw std::domain_error("thin_poisson: negative rate bound");
  if (max_rate == 0.0) return 0;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::size_t count = 0;
  double t = 0.0;
  for (;;) {
    // u in (0,1]: a zero draw would teleport t to infinity
    const double u = 1.0 - uni(rng);
    t -= std::log(u) / max_rate;
    if (t >= duration_s) break;
    const double r = rate_fn(t);
    if (r < 0.0)
      throw std::domain_error("photon rate is negative at t = " +
                              std::to_string(t) + " s");
    if (r > max_rate * (1.0 + 1e-9))
      throw std::domain_error(
          "photon rate exceeds the thinning bound at t = " + std::to_string(t) +
          " s; supply a larger max_rate");
    if (uni(rng) * max_rate < r) {
      on_event(t);
      ++count;
    }
  }
  return count;
}

// Deposit one photoevent pulse onto the sample grid (value sampling of the
// continuous waveform at the grid instants).
inline void add_pulse(std::vector<double>& samples, double fs, double t_event,
                      const PulseShape& pulse) {
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  auto first = static_cast<std::ptrdiff_t>(std::ceil(t_event * fs));
  if (first < 0) first = 0;
  switch (pulse.kind) {
    case PulseKind::delta: {
      // binned impulse: all charge lands on the next sample instant
      if (first < n) samples[first] += pulse.area_c * fs;
      return;
    }
    case PulseKind::rectangular: {
      const double amp = pulse.area_c / pulse.width_s;
      const auto last = static_cast<std::ptrdiff_t>(
          std::ceil((t_event + pulse.width_s) * fs));
      for (auto k = first; k < last && k < n; ++k) samples[k] += amp;
      return;
    }
    case PulseKind::one_sided_exponential: {
      const double amp0 = pulse.area_c / pulse.width_s;
      const double cutoff = 37.0 * pulse.width_s;  // exp(-37) ~ 8e-17
      for (auto k = first; k < n; ++k) {
        const double dt = static_cast<double>(k) / fs - t_event;
        if (dt > cutoff) break;
        samples[k] += amp0 * std::exp(-dt / pulse.width_s);
      }
      return;
    }
  }
}

template <class RateFn>
std::vector<double> detector_waveform(RateFn&& rate_fn, double max_rate,
                                      const DetectorModel& det,
                                      std::size_t n_samples, double fs,
                                      std::mt19937_64& rng,
                                      std::size_t* event_count = nullptr) {
  validate(det);
  std::vector<double> samples(n_samples, 0.0);
  const double duration = static_cast<double>(n_samples) / fs;
  const double eta = det.efficiency;
  const double dark = det.dark_rate_hz;  // not efficiency-scaled
  const std::size_t count = thin_poisson(
      [&](double t) { return eta * rate_fn(t) + dark; },
      eta * max_rate + dark, duration, rng,
      [&](double t) { add_pulse(samples, fs, t, det.pulse); });
  if (event_count) *event_count = count;
  return samples;
}

inline void add_white_gaussian(std::vector<double>& samples, double sigma,
                               std::mt19937_64& rng) {
  if (sigma == 0.0) return;
  std::normal_distribution<double> gauss(0.0, sigma);
  for (double& s : samples) s += gauss(rng);
}

// LO phase random walk on the sample grid; linear interpolation in between.
// Step variance 2 pi dnu dt gives a Lorentzian line of FWHM dnu.
class PhaseWalk {
 public:
  PhaseWalk(double linewidth_hz, std::size_t n, double fs,
            std::uint64_t seed)
      : fs_(fs) {
    if (linewidth_hz <= 0.0) return;
    auto rng = make_engine(seed);
    std::normal_distribution<double> step(
        0.0, std::sqrt(2.0 * std::numbers::pi * linewidth_hz / fs));
    walk_.resize(n + 1);
    walk_[0] = 0.0;
    for (std::size_t k = 1; k <= n; ++k) walk_[k] = walk_[k - 1] + step(rng);
  }

  bool active() const { return !walk_.empty(); }

  double operator()(double t) const {
    if (walk_.empty()) return 0.0;
    const double x = t * fs_;
    auto k = static_cast<std::size_t>(x);
    if (k + 1 >= walk_.size()) return walk_.back();
    const double frac = x - static_cast<double>(k);
    return walk_[k] + frac * (walk_[k + 1] - walk_[k]);
  }

 private:
  double fs_ = 0.0;
  std::vector<double> walk_;
};

}  // namespace detail

/// Photoevent times of an inhomogeneous Poisson process on [0, duration),
/// exact thinning against max_rate. Deterministic given the engine state.
template <class RateFn>
std::vector<double> sample_poisson_events(RateFn&& rate_fn, double max_rate,
                                          double duration_s,
                                          std::mt19937_64& rng) {
  std::vector<double> times;
  detail::thin_poisson(rate_fn, max_rate, duration_s, rng,
                       [&](double t) { times.push_back(t); });
  return times;
}

/// One detector channel: photoevents at rate eta * rate_fn(t), pulses
/// deposited on the uniform grid. The thinning bound is scanned from the
/// sample grid; smooth rate functions only.
template <class RateFn>
std::vector<double> simulate_detector(RateFn&& rate_fn,
                                      const DetectorModel& det,
                                      const SimConfig& cfg,
                                      std::uint64_t trial = 0) {
  validate(cfg);
  const std::size_t n = cfg.samples();
  double max_rate = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = rate_fn(static_cast<double>(k) / cfg.sample_rate_hz);
    if (r < 0.0)
      throw std::domain_error(
          "photon rate is negative at t = " +
          std::to_string(static_cast<double>(k) / cfg.sample_rate_hz) + " s");
    if (r > max_rate) max_rate = r;
  }
  max_rate *= 1.001;  // headroom for inter-sample peaks
  auto rng = make_engine(
      trial_seed(cfg.master_seed, trial, RngChannel::detector_1));
  return detail::detector_waveform(rate_fn, max_rate, det, n,
                                   cfg.sample_rate_hz, rng);
}

/// Full balanced-detection run for one trial: two independently seeded
/// detector channels driven by the deterministic port intensities, optional
/// electronics noise per detector, and the image-band excess injected as an
/// anticorrelated pair (+x/2, -x/2) so that J_- carries the full penalty
/// while j_minus == j1 - j2 stays exact.
inline PhotocurrentTrace simulate_balanced(
    const FieldSpec& signal, const FieldSpec& lo, const BeatConfig& beat,
    const OpticalPath& path, const DetectorPair& dets, NoiseModel model,
    const SimConfig& cfg, std::uint64_t trial = 0) {
  validate(signal, "signal");
  validate(lo, "lo");
  validate(path);
  validate(cfg);
  const std::size_t n = cfg.samples();
  const double fs = cfg.sample_rate_hz;

  const double direct = signal.flux() + lo.flux();
  const double cross = 2.0 * lo.flux_amplitude * signal.flux_amplitude;
  const double omega = beat.het_frequency_rad_s;
  const double phi = beat.relative_phase_rad;

  detail::PhaseWalk phase(cfg.lo_linewidth_hz, n, fs,
                          trial_seed(cfg.master_seed, trial,
                                     RngChannel::lo_phase));

  auto rate1 = [&](double t) {
    return 0.5 * (direct + path.visibility_1 * cross *
                               std::sin(omega * t + phi + phase(t)));
  };
  auto rate2 = [&](double t) {
    return 0.5 * (direct - path.visibility_2 * cross *
                               std::sin(omega * t + phi + phase(t)));
  };
  const double bound1 = 0.5 * (direct + path.visibility_1 * cross);
  const double bound2 = 0.5 * (direct + path.visibility_2 * cross);

  PhotocurrentTrace trace;
  trace.sample_rate_hz = fs;
  trace.seed_used = cfg.master_seed;
  trace.trial_index = trial;

  auto rng1 = make_engine(
      trial_seed(cfg.master_seed, trial, RngChannel::detector_1));
  trace.j1 = detail::detector_waveform(rate1, bound1, dets[0], n, fs, rng1);
  auto rng2 = make_engine(
      trial_seed(cfg.master_seed, trial, RngChannel::detector_2));
  trace.j2 = detail::detector_waveform(rate2, bound2, dets[1], n, fs, rng2);

  if (dets[0].electronics_psd_a2hz > 0.0) {
    auto rng = make_engine(
        trial_seed(cfg.master_seed, trial, RngChannel::electronics_1));
    detail::add_white_gaussian(
        trace.j1, std::sqrt(dets[0].electronics_psd_a2hz * fs / 2.0), rng);
  }
  if (dets[1].electronics_psd_a2hz > 0.0) {
    auto rng = make_engine(
        trial_seed(cfg.master_seed, trial, RngChannel::electronics_2));
    detail::add_white_gaussian(
        trace.j2, std::sqrt(dets[1].electronics_psd_a2hz * fs / 2.0), rng);
  }

  if (model == NoiseModel::image_band && !beat.homodyne()) {
    // excess one-sided PSD = eta_c V^2 * shot PSD at the analysis band
    double area2 = 0.0;
    for (const auto& d : dets)
      area2 += d.efficiency * d.pulse.area_c * d.pulse.area_c;
    const double v = path.mean_visibility();
    const double excess_psd =
        path.collection_efficiency * v * v * lo.flux() * area2;
    const double sigma = std::sqrt(excess_psd * fs / 2.0);
    auto rng = make_engine(
        trial_seed(cfg.master_seed, trial, RngChannel::excess_noise));
    std::normal_distribution<double> gauss(0.0, sigma);
    for (std::size_t k = 0; k < n; ++k) {
      const double x = gauss(rng);
      trace.j1[k] += 0.5 * x;
      trace.j2[k] -= 0.5 * x;
    }
  }

  trace.j_minus.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    trace.j_minus[k] = trace.j1[k] - trace.j2[k];
  return trace;
}

inline AutocorrTerms autocorr_decomposition(const PhotocurrentTrace& trace,
                                            double tau_s) {
  return autocorr_decomposition(std::span<const double>(trace.j1),
                                std::span<const double>(trace.j2),
                                trace.sample_rate_hz, tau_s);
}

/// Map fn over trial indices, possibly on several threads. Results land in
/// a vector indexed by trial, so any later reduction is order-fixed and
/// independent of scheduling.
template <class Fn>
auto parallel_map_trials(int trials, int threads, Fn&& fn)
    -> std::vector<decltype(fn(0))> {
  using Result = decltype(fn(0));
  std::vector<Result> results(static_cast<std::size_t>(trials));
  if (threads <= 1 || trials <= 1) {
    for (int t = 0; t < trials; ++t) results[static_cast<std::size_t>(t)] = fn(t);
    return results;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= trials) return;
      try {
        results[static_cast<std::size_t>(t)] = fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int nthreads = std::min(threads, trials);
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace hetsim
