#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

#include "hetsim/field_optics.hpp"

namespace hetsim {

enum class PulseKind { delta, rectangular, one_sided_exponential };

/// Photoelectron current pulse j(t). `area_c` is the charge per photoevent,
/// `width_s` the rectangle width or the exponential time constant. j(t) = 0
/// for t < 0 and integrates to area_c.
struct PulseShape {
  PulseKind kind = PulseKind::rectangular;
  double area_c = constants::electron_charge_c;
  double width_s = 10e-9;
};

struct DetectorModel {
  double efficiency = 1.0;  // eta in [0,1]
  PulseShape pulse{};
  double electronics_psd_a2hz = 0.0;  // one-sided current-noise PSD, may be 0
  double dark_rate_hz = 0.0;          // reserved; additive event rate
};

using DetectorPair = std::array<DetectorModel, 2>;

/// Noise hypothesis selector. Coherence carries no excess fluctuation for
/// coherent inputs; ImageBand adds the rival 3 dB heterodyne excess;
/// ClassicalNoiseless removes every fluctuation term (testing aid).
enum class NoiseModel { coherence, image_band, classical_noiseless };

inline void validate(const PulseShape& p) {
  if (!(p.area_c > 0.0))
    throw std::domain_error("PulseShape: area must be > 0");
  if (p.kind != PulseKind::delta && !(p.width_s > 0.0))
    throw std::domain_error("PulseShape: width must be > 0");
}

inline void validate(const DetectorModel& d) {
  if (!(d.efficiency >= 0.0 && d.efficiency <= 1.0))
    throw std::domain_error("DetectorModel: efficiency must be in [0,1]");
  if (!(d.electronics_psd_a2hz >= 0.0))
    throw std::domain_error("DetectorModel: electronics_psd must be >= 0");
  if (!(d.dark_rate_hz >= 0.0))
    throw std::domain_error("DetectorModel: dark_rate must be >= 0");
  validate(d.pulse);
}

namespace detail {

inline double sinc(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

// Kahan-compensated accumulator; the decomposition identity below is asked
// for at 1e-12 relative, which plain summation over 2^20 samples misses.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double v) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

inline double kahan_mean(std::span<const double> x) {
  KahanSum s;
  for (double v : x) s.add(v);
  return s.sum / static_cast<double>(x.size());
}

}  // namespace detail

/// integral of j(t)^2 dt.
inline double pulse_square_integral(const PulseShape& p) {
  validate(p);
  switch (p.kind) {
    case PulseKind::rectangular:
      return p.area_c * p.area_c / p.width_s;
    case PulseKind::one_sided_exponential:
      return p.area_c * p.area_c / (2.0 * p.width_s);
    case PulseKind::delta:
      throw std::domain_error(
          "pulse_square_integral: delta pulse has unbounded variance; use the "
          "PSD form instead");
  }
  throw std::logic_error("unreachable");
}

/// |j_hat(f)|^2 with j_hat(f) = integral j(t) exp(-i 2 pi f t) dt.
inline double pulse_transfer_mag2(const PulseShape& p, double f_hz) {
  validate(p);
  switch (p.kind) {
    case PulseKind::rectangular: {
      const double s = detail::sinc(std::numbers::pi * f_hz * p.width_s);
      return p.area_c * p.area_c * s * s;
    }
    case PulseKind::one_sided_exponential: {
      const double x = 2.0 * std::numbers::pi * f_hz * p.width_s;
      return p.area_c * p.area_c / (1.0 + x * x);
    }
    case PulseKind::delta:
      return p.area_c * p.area_c;
  }
  throw std::logic_error("unreachable");
}

/// Pulse autocorrelation integral j(t) j(t+|tau|) dt for two pulses of the
/// same kind and width.
inline double pulse_cross_autocorr(const PulseShape& a, const PulseShape& b,
                                   double tau_s) {
  validate(a);
  validate(b);
  if (a.kind != b.kind || (a.kind != PulseKind::delta && a.width_s != b.width_s))
    throw std::invalid_argument(
        "pulse_cross_autocorr: mixed pulse shapes are not supported");
  const double at = std::abs(tau_s);
  switch (a.kind) {
    case PulseKind::rectangular: {
      if (at >= a.width_s) return 0.0;
      return a.area_c * b.area_c / a.width_s * (1.0 - at / a.width_s);
    }
    case PulseKind::one_sided_exponential:
      return a.area_c * b.area_c / (2.0 * a.width_s) *
             std::exp(-at / a.width_s);
    case PulseKind::delta:
      throw std::domain_error(
          "pulse_cross_autocorr: delta pulse autocorrelation is unbounded; "
          "use the PSD form instead");
  }
  throw std::logic_error("unreachable");
}

/// Light-intensity fluctuation autocorrelation lambda_i(t, iota) under the
/// chosen noise hypothesis. Coherent inputs carry none; the image-band
/// hypothesis is modeled as white at the intensity level, and the returned
/// value is the weight of its zero-lag delta at unit detector efficiency and
/// ideal collection (path factors are applied downstream, in
/// floor_difference_db and in the simulator's excess injection).
inline double lambda_autocorr(NoiseModel model, const FieldSpec& signal,
                              const FieldSpec& lo, double /*t_s*/,
                              double iota_s) {
  switch (model) {
    case NoiseModel::coherence:
    case NoiseModel::classical_noiseless:
      return 0.0;
    case NoiseModel::image_band: {
      const double het = signal.frequency_rad_s - lo.frequency_rad_s;
      if (het == 0.0) return 0.0;
      return iota_s == 0.0 ? lo.flux() / 4.0 : 0.0;
    }
  }
  throw std::logic_error("unreachable");
}

/// Total differenced-photocurrent variance
///   <{Delta J_-}^2> = (E_l^2 / 2) * sum_i eta_i * integral j_i^2.
/// Independent of the heterodyne frequency by construction: the beat never
/// enters.
inline double shot_variance(const FieldSpec& lo, const DetectorPair& dets) {
  validate(lo, "lo");
  double acc = 0.0;
  for (const auto& d : dets) {
    validate(d);
    acc += d.efficiency * pulse_square_integral(d.pulse);
  }
  return 0.5 * lo.flux() * acc;
}

/// One-sided shot-noise PSD of J_-:
///   S(f) = E_l^2 * sum_i eta_i |j_hat_i(f)|^2.
inline double shot_psd(const FieldSpec& lo, const DetectorPair& dets,
                       double f_hz) {
  validate(lo, "lo");
  double acc = 0.0;
  for (const auto& d : dets) {
    validate(d);
    acc += d.efficiency * pulse_transfer_mag2(d.pulse, f_hz);
  }
  return lo.flux() * acc;
}

/// Cross-detector current correlation <Delta J_1(t) Delta J_2(t+tau)>.
/// Vanishes for coherent inputs. Under the image-band hypothesis the excess
/// beat enters the two ports with opposite sign, giving an anticorrelation
/// of half the per-detector shot weight; combined with the matching
/// per-detector excess this doubles the J_- noise (the 3 dB claim).
inline double cross_correlation(const FieldSpec& lo, const DetectorPair& dets,
                                NoiseModel model, double tau_s) {
  switch (model) {
    case NoiseModel::coherence:
    case NoiseModel::classical_noiseless:
      return 0.0;
    case NoiseModel::image_band: {
      validate(lo, "lo");
      validate(dets[0]);
      validate(dets[1]);
      const double eta2 = dets[0].efficiency * dets[1].efficiency;
      return -0.25 * eta2 * lo.flux() *
             pulse_cross_autocorr(dets[0].pulse, dets[1].pulse, tau_s);
    }
  }
  throw std::logic_error("unreachable");
}

/// Predicted heterodyne-minus-homodyne noise-floor difference in dB.
/// Coherence: zero. ImageBand: 10 log10(1 + eta_c * V^2) with V the mean
/// per-detector visibility; vacuum leakage through imperfect collection and
/// mode matching dilutes the excess.
inline double floor_difference_db(NoiseModel model, const OpticalPath& path) {
  validate(path);
  switch (model) {
    case NoiseModel::coherence:
    case NoiseModel::classical_noiseless:
      return 0.0;
    case NoiseModel::image_band: {
      const double v = path.mean_visibility();
      return 10.0 * std::log10(1.0 + path.collection_efficiency * v * v);
    }
  }
  throw std::logic_error("unreachable");
}

/// Sample autocorrelation of one channel at a nonnegative lag, mean removed,
/// normalized by the number of overlapping pairs.
inline double direct_autocorrelation(std::span<const double> x,
                                     double sample_rate_hz, double tau_s) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto lag = std::llround(tau_s * sample_rate_hz);
  if (lag < 0 || lag >= n)
    throw std::out_of_range("direct_autocorrelation: lag " +
                            std::to_string(lag) + " exceeds trace length " +
                            std::to_string(n));
  const double m = detail::kahan_mean(x);
  detail::KahanSum s;
  for (std::ptrdiff_t k = 0; k + lag < n; ++k)
    s.add((x[k] - m) * (x[k + lag] - m));
  return s.sum / static_cast<double>(n - lag);
}

/// The four terms of the differenced-current autocorrelation
///   <DJ- DJ-> = <DJ1 DJ1> + <DJ2 DJ2> - <DJ1 DJ2> - <DJ2 DJ1>.
struct AutocorrTerms {
  double j1_j1 = 0.0;
  double j2_j2 = 0.0;
  double j1_j2 = 0.0;
  double j2_j1 = 0.0;
  double combined() const { return j1_j1 + j2_j2 - j1_j2 - j2_j1; }
};

inline AutocorrTerms autocorr_decomposition(std::span<const double> j1,
                                            std::span<const double> j2,
                                            double sample_rate_hz,
                                            double tau_s) {
  if (j1.size() != j2.size())
    throw std::invalid_argument("autocorr_decomposition: channel lengths differ");
  const auto n = static_cast<std::ptrdiff_t>(j1.size());
  const auto lag = std::llround(tau_s * sample_rate_hz);
  if (lag < 0 || lag >= n)
    throw std::out_of_range("autocorr_decomposition: lag " +
                            std::to_string(lag) + " exceeds trace length " +
                            std::to_string(n));
  const double m1 = detail::kahan_mean(j1);
  const double m2 = detail::kahan_mean(j2);
  detail::KahanSum c11, c22, c12, c21;
  for (std::ptrdiff_t k = 0; k + lag < n; ++k) {
    const double a = j1[k] - m1;
    const double b = j2[k] - m2;
    const double al = j1[k + lag] - m1;
    const double bl = j2[k + lag] - m2;
    c11.add(a * al);
    c22.add(b * bl);
    c12.add(a * bl);
    c21.add(b * al);
  }
  const double norm = static_cast<double>(n - lag);
  return AutocorrTerms{c11.sum / norm, c22.sum / norm, c12.sum / norm,
                       c21.sum / norm};
}

}  // namespace hetsim
