#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hetsim {

namespace constants {
inline constexpr double planck_js = 6.62607015e-34;
inline constexpr double light_speed_ms = 299792458.0;
inline constexpr double electron_charge_c = 1.602176634e-19;
}  // namespace constants

/// Monochromatic coherent field in photon-flux units: |flux_amplitude|^2 is
/// the photon rate in 1/s.
struct FieldSpec {
  double frequency_rad_s = 0.0;   // optical angular frequency, > 0
  double flux_amplitude = 0.0;    // sqrt(photons/s), >= 0
  double phase_rad = 0.0;

  double flux() const { return flux_amplitude * flux_amplitude; }
};

/// Beat configuration of the two-field mixer. het_frequency_rad_s == 0 is
/// homodyne operation, anything else is heterodyne.
struct BeatConfig {
  double het_frequency_rad_s = 0.0;  // omega_s - omega_l
  double relative_phase_rad = 0.0;

  bool homodyne() const { return het_frequency_rad_s == 0.0; }
};

/// Mode-matching budget of the optical path. Collection efficiency folds in
/// all optical loss including photodiode quantum efficiency; visibilities
/// are the per-detector fringe visibilities.
struct OpticalPath {
  double collection_efficiency = 1.0;
  double visibility_1 = 1.0;
  double visibility_2 = 1.0;

  double mean_visibility() const { return 0.5 * (visibility_1 + visibility_2); }
};

struct PortIntensities {
  double i1 = 0.0;  // photons/s at detector 1
  double i2 = 0.0;  // photons/s at detector 2
};

inline void validate(const FieldSpec& f, const char* what) {
  if (!(f.flux_amplitude >= 0.0))
    throw std::domain_error(std::string(what) + ": flux_amplitude must be >= 0");
  if (!(f.frequency_rad_s > 0.0))
    throw std::domain_error(std::string(what) + ": frequency must be > 0");
}

inline void validate(const OpticalPath& p) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(p.collection_efficiency))
    throw std::domain_error("OpticalPath: collection_efficiency must be in [0,1]");
  if (!in_unit(p.visibility_1) || !in_unit(p.visibility_2))
    throw std::domain_error("OpticalPath: visibility must be in [0,1]");
}

/// Baseband beat note: e1*cos(omega t) + e2*sin(omega t).
inline double beat_signal(double e1, double e2, double omega_rad_s, double t_s) {
  return e1 * std::cos(omega_rad_s * t_s) + e2 * std::sin(omega_rad_s * t_s);
}

/// Photon rate of an optical beam: P * lambda / (h c).
inline double photon_rate_from_power(double power_w, double wavelength_m) {
  if (!(wavelength_m > 0.0))
    throw std::domain_error("photon_rate_from_power: wavelength must be > 0");
  if (!(power_w >= 0.0))
    throw std::domain_error("photon_rate_from_power: power must be >= 0");
  return power_w * wavelength_m /
         (constants::planck_js * constants::light_speed_ms);
}

inline double optical_angular_frequency(double wavelength_m) {
  if (!(wavelength_m > 0.0))
    throw std::domain_error("optical_angular_frequency: wavelength must be > 0");
  return 2.0 * std::numbers::pi * constants::light_speed_ms / wavelength_m;
}

/// Field with a given optical power at a given wavelength.
inline FieldSpec field_from_power(double power_w, double wavelength_m,
                                  double phase_rad = 0.0) {
  return FieldSpec{optical_angular_frequency(wavelength_m),
                   std::sqrt(photon_rate_from_power(power_w, wavelength_m)),
                   phase_rad};
}

inline BeatConfig make_beat(const FieldSpec& signal, const FieldSpec& lo,
                            double relative_phase_rad = 0.0) {
  return BeatConfig{signal.frequency_rad_s - lo.frequency_rad_s,
                    relative_phase_rad};
}

/// Strong-LO check used by callers that want to warn (not reject) when the
/// oscillator is not dominant. Threshold ratio is 100.
inline bool strong_lo_ok(const FieldSpec& signal, const FieldSpec& lo,
                         double min_ratio = 100.0) {
  if (signal.flux() == 0.0) return true;
  return lo.flux() >= min_ratio * signal.flux();
}

/// Mean intensities at the two output ports of the balanced mixer:
///   I_{1,2}(t) = 1/2 [E_s^2 + E_l^2 +- 2 V_i E_l E_s sin(Omega t + phi)].
/// The interference sign is opposite between ports; visibility enters as a
/// multiplicative factor on the interference term only.
inline PortIntensities output_intensities(const FieldSpec& signal,
                                          const FieldSpec& lo,
                                          const BeatConfig& beat,
                                          const OpticalPath& path, double t_s) {
  validate(signal, "signal");
  validate(lo, "lo");
  validate(path);
  const double direct = signal.flux() + lo.flux();
  const double fringe = std::sin(beat.het_frequency_rad_s * t_s +
                                 beat.relative_phase_rad);
  const double cross = 2.0 * lo.flux_amplitude * signal.flux_amplitude * fringe;
  return PortIntensities{0.5 * (direct + path.visibility_1 * cross),
                         0.5 * (direct - path.visibility_2 * cross)};
}

}  // namespace hetsim
