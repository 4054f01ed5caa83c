#pragma once
// Closed-form underwater acoustic channel model: Thorp absorption, combined
// spreading/absorption path loss, the classical four-component ambient noise
// spectrum (turbulence, shipping, wind, thermal; see Urick, "Principles of
// Underwater Sound"), link rates over orthogonal sub-channels, and the
// low-probability-of-detection test based on the KL divergence seen by a
// passive eavesdropper.
//
// Unit conventions, fixed across the library:
//   frequency   kHz inside the empirical formulas
//   distance    meters (absorption is converted to dB/m internally)
//   power       watts at the transducer
//   noise       the spectral formulas are empirical dB re uPa; the linear
//               PSD they imply is scaled by `noise_calibration` to land in
//               the same normalized power units as transmit power.

#include <cmath>
#include <span>
#include <stdexcept>

namespace auvcov::acoustics {

struct AcousticParams {
  double frequency_khz = 30.0;  // carrier
  double spreading = 1.5;       // 1 = cylindrical, 2 = spherical
  double bandwidth_hz = 1.0e7;
  double shipping = 0.5;           // activity factor in [0, 1]
  double wind_speed = 0.0;         // m/s
  double noise_calibration = 1.0;  // linear PSD -> normalized power units

  void validate() const {
    if (frequency_khz <= 0.0)
      throw std::domain_error("AcousticParams: frequency must be positive");
    if (spreading < 1.0 || spreading > 2.0)
      throw std::domain_error("AcousticParams: spreading outside [1, 2]");
    if (bandwidth_hz <= 0.0)
      throw std::domain_error("AcousticParams: bandwidth must be positive");
    if (shipping < 0.0 || shipping > 1.0)
      throw std::domain_error("AcousticParams: shipping outside [0, 1]");
    if (wind_speed < 0.0)
      throw std::domain_error("AcousticParams: wind speed negative");
    if (noise_calibration <= 0.0)
      throw std::domain_error("AcousticParams: noise calibration not positive");
  }
};

struct CovertnessParams {
  double epsilon = 0.05;  // detection-error budget; the KL bound is 2 eps^2

  double kl_budget() const { return 2.0 * epsilon * epsilon; }

  void validate() const {
    if (epsilon <= 0.0)
      throw std::domain_error("CovertnessParams: epsilon must be positive");
  }
};

// Thorp's empirical absorption coefficient, dB/km, frequency in kHz.
inline double thorp_absorption_db_per_km(double f_khz) {
  if (f_khz <= 0.0)
    throw std::domain_error("thorp_absorption: frequency must be positive");
  const double f2 = f_khz * f_khz;
  return 0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 +
         0.003;
}

// Combined path loss A(f, d) = d^k * a(f)^d with d in meters. Dimensionless
// once the reference distance of 1 m is absorbed into the calibration.
inline double path_loss(double distance_m, const AcousticParams& p) {
  if (distance_m <= 0.0)
    throw std::domain_error("path_loss: distance must be positive");
  const double alpha_db_per_m =
      thorp_absorption_db_per_km(p.frequency_khz) / 1000.0;
  return std::pow(distance_m, p.spreading) *
         std::pow(10.0, alpha_db_per_m * distance_m / 10.0);
}

inline double channel_gain(double distance_m, const AcousticParams& p) {
  return 1.0 / path_loss(distance_m, p);
}

// Ambient noise PSD in linear units (per Hz). The four components are
// summed in the linear domain; only wind and shipping dominate near 30 kHz.
inline double ambient_noise_psd(const AcousticParams& p) {
  p.validate();
  const double f = p.frequency_khz;
  const double lg = std::log10(f);
  const double turbulence_db = 17.0 - 30.0 * lg;
  const double shipping_db =
      30.0 + 20.0 * p.shipping + 26.0 * lg - 60.0 * std::log10(f + 0.03);
  const double wind_db = 50.0 + 7.5 * std::sqrt(p.wind_speed) + 20.0 * lg -
                         40.0 * std::log10(f + 0.4);
  const double thermal_db = -15.0 + 20.0 * lg;
  return std::pow(10.0, turbulence_db / 10.0) +
         std::pow(10.0, shipping_db / 10.0) + std::pow(10.0, wind_db / 10.0) +
         std::pow(10.0, thermal_db / 10.0);
}

// In-band noise power in normalized units: flat PSD at the carrier times
// receiver bandwidth, scaled by the calibration constant.
inline double noise_power(const AcousticParams& p) {
  return p.noise_calibration * ambient_noise_psd(p) * p.bandwidth_hz;
}

// SNR of the superposed team signal at a passive listener. Selection entries
// are 0/1; only selected transmitters contribute. All spans are indexed by
// AUV and must agree in size.
inline double eavesdropper_snr(std::span<const int> selection,
                               std::span<const double> tx_power_w,
                               std::span<const double> listener_distance_m,
                               const AcousticParams& p) {
  if (selection.size() != tx_power_w.size() ||
      selection.size() != listener_distance_m.size())
    throw std::invalid_argument("eavesdropper_snr: size mismatch");
  double signal = 0.0;
  for (std::size_t i = 0; i < selection.size(); ++i) {
    if (selection[i] == 0) continue;
    if (tx_power_w[i] < 0.0)
      throw std::domain_error("eavesdropper_snr: negative power");
    signal += tx_power_w[i] * channel_gain(listener_distance_m[i], p);
  }
  return signal / noise_power(p);
}

// Achievable rate (bit/s) of one AUV's uplink when `active_count` AUVs share
// the band on orthogonal sub-channels of equal width. Both the bandwidth and
// the in-band noise power are split `active_count` ways.
inline double link_rate(double tx_power_w, double distance_m, int active_count,
                        const AcousticParams& p) {
  if (active_count < 1)
    throw std::domain_error("link_rate: need at least one active AUV");
  if (tx_power_w < 0.0) throw std::domain_error("link_rate: negative power");
  const double sub_band = p.bandwidth_hz / active_count;
  const double sub_noise = noise_power(p) / active_count;
  const double snr = tx_power_w * channel_gain(distance_m, p) / sub_noise;
  return sub_band * std::log2(1.0 + snr);
}

// KL divergence between the eavesdropper's received distributions with and
// without the team transmitting, as a function of the SNR it would see.
// Monotone in gamma_e, zero at zero.
inline double kl_divergence(double gamma_e) {
  if (gamma_e < 0.0) throw std::domain_error("kl_divergence: negative SNR");
  return 0.5 * (std::log1p(gamma_e) - gamma_e / (1.0 + gamma_e));
}

inline bool covert(double kl, const CovertnessParams& c) {
  return kl <= c.kl_budget();
}

}  // namespace auvcov::acoustics
