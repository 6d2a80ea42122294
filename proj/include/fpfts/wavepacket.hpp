#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fpfts/detail/fft.hpp"
#include "fpfts/detail/numeric.hpp"
#include "fpfts/errors.hpp"
#include "fpfts/spectrum.hpp"

namespace fpfts {

// Frequencies are offsets from the reference laser's optical carrier; the carrier
// itself is never sampled.

enum class Waveform { sinusoid };

inline std::string to_string(Waveform w) {
  switch (w) {
    case Waveform::sinusoid:
      return "sinusoid";
  }
  return "unknown";
}

inline Waveform waveform_from_string(const std::string& tag) {
  if (tag == "sinusoid") return Waveform::sinusoid;
  throw InvalidParameter("unsupported phase-modulation waveform '" + tag + "'");
}

struct PhaseModulation {
  Waveform waveform = Waveform::sinusoid;
  double frequency_hz = 0.0;
  double index_rad = 0.0;

  bool operator==(const PhaseModulation&) const = default;
};

struct TimeGrid {
  double t_start = 0.0;
  double t_step = 1.0;
  std::size_t n_points = 0;

  double time(std::size_t k) const noexcept { return t_start + static_cast<double>(k) * t_step; }
  double t_end() const noexcept { return n_points == 0 ? t_start : time(n_points - 1); }
  double sample_rate() const noexcept { return 1.0 / t_step; }

  void validate() const {
    if (n_points < 1) throw InvalidParameter("time grid: n_points must be >= 1");
    if (!(t_step > 0.0) || !std::isfinite(t_step)) throw InvalidParameter("time grid: t_step must be positive");
    if (!std::isfinite(t_start)) throw InvalidParameter("time grid: t_start must be finite");
  }
};

/// Unit-normalized single-photon temporal mode
///
///   f(t) = N exp(-t^2 / (4 tau_c^2)) exp(-i 2 pi f0 t) exp(i beta sin(2 pi f_m t)),
///
/// so |f|^2 is a Gaussian with standard deviation tau_c and integral one.
class WavePacket {
 public:
  double center_frequency() const noexcept { return center_frequency_; }
  double coherence_time() const noexcept { return coherence_time_; }
  double amplitude_scale() const noexcept { return amplitude_scale_; }
  const std::optional<PhaseModulation>& modulation() const noexcept { return modulation_; }

  double envelope(double t) const noexcept {
    return amplitude_scale_ * std::exp(-t * t / (4.0 * coherence_time_ * coherence_time_));
  }

  double phase(double t) const noexcept {
    double ph = -detail::kTwoPi * center_frequency_ * t;
    if (modulation_) ph += modulation_->index_rad * std::sin(detail::kTwoPi * modulation_->frequency_hz * t);
    return ph;
  }

  std::complex<double> operator()(double t) const noexcept { return std::polar(envelope(t), phase(t)); }

  // Power-spectrum standard deviation of the unmodulated envelope: 1 / (4 pi tau_c).
  double envelope_bandwidth() const noexcept { return 1.0 / (4.0 * detail::kPi * coherence_time_); }

  // Highest baseband frequency carrying non-negligible power.
  double max_baseband_frequency() const noexcept {
    double f = std::abs(center_frequency_) + 5.0 * envelope_bandwidth();
    if (modulation_) f += (modulation_->index_rad + 1.0) * modulation_->frequency_hz;
    return f;
  }

  // Fraction of |f|^2 lying outside [a, b].
  double mass_outside(double a, double b) const noexcept {
    const double s = std::sqrt(2.0) * coherence_time_;
    return 0.5 * std::erfc(b / s) + 0.5 * std::erfc(-a / s);
  }

  bool operator==(const WavePacket&) const = default;

 private:
  friend WavePacket make_gaussian(double center_frequency, double coherence_time);
  friend WavePacket apply_phase_modulation(const WavePacket&, Waveform, double, double);

  double center_frequency_ = 0.0;
  double coherence_time_ = 1.0;
  double amplitude_scale_ = 1.0;
  std::optional<PhaseModulation> modulation_;
};

inline WavePacket make_gaussian(double center_frequency, double coherence_time) {
  if (!(coherence_time > 0.0) || !std::isfinite(coherence_time))
    throw InvalidParameter(fmt::format("coherence_time must be positive (got {})", coherence_time));
  if (!std::isfinite(center_frequency)) throw InvalidParameter("center_frequency must be finite");
  WavePacket p;
  p.center_frequency_ = center_frequency;
  p.coherence_time_ = coherence_time;
  p.amplitude_scale_ = std::pow(2.0 * detail::kPi * coherence_time * coherence_time, -0.25);
  return p;
}

inline WavePacket apply_phase_modulation(const WavePacket& packet, Waveform waveform, double mod_frequency,
                                         double mod_index) {
  if (waveform != Waveform::sinusoid) throw InvalidParameter("unsupported phase-modulation waveform");
  if (!(mod_frequency > 0.0) || !std::isfinite(mod_frequency))
    throw InvalidParameter(fmt::format("modulation frequency must be positive (got {})", mod_frequency));
  if (!(mod_index >= 0.0) || !std::isfinite(mod_index))
    throw InvalidParameter(fmt::format("modulation index must be >= 0 (got {})", mod_index));
  if (packet.modulation_) throw InvalidParameter("packet is already phase modulated");
  WavePacket out = packet;
  out.modulation_ = PhaseModulation{waveform, mod_frequency, mod_index};
  return out;
}

inline std::vector<std::complex<double>> evaluate(const WavePacket& packet, const TimeGrid& grid) {
  grid.validate();
  std::vector<std::complex<double>> out(grid.n_points);
  for (std::size_t k = 0; k < grid.n_points; ++k) out[k] = packet(grid.time(k));
  return out;
}

// Sample rate >= 8x the largest baseband frequency, span 16x the longest coherence time.
inline TimeGrid default_grid(std::span<const WavePacket> packets) {
  if (packets.empty()) throw InvalidParameter("default_grid: no packets");
  double f_max = 0.0;
  double tau_max = 0.0;
  for (const auto& p : packets) {
    f_max = std::max(f_max, p.max_baseband_frequency());
    tau_max = std::max(tau_max, p.coherence_time());
  }
  const double step = 1.0 / (8.0 * f_max);
  const double span = 16.0 * tau_max;
  const auto n = static_cast<std::size_t>(std::ceil(span / step)) + 1;
  return {-0.5 * span, step, n};
}

inline TimeGrid default_grid(std::initializer_list<WavePacket> packets) {
  return default_grid(std::span<const WavePacket>(packets.begin(), packets.size()));
}

// default_grid widened fourfold: a finer frequency step for spectra.
inline TimeGrid spectral_grid(std::initializer_list<WavePacket> packets) {
  TimeGrid grid = default_grid(packets);
  grid.n_points *= 4;
  grid.t_start *= 4.0;
  return grid;
}

// Grid for overlap integrals of products f(u) f*(u + tau). The carrier cancels in
// those products, so only the envelope and the modulation need resolving.
inline TimeGrid quadrature_grid(std::span<const WavePacket> packets) {
  if (packets.empty()) throw InvalidParameter("quadrature_grid: no packets");
  double tau_min = packets.front().coherence_time();
  double tau_max = tau_min;
  double step = tau_min / 8.0;
  for (const auto& p : packets) {
    tau_min = std::min(tau_min, p.coherence_time());
    tau_max = std::max(tau_max, p.coherence_time());
    step = std::min(step, p.coherence_time() / 8.0);
    if (p.modulation() && p.modulation()->index_rad > 0.0)
      step = std::min(step, 1.0 / (16.0 * (p.modulation()->index_rad + 1.0) * p.modulation()->frequency_hz));
  }
  const double span = 16.0 * tau_max;
  const auto n = static_cast<std::size_t>(std::ceil(span / step)) + 1;
  return {-0.5 * span, step, n};
}

inline TimeGrid quadrature_grid(std::initializer_list<WavePacket> packets) {
  return quadrature_grid(std::span<const WavePacket>(packets.begin(), packets.size()));
}

/// |phi(nu)|^2 with phi(nu) = integral f(t) exp(+i 2 pi nu t) dt, so a packet with
/// center_frequency f0 peaks at +f0. Two-sided grid in ascending frequency; the
/// integrated density equals the discrete norm sum |f|^2 dt (Parseval).
inline Spectrum spectrum_of(const WavePacket& packet, const TimeGrid& grid) {
  grid.validate();
  if (grid.n_points < 2) throw InvalidParameter("spectrum_of: grid needs at least two points");
  const double required = 2.0 * packet.max_baseband_frequency();
  if (grid.sample_rate() < required)
    throw AliasingError(fmt::format("spectrum_of: sample rate {} Hz aliases the packet; need at least {} Hz",
                                    grid.sample_rate(), required),
                        required);
  const std::size_t n = grid.n_points;
  // sum f_k exp(+i...) = conj(sum conj(f_k) exp(-i...)); only the modulus is kept.
  detail::cvec samples(n);
  for (std::size_t k = 0; k < n; ++k) samples[k] = std::conj(packet(grid.time(k)));
  const auto transformed = detail::fft_forward(samples);

  const double df = 1.0 / (static_cast<double>(n) * grid.t_step);
  const std::size_t negatives = n / 2;
  Spectrum out{-static_cast<double>(negatives) * df, df, std::vector<double>(n)};
  const double dt2 = grid.t_step * grid.t_step;
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t src = (m + n - negatives) % n;
    out.values[m] = std::norm(transformed[src]) * dt2;
  }
  return out;
}

}  // namespace fpfts
