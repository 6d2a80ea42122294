#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fpfts/detail/least_squares.hpp"
#include "fpfts/detail/numeric.hpp"
#include "fpfts/errors.hpp"
#include "fpfts/quantum_interference.hpp"
#include "fpfts/spectral_analysis.hpp"
#include "fpfts/spectrum.hpp"
#include "fpfts/wavepacket.hpp"

namespace fpfts {

// Photodiode saturation: the reference power is clamped at +13 dBm.
inline const double kMaxReferencePower = dbm_to_watts(13.0);

/// Bright-beam heterodyne on a linear photodiode read out by an ESA.
///
/// The trace is the expected beat line plus a flat pedestal (electrical floor and
/// RIN of both beams). With averages > 0 the pedestal of every bin is the mean of
/// that many exponential power readings, i.e. Gamma distributed.
struct ClassicalBeatConfig {
  double p_ref = kMaxReferencePower;
  double p_test = 1e-9;
  double noise_floor = 1e-18;
  double rin_level = 1e-15;
  double esa_span = 250e6;
  std::size_t esa_points = 2001;
  unsigned averages = 100;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(p_ref >= 0.0) || !std::isfinite(p_ref)) throw InvalidParameter(fmt::format("p_ref must be >= 0 (got {})", p_ref));
    if (!(p_test >= 0.0) || !std::isfinite(p_test))
      throw InvalidParameter(fmt::format("p_test must be >= 0 (got {})", p_test));
    if (!(noise_floor >= 0.0) || !std::isfinite(noise_floor))
      throw InvalidParameter(fmt::format("noise_floor must be >= 0 (got {})", noise_floor));
    if (!(rin_level >= 0.0) || !std::isfinite(rin_level))
      throw InvalidParameter(fmt::format("rin_level must be >= 0 (got {})", rin_level));
    if (!(esa_span > 0.0) || !std::isfinite(esa_span))
      throw InvalidParameter(fmt::format("esa_span must be positive (got {})", esa_span));
    if (esa_points < 16) throw InvalidParameter(fmt::format("esa_points must be >= 16 (got {})", esa_points));
  }

  double effective_p_ref() const noexcept { return std::min(p_ref, kMaxReferencePower); }
  double pedestal() const noexcept {
    const double pr = effective_p_ref();
    return noise_floor + rin_level * (pr * pr + p_test * p_test);
  }

  bool operator==(const ClassicalBeatConfig&) const = default;
};

// I = I1 + I2 + 2 sqrt(I1 I2) |g12| cos(phi)
inline double classical_intensity(double i1, double i2, double g12, double phi) {
  if (!(i1 >= 0.0) || !(i2 >= 0.0)) throw InvalidParameter("intensities must be >= 0");
  if (!(std::abs(g12) <= 1.0)) throw InvalidParameter(fmt::format("|g12| must be <= 1 (got {})", g12));
  return i1 + i2 + 2.0 * std::sqrt(i1 * i2) * std::abs(g12) * std::cos(phi);
}

/// Unit-area beat lineshape on [0, f_max]: the cross-correlation of the two packets'
/// power spectra, folded onto positive frequencies.
inline Spectrum beat_lineshape(const SourcePair& pair, double f_max, std::size_t points) {
  if (points < 2) throw InvalidParameter("beat_lineshape: need at least two points");
  const auto grid = spectral_grid({pair.reference, pair.test});
  const Spectrum ref = spectrum_of(pair.reference, grid);
  const Spectrum test = spectrum_of(pair.test, grid);

  Spectrum out{0.0, f_max / static_cast<double>(points - 1), std::vector<double>(points, 0.0)};
  std::vector<std::size_t> support;
  const double cut = 1e-14 * test.peak_value();
  for (std::size_t j = 0; j < test.size(); ++j)
    if (test.values[j] > cut) support.push_back(j);
  auto correlation = [&](double lag) {
    double acc = 0.0;
    for (std::size_t j : support) acc += test.values[j] * ref.at(test.frequency(j) - lag);
    return acc * test.f_step;
  };
  for (std::size_t k = 0; k < points; ++k) {
    const double nu = out.frequency(k);
    out.values[k] = correlation(nu) + (k == 0 ? 0.0 : correlation(-nu));
  }
  return normalized_area(std::move(out));
}

inline Spectrum simulate_esa_spectrum(const SourcePair& pair, const ClassicalBeatConfig& cfg) {
  cfg.validate();
  pair.validate();
  const double beat = std::abs(pair.detuning());
  if (beat > cfg.esa_span)
    throw OutOfSpan(fmt::format("beat frequency {} Hz lies outside the ESA span [0, {}] Hz", beat, cfg.esa_span));

  Spectrum trace = beat_lineshape(pair, cfg.esa_span, cfg.esa_points);
  const double line_scale = cfg.effective_p_ref() * cfg.p_test;
  const double pedestal = cfg.pedestal();
  for (std::size_t k = 0; k < trace.size(); ++k) {
    double noise = pedestal;
    if (cfg.averages > 0 && pedestal > 0.0) {
      std::mt19937_64 rng(detail::stream_seed(cfg.seed, k));
      std::gamma_distribution<double> gamma(static_cast<double>(cfg.averages), 1.0 / static_cast<double>(cfg.averages));
      noise *= gamma(rng);
    }
    trace.values[k] = line_scale * trace.values[k] + noise;
  }
  return trace;
}

struct GaussianFit {
  double amplitude = 0.0;
  double center = 0.0;
  double width = 0.0;  // standard deviation
  double floor = 0.0;
  double r_squared = 0.0;
};

/// Least-squares fit of a Gaussian line on a flat floor,
///   y = a exp(-(f - c)^2 / (2 s^2)) + b.
/// center_hint seeds the center (the strongest bin otherwise).
inline GaussianFit gaussian_fit_r2(const Spectrum& spec, std::optional<double> center_hint = std::nullopt) {
  spec.validate();
  const std::size_t n = spec.size();
  if (n < 5) throw FitFailure("gaussian fit: need at least five points", 0.0);
  const double y_max = *std::max_element(spec.values.begin(), spec.values.end());
  const double y_min = *std::min_element(spec.values.begin(), spec.values.end());
  if (!(y_max > y_min)) throw FitFailure("gaussian fit: spectrum is flat, no peak to fit", 0.0);

  // Work in bins and units of the maximum to keep the problem well scaled.
  std::vector<double> y(n);
  for (std::size_t k = 0; k < n; ++k) y[k] = spec.values[k] / y_max;
  std::vector<double> sorted = y;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
  const double floor0 = sorted[n / 2];

  std::size_t peak = spec.peak_index();
  if (center_hint) {
    const double pos = (*center_hint - spec.f_start) / spec.f_step;
    const auto hint = static_cast<std::size_t>(std::clamp(std::round(pos), 0.0, static_cast<double>(n - 1)));
    // Strongest bin within a few bins of the hint.
    peak = hint;
    const std::size_t lo = hint >= 5 ? hint - 5 : 0;
    const std::size_t hi = std::min(n - 1, hint + 5);
    for (std::size_t k = lo; k <= hi; ++k)
      if (y[k] > y[peak]) peak = k;
  }
  const double amp0 = std::max(y[peak] - floor0, 1e-6);
  std::size_t left = peak;
  std::size_t right = peak;
  const double half_level = floor0 + 0.5 * amp0;
  while (left > 0 && y[left] > half_level) --left;
  while (right + 1 < n && y[right] > half_level) ++right;
  const double sigma0 = std::max(1.0, static_cast<double>(right - left) / 2.355);

  detail::LsqProblem problem;
  problem.n_residuals = static_cast<int>(n);
  problem.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double s2 = p[2] * p[2];
    for (std::size_t k = 0; k < n; ++k) {
      const double d = static_cast<double>(k) - p[1];
      r[static_cast<Eigen::Index>(k)] = p[0] * std::exp(-d * d / (2.0 * s2)) + p[3] - y[k];
    }
  };
  problem.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
    const double s2 = p[2] * p[2];
    for (std::size_t k = 0; k < n; ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      const double d = static_cast<double>(k) - p[1];
      const double g = std::exp(-d * d / (2.0 * s2));
      j(row, 0) = g;
      j(row, 1) = p[0] * g * d / s2;
      j(row, 2) = p[0] * g * d * d / (s2 * p[2]);
      j(row, 3) = 1.0;
    }
  };
  Eigen::VectorXd start(4);
  start << amp0, static_cast<double>(peak), sigma0, floor0;
  const auto sol = detail::solve_least_squares(problem, start);
  const double rms = std::sqrt(sol.sum_squares / static_cast<double>(n)) * y_max;
  if (!sol.converged || !(std::abs(sol.params[2]) > 0.0))
    throw FitFailure("gaussian fit did not converge", rms);

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double total = 0.0;
  for (double v : y) total += (v - mean) * (v - mean);

  GaussianFit fit;
  fit.amplitude = sol.params[0] * y_max;
  fit.center = spec.f_start + sol.params[1] * spec.f_step;
  fit.width = std::abs(sol.params[2]) * spec.f_step;
  fit.floor = sol.params[3] * y_max;
  fit.r_squared = 1.0 - sol.sum_squares / total;
  return fit;
}

struct ClassicalPoint {
  double mu = 0.0;
  double p_test = 0.0;
  double r_squared = 0.0;
};

/// R^2 of the Gaussian fit versus the test photon flux. Every point shares the
/// template's seed, so the noise realization is common and only the line changes.
inline std::vector<ClassicalPoint> classical_effectiveness_sweep(const SourcePair& pair,
                                                                 const ClassicalBeatConfig& cfg_template,
                                                                 std::span<const double> mu_values,
                                                                 double wavelength, double gate_width,
                                                                 unsigned threads = 0) {
  cfg_template.validate();
  if (mu_values.empty()) throw InvalidParameter("classical sweep: empty mu ladder");
  for (double mu : mu_values)
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidParameter(fmt::format("classical sweep: mu must be positive (got {})", mu));
  std::vector<ClassicalPoint> out(mu_values.size());
  const double beat = std::abs(pair.detuning());
  detail::parallel_for(mu_values.size(), threads, [&](std::size_t i) {
    ClassicalBeatConfig cfg = cfg_template;
    cfg.p_test = photon_flux_to_power(mu_values[i], wavelength, gate_width).power_watts;
    const auto trace = simulate_esa_spectrum(pair, cfg);
    out[i] = {mu_values[i], cfg.p_test, gaussian_fit_r2(trace, beat).r_squared};
  });
  return out;
}

}  // namespace fpfts
