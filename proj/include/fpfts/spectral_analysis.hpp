#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fpfts/detail/fft.hpp"
#include "fpfts/detail/numeric.hpp"
#include "fpfts/errors.hpp"
#include "fpfts/interferogram.hpp"
#include "fpfts/spectrum.hpp"

namespace fpfts {

enum class Window { rectangular, hann, automatic };

inline std::string to_string(Window w) {
  switch (w) {
    case Window::rectangular:
      return "rectangular";
    case Window::hann:
      return "hann";
    case Window::automatic:
      return "auto";
  }
  return "unknown";
}

inline Window window_from_string(const std::string& tag) {
  if (tag == "rectangular") return Window::rectangular;
  if (tag == "hann") return Window::hann;
  if (tag == "auto") return Window::automatic;
  throw InvalidParameter("unknown window '" + tag + "' (expected rectangular, hann or auto)");
}

inline constexpr std::size_t kZeroPadFactor = 4;
inline constexpr std::size_t kCentroidHalfWidth = 3;
inline constexpr double kCountedNoiseFloor = 1e-3;
inline constexpr double kAnalyticNoiseFloor = 1e-8;
// Beat bins below this multiple of the median level are treated as noise.
inline constexpr double kSupportThreshold = 5.0;

struct FtsResult {
  // Magnitude of the transformed AC part, an estimate of the beat lineshape.
  Spectrum beat_spectrum;
  double beat_frequency = 0.0;
  // Test lineshape relative to its own center, two-sided, unit area.
  std::optional<Spectrum> test_spectrum;
  double resolution = 0.0;
  std::string window_tag;
  InterferogramKind source_kind = InterferogramKind::analytic;
  std::size_t input_length = 0;
  std::size_t padded_length = 0;
  double dc_level = 0.0;
  double peak_to_floor = 0.0;
  double noise_floor = 0.0;
  std::vector<std::string> warnings;
};

inline std::vector<double> window_weights(Window w, std::size_t n) {
  std::vector<double> out(n, 1.0);
  if (w == Window::hann && n > 1)
    for (std::size_t k = 0; k < n; ++k)
      out[k] = 0.5 * (1.0 - std::cos(detail::kTwoPi * static_cast<double>(k) / static_cast<double>(n - 1)));
  return out;
}

/// Removes the DC level (the sample mean), windows, zero-pads to the next power of
/// two >= 4x the input length and transforms. The one-sided magnitude, scaled by the
/// delay step, is the beat spectrum; the power-weighted centroid of its dominant line
/// over +/- 3 padded bins is the beat frequency.
inline FtsResult fts_transform(const Interferogram& ig, Window window = Window::automatic) {
  ig.validate();
  const auto values = ig.values();
  if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; }))
    throw DegenerateInput("fts_transform: interferogram is identically zero");
  if (window == Window::automatic)
    window = ig.kind == InterferogramKind::counts ? Window::hann : Window::rectangular;

  const std::size_t n = values.size();
  const double step = ig.delay_step();
  double dc = 0.0;
  for (double v : values) dc += v;
  dc /= static_cast<double>(n);

  std::vector<double> ac(n);
  double ac_energy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ac[k] = dc - values[k];
    ac_energy += ac[k] * ac[k];
  }
  // A flat curve leaves only rounding residue.
  if (ac_energy <= 1e-24 * dc * dc * static_cast<double>(n)) std::fill(ac.begin(), ac.end(), 0.0);
  const auto w = window_weights(window, n);
  for (std::size_t k = 0; k < n; ++k) ac[k] *= w[k];

  const std::size_t padded = detail::next_pow2(kZeroPadFactor * n);
  const auto transformed = detail::fft_real_padded(ac, padded);

  FtsResult out;
  out.window_tag = to_string(window);
  out.source_kind = ig.kind;
  out.input_length = n;
  out.padded_length = padded;
  out.dc_level = dc;
  out.resolution = 1.0 / (static_cast<double>(n) * step);
  out.beat_spectrum.f_start = 0.0;
  out.beat_spectrum.f_step = 1.0 / (static_cast<double>(padded) * step);
  out.beat_spectrum.values.resize(padded / 2 + 1);
  for (std::size_t m = 0; m < out.beat_spectrum.size(); ++m)
    out.beat_spectrum.values[m] = std::abs(transformed[m]) * step;

  const auto& spec = out.beat_spectrum.values;
  std::size_t peak = 1;
  for (std::size_t m = 1; m < spec.size(); ++m)
    if (spec[m] > spec[peak]) peak = m;
  if (spec[peak] > 0.0) {
    std::vector<double> power(spec.size());
    for (std::size_t m = 0; m < spec.size(); ++m) power[m] = spec[m] * spec[m];
    out.beat_frequency = detail::peak_centroid(power, peak, kCentroidHalfWidth) * out.beat_spectrum.f_step;
    std::vector<double> sorted(spec.begin() + 1, spec.end());
    const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    out.peak_to_floor = *mid > 0.0 ? spec[peak] / *mid : std::numeric_limits<double>::infinity();
  }
  return out;
}

/// Wiener deconvolution of the beat spectrum by the known reference lineshape.
///
/// The beat line is the test lineshape convolved with the mirrored reference
/// lineshape centered at the beat frequency; dividing that kernel out (regularized by
/// noise_floor times the kernel's peak transfer power) leaves the test lineshape at
/// baseband. A test lying below the reference comes out mirrored; see
/// resolve_ambiguity.
inline FtsResult deconvolve_reference(FtsResult result, const Spectrum& reference,
                                      std::optional<double> noise_floor = std::nullopt) {
  reference.validate();
  const double floor = noise_floor.value_or(
      result.source_kind == InterferogramKind::counts ? kCountedNoiseFloor : kAnalyticNoiseFloor);
  if (!(floor > 0.0) || !std::isfinite(floor))
    throw InvalidParameter(fmt::format("noise_floor must be positive (got {})", floor));
  result.noise_floor = floor;

  const std::size_t padded = result.padded_length;
  const double df = result.beat_spectrum.f_step;
  const std::size_t half = padded / 2;
  Spectrum test{-static_cast<double>(half) * df, df, std::vector<double>(padded, 0.0)};

  const double ref_center = centroid(reference);
  const double ref_width = rms_width(reference);
  if (ref_width < result.resolution) {
    result.warnings.push_back(fmt::format(
        "reference width {} Hz is below one resolution bin ({} Hz); deconvolution is ill-posed, treating the "
        "reference as a delta",
        ref_width, result.resolution));
    for (std::size_t j = 0; j < padded; ++j) test.values[j] = result.beat_spectrum.at(test.frequency(j) + result.beat_frequency);
    result.test_spectrum = normalized_area(std::move(test));
    return result;
  }

  // Counting noise leaves a white floor under the whole band. Keep only the bins
  // standing clear of it (dilated by a few reference widths), floor removed.
  const auto& b = result.beat_spectrum.values;
  std::vector<double> sorted(b.begin() + 1, b.end());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double floor_level = *mid;
  const auto margin = static_cast<std::ptrdiff_t>(std::ceil(3.0 * ref_width / df)) + 2;
  std::vector<char> keep(b.size(), 0);
  for (std::size_t m = 0; m < b.size(); ++m) {
    if (!(b[m] > kSupportThreshold * floor_level)) continue;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(m) - margin);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(b.size()) - 1, static_cast<std::ptrdiff_t>(m) + margin);
    for (auto j = lo; j <= hi; ++j) keep[static_cast<std::size_t>(j)] = 1;
  }

  detail::cvec beat(padded, {0.0, 0.0});
  for (std::size_t m = 0; m <= half && m < b.size(); ++m)
    if (keep[m]) beat[m] = std::max(0.0, b[m] - floor_level);

  detail::cvec kernel(padded, {0.0, 0.0});
  double kernel_sum = 0.0;
  for (std::size_t m = 0; m < padded; ++m) {
    const double nu = (m < half ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(padded)) * df;
    const double v = reference.at(ref_center - (nu - result.beat_frequency));
    kernel[m] = v;
    kernel_sum += v;
  }
  if (!(kernel_sum > 0.0)) throw InvalidInput("deconvolve_reference: reference lineshape has no support on the beat grid");
  for (auto& v : kernel) v /= kernel_sum;

  const auto beat_t = detail::fft_forward(beat);
  const auto kernel_t = detail::fft_forward(kernel);
  double peak_transfer = 0.0;
  for (const auto& k : kernel_t) peak_transfer = std::max(peak_transfer, std::norm(k));
  const double reg = floor * peak_transfer;
  detail::cvec quotient(padded);
  for (std::size_t m = 0; m < padded; ++m)
    quotient[m] = beat_t[m] * std::conj(kernel_t[m]) / (std::norm(kernel_t[m]) + reg);
  const auto recovered = detail::fft_inverse(quotient);

  for (std::size_t j = 0; j < padded; ++j) {
    const std::size_t src = (j + padded - half) % padded;
    test.values[j] = std::max(0.0, recovered[src].real());
  }
  result.test_spectrum = normalized_area(std::move(test));
  return result;
}

/// Signed test-minus-reference frequency from two runs, the second with the
/// reference raised by reference_shift. A shrinking beat puts the test above the
/// reference.
inline double resolve_ambiguity(const FtsResult& run_a, const FtsResult& run_b, double reference_shift) {
  if (!(reference_shift > 0.0) || !(reference_shift < run_a.beat_frequency))
    throw InvalidParameter(fmt::format("reference shift must lie in (0, {}) Hz (got {})", run_a.beat_frequency,
                                       reference_shift));
  const double change = run_b.beat_frequency - run_a.beat_frequency;
  const double tolerance = 2.0 * run_a.resolution;
  if (std::abs(std::abs(change) - reference_shift) > tolerance)
    throw AmbiguityUnresolved(fmt::format(
        "beat moved by {} Hz but the reference was shifted by {} Hz (tolerance {} Hz)", change, reference_shift,
        tolerance));
  return change < 0.0 ? run_a.beat_frequency : -run_a.beat_frequency;
}

struct UnfoldCheck {
  bool unfolded = false;
  std::string diagnostic;
};

// test_width is the full width at 1/e of the test spectrum.
inline UnfoldCheck check_unfolded(double beat_frequency, double test_width) {
  UnfoldCheck out;
  out.unfolded = beat_frequency > test_width;
  if (out.unfolded)
    out.diagnostic = fmt::format("beat {} Hz exceeds test width {} Hz; spectrum is unfolded", beat_frequency, test_width);
  else
    out.diagnostic = fmt::format(
        "folding risk: beat {} Hz does not exceed test width {} Hz, so the lower wing folds through zero frequency "
        "onto the upper wing; move the reference further from the test",
        beat_frequency, test_width);
  return out;
}

inline constexpr double kPlanck = 6.62607015e-34;       // J s
inline constexpr double kSpeedOfLight = 299792458.0;    // m / s

struct PowerReading {
  double mu = 0.0;
  double wavelength = 0.0;
  double gate_width = 0.0;
  double power_watts = 0.0;
  double power_dbm = 0.0;
};

inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }
inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

// P = mu h c / (lambda w_g)
inline PowerReading photon_flux_to_power(double mu, double wavelength, double gate_width) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidParameter(fmt::format("mu must be >= 0 (got {})", mu));
  if (!(wavelength > 0.0)) throw InvalidParameter(fmt::format("wavelength must be positive (got {})", wavelength));
  if (!(gate_width > 0.0)) throw InvalidParameter(fmt::format("gate width must be positive (got {})", gate_width));
  PowerReading r{mu, wavelength, gate_width, 0.0, 0.0};
  r.power_watts = mu * kPlanck * kSpeedOfLight / (wavelength * gate_width);
  r.power_dbm = watts_to_dbm(r.power_watts);
  return r;
}

inline double power_to_photon_flux(double watts, double wavelength, double gate_width) {
  return watts * wavelength * gate_width / (kPlanck * kSpeedOfLight);
}

// Equivalent width 2 * integral AC^2 / max AC^2 of the interference term, AC being
// the departure from the median level. Shrinks as the beat line broadens.
inline double coherence_width(const Interferogram& ig) {
  ig.validate();
  auto v = ig.values();
  std::vector<double> sorted = v;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  double energy = 0.0;
  double peak = 0.0;
  for (double x : v) {
    const double d = (*mid - x) * (*mid - x);
    energy += d;
    peak = std::max(peak, d);
  }
  return peak > 0.0 ? 2.0 * energy * ig.delay_step() / peak : 0.0;
}

// Directory bundle: beat.csv, test.csv (when deconvolved) and fts.meta.
inline void write_fts_bundle(const FtsResult& result, const std::filesystem::path& dir,
                             const std::map<std::string, std::string>& extra = {}) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "beat.csv");
    write_spectrum_csv(result.beat_spectrum, os);
  }
  if (result.test_spectrum) {
    std::ofstream os(dir / "test.csv");
    write_spectrum_csv(*result.test_spectrum, os);
  }
  std::ofstream os(dir / "fts.meta");
  os << "[fts]\n";
  os << "window = " << result.window_tag << "\n";
  os << fmt::format("zero_pad_factor = {}\n", kZeroPadFactor);
  os << fmt::format("input_length = {}\n", result.input_length);
  os << fmt::format("padded_length = {}\n", result.padded_length);
  os << fmt::format("resolution_hz = {}\n", result.resolution);
  os << fmt::format("beat_frequency_hz = {}\n", result.beat_frequency);
  os << fmt::format("noise_floor = {}\n", result.noise_floor);
  os << fmt::format("dc_level = {}\n", result.dc_level);
  os << fmt::format("peak_to_floor = {}\n", result.peak_to_floor);
  os << "source_kind = " << to_string(result.source_kind) << "\n";
  for (std::size_t i = 0; i < result.warnings.size(); ++i) os << "warning_" << i << " = " << result.warnings[i] << "\n";
  for (const auto& [k, v] : extra) os << k << " = " << v << "\n";
}

}  // namespace fpfts
