#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fpfts/detail/numeric.hpp"
#include "fpfts/errors.hpp"

namespace fpfts {

/// Power spectral density samples on a uniform frequency grid.
///
/// Units of `values` are arbitrary but nonnegative; `f_step` is the bin width in Hz,
/// so `total_power()` is the Riemann sum of the density.
struct Spectrum {
  double f_start = 0.0;
  double f_step = 1.0;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double frequency(std::size_t k) const noexcept { return f_start + static_cast<double>(k) * f_step; }
  double f_end() const noexcept { return values.empty() ? f_start : frequency(values.size() - 1); }

  double total_power() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * f_step;
  }

  std::size_t peak_index() const {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  }
  double peak_value() const { return values.empty() ? 0.0 : values[peak_index()]; }

  // Linear interpolation, zero outside the grid.
  double at(double f) const { return detail::interpolate(values, f_start, f_step, f); }

  void validate() const {
    if (!(f_step > 0.0) || !std::isfinite(f_step)) throw InvalidInput("spectrum: frequency step must be positive");
    for (double v : values)
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("spectrum: values must be finite and nonnegative");
  }

  bool operator==(const Spectrum&) const = default;
};

inline Spectrum normalized_area(Spectrum s) {
  const double area = s.total_power();
  if (area > 0.0)
    for (double& v : s.values) v /= area;
  return s;
}

inline Spectrum normalized_peak(Spectrum s) {
  const double peak = s.peak_value();
  if (peak > 0.0)
    for (double& v : s.values) v /= peak;
  return s;
}

inline double centroid(const Spectrum& s) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    num += s.frequency(k) * s.values[k];
    den += s.values[k];
  }
  return den > 0.0 ? num / den : 0.0;
}

// Standard deviation of the density about its centroid.
inline double rms_width(const Spectrum& s) {
  const double c = centroid(s);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double d = s.frequency(k) - c;
    num += d * d * s.values[k];
    den += s.values[k];
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

// Distance between the outermost 1/e-of-peak crossings, linearly interpolated.
inline double full_width_1e(const Spectrum& s) {
  if (s.size() < 2) return 0.0;
  const double level = s.peak_value() / std::exp(1.0);
  if (!(level > 0.0)) return 0.0;
  std::size_t first = s.size();
  std::size_t last = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s.values[k] >= level) {
      first = std::min(first, k);
      last = k;
    }
  }
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double a = s.values[inside];
    const double b = s.values[outside];
    const double frac = (a - level) / (a - b);
    return s.frequency(inside) + frac * (s.frequency(outside) - s.frequency(inside));
  };
  const double lo = first > 0 ? crossing(first, first - 1) : s.frequency(first);
  const double hi = last + 1 < s.size() ? crossing(last, last + 1) : s.frequency(last);
  return hi - lo;
}

// Mirror about `center`: out(center + x) = in(center - x).
inline Spectrum mirrored(const Spectrum& s, double center) {
  Spectrum out = s;
  for (std::size_t k = 0; k < s.size(); ++k) out.values[k] = s.at(2.0 * center - s.frequency(k));
  return out;
}

inline Spectrum resample(const Spectrum& s, double f_start, double f_step, std::size_t n) {
  Spectrum out{f_start, f_step, std::vector<double>(n)};
  for (std::size_t k = 0; k < n; ++k) out.values[k] = s.at(out.frequency(k));
  return out;
}

inline void write_spectrum_csv(const Spectrum& s, std::ostream& os) {
  os << "frequency_hz,power_au\n";
  for (std::size_t k = 0; k < s.size(); ++k) os << fmt::format("{},{}\n", s.frequency(k), s.values[k]);
}

inline Spectrum read_spectrum_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("frequency_hz,power_au", 0) != 0)
    throw InvalidInput("spectrum csv: missing header 'frequency_hz,power_au'");
  std::vector<double> freqs;
  Spectrum s;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidInput("spectrum csv: malformed row '" + line + "'");
    freqs.push_back(std::stod(line.substr(0, comma)));
    s.values.push_back(std::stod(line.substr(comma + 1)));
  }
  if (freqs.size() < 2) throw InvalidInput("spectrum csv: need at least two rows");
  s.f_start = freqs.front();
  s.f_step = (freqs.back() - freqs.front()) / static_cast<double>(freqs.size() - 1);
  for (std::size_t k = 1; k < freqs.size(); ++k)
    if (std::abs((freqs[k] - freqs[k - 1]) - s.f_step) > 1e-6 * std::abs(s.f_step))
      throw InvalidInput("spectrum csv: frequency grid is not uniform");
  return s;
}

}  // namespace fpfts
