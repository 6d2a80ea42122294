#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace fpfts::detail {

using cvec = std::vector<std::complex<double>>;

// X_k = sum_n x_n exp(-2 pi i k n / N)
inline cvec fft_forward(const cvec& in) {
  Eigen::FFT<double> fft;
  cvec out;
  fft.fwd(out, in);
  return out;
}

// x_n = (1/N) sum_k X_k exp(+2 pi i k n / N)
inline cvec fft_inverse(const cvec& in) {
  Eigen::FFT<double> fft;
  cvec out;
  fft.inv(out, in);
  return out;
}

// Real input zero-padded to `padded` samples; returns the full complex spectrum.
inline cvec fft_real_padded(std::span<const double> x, std::size_t padded) {
  cvec buf(padded, {0.0, 0.0});
  for (std::size_t i = 0; i < x.size() && i < padded; ++i) buf[i] = x[i];
  return fft_forward(buf);
}

// Weighted mean bin index over [peak - half_width, peak + half_width].
inline double peak_centroid(std::span<const double> power, std::size_t peak, std::size_t half_width) {
  const std::size_t lo = peak > half_width ? peak - half_width : 0;
  const std::size_t hi = std::min(power.size() - 1, peak + half_width);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = lo; k <= hi; ++k) {
    num += static_cast<double>(k) * power[k];
    den += power[k];
  }
  return den > 0.0 ? num / den : static_cast<double>(peak);
}

}  // namespace fpfts::detail
