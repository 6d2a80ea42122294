#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace fpfts::detail {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the independent substream `index` of master seed `seed`.
// Pure function of its arguments, so any evaluation order yields the same draws.
inline constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Trapezoidal rule on uniformly spaced samples.
inline double trapezoid(std::span<const double> y, double step) {
  if (y.size() < 2) return y.empty() ? 0.0 : y.front() * step;
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
  return s * step;
}

// Linear interpolation on a uniform grid; zero outside [x0, x0 + (n-1) dx].
inline double interpolate(std::span<const double> y, double x0, double dx, double x) {
  if (y.empty()) return 0.0;
  const double pos = (x - x0) / dx;
  if (pos < 0.0 || pos > static_cast<double>(y.size() - 1)) return 0.0;
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= y.size()) return y.back();
  const double frac = pos - static_cast<double>(i);
  return y[i] + frac * (y[i + 1] - y[i]);
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

// Runs fn(i) for i in [0, n) over contiguous chunks. The first exception thrown
// by any worker is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace fpfts::detail
