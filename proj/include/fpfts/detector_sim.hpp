#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fpfts/detail/fft.hpp"
#include "fpfts/detail/least_squares.hpp"
#include "fpfts/detail/numeric.hpp"
#include "fpfts/errors.hpp"
#include "fpfts/interferogram.hpp"
#include "fpfts/quantum_interference.hpp"

namespace fpfts {

// Gated Geiger-mode SPAD pair. Dead time, afterpulsing and jitter are not modeled.
struct DetectorConfig {
  double efficiency = 0.15;
  double gate_width = 4e-9;
  double dark_count_prob = 1e-5;
  std::uint64_t gates_per_point = 100000;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(efficiency >= 0.0 && efficiency <= 1.0))
      throw InvalidParameter(fmt::format("detector efficiency must lie in [0, 1] (got {})", efficiency));
    if (!(gate_width > 0.0) || !std::isfinite(gate_width))
      throw InvalidParameter(fmt::format("gate width must be positive (got {})", gate_width));
    if (!(dark_count_prob >= 0.0 && dark_count_prob <= 1.0))
      throw InvalidParameter(fmt::format("dark count probability must lie in [0, 1] (got {})", dark_count_prob));
    if (gates_per_point < 1) throw InvalidParameter("gates_per_point must be >= 1");
  }

  bool operator==(const DetectorConfig&) const = default;
};

// Mean photon numbers per gate and the relative-delay sweep.
struct AcquisitionPlan {
  double mu_ref = 0.2;
  double mu_test = 0.2;
  double delay_start = -2e-6;
  double delay_step = 500e-12;
  std::size_t delay_count = 8000;

  double delay(std::size_t k) const noexcept { return delay_start + static_cast<double>(k) * delay_step; }

  std::vector<double> delays() const {
    std::vector<double> d(delay_count);
    for (std::size_t k = 0; k < delay_count; ++k) d[k] = delay(k);
    return d;
  }

  void validate() const {
    if (!(mu_ref >= 0.0) || !std::isfinite(mu_ref))
      throw InvalidParameter(fmt::format("mu_ref must be >= 0 (got {})", mu_ref));
    if (!(mu_test >= 0.0) || !std::isfinite(mu_test))
      throw InvalidParameter(fmt::format("mu_test must be >= 0 (got {})", mu_test));
    if (!(delay_step > 0.0) || !std::isfinite(delay_step))
      throw InvalidParameter(fmt::format("delay_step must be positive (got {})", delay_step));
    if (!std::isfinite(delay_start)) throw InvalidParameter("delay_start must be finite");
    if (delay_count < 2) throw InvalidParameter("delay_count must be >= 2");
  }

  bool operator==(const AcquisitionPlan&) const = default;
};

/// Per-gate coincidence probability of two threshold detectors behind the beam
/// splitter, fed by two weak coherent states.
///
/// Output ports carry coherent states with detected means a +/- b cos(phi), where
/// a = eta (mu_ref + mu_test)/2 and b = eta sqrt(mu_ref mu_test) sqrt(m), m being the
/// polarization overlap. A click happens with probability 1 - (1 - p_dark) e^{-n}, which
/// saturates at large mu. The relative optical phase is uniform; between the two
/// detection times it advances by arg(gamma) plus a Gaussian diffusion whose
/// characteristic function equals |gamma|, gamma being the normalized coherence
/// product at that delay. In the few-photon limit this reduces to
/// eta^2 [(mu_ref + mu_test)^2/4 - mu_ref mu_test m Re(gamma)/2].
class CoincidenceModel {
 public:
  static constexpr std::size_t kSamples = 256;

  CoincidenceModel(double mu_ref, double mu_test, double efficiency, double dark_count_prob,
                   double polarization_overlap) {
    if (!(mu_ref >= 0.0) || !(mu_test >= 0.0)) throw InvalidParameter("mean photon numbers must be >= 0");
    if (mu_ref > 1e3 || mu_test > 1e3)
      throw ModelOverflow(fmt::format("mean photon number {} per gate is far beyond detector saturation; lower mu",
                                      std::max(mu_ref, mu_test)));
    if (!(polarization_overlap >= 0.0 && polarization_overlap <= 1.0))
      throw InvalidParameter("polarization overlap must lie in [0, 1]");
    const double a = efficiency * 0.5 * (mu_ref + mu_test);
    const double b = efficiency * std::sqrt(mu_ref * mu_test * polarization_overlap);
    const double log_no_dark = std::log1p(-std::min(dark_count_prob, 1.0 - 1e-300));
    // u(phi) = P(D_A clicks | phi); D_B sees u(phi + pi).
    detail::cvec u(kSamples);
    for (std::size_t j = 0; j < kSamples; ++j) {
      const double phi = detail::kTwoPi * static_cast<double>(j) / static_cast<double>(kSamples);
      u[j] = dark_count_prob >= 1.0 ? 1.0 : -std::expm1(log_no_dark - a - b * std::cos(phi));
    }
    const auto coeffs = detail::fft_forward(u);
    harmonics_.resize(kSamples / 2);
    for (std::size_t k = 0; k < harmonics_.size(); ++k)
      harmonics_[k] = coeffs[k].real() / static_cast<double>(kSamples);
  }

  // Mean click probability of either detector.
  double singles_probability() const noexcept { return harmonics_[0]; }

  // Coincidence probability with the interference term absent.
  double accidental_probability() const noexcept { return harmonics_[0] * harmonics_[0]; }

  // `coherence` is gamma_ref gamma_test* normalized to unit modulus at zero delay.
  double probability(std::complex<double> coherence) const {
    const double c = std::min(std::abs(coherence), 1.0);
    const double theta = std::arg(coherence);
    double p = harmonics_[0] * harmonics_[0];
    if (c <= 0.0) return p;
    for (std::size_t k = 1; k < harmonics_.size(); ++k) {
      const double damping = std::pow(c, static_cast<double>(k * k));
      const double term = harmonics_[k] * harmonics_[k] * damping;
      if (term < 1e-300) break;
      p += 2.0 * ((k % 2 == 1) ? -1.0 : 1.0) * term * std::cos(static_cast<double>(k) * theta);
    }
    return p;
  }

 private:
  std::vector<double> harmonics_;
};

inline CoincidenceModel make_coincidence_model(const SourcePair& pair, const DetectorConfig& det,
                                               const AcquisitionPlan& plan) {
  return CoincidenceModel(plan.mu_ref, plan.mu_test, det.efficiency, det.dark_count_prob,
                          polarization_overlap(pair.polarization_angle));
}

/// Counted interferogram: per delay, the per-gate coincidence probability from
/// CoincidenceModel, then Binomial(gates_per_point, p) counts. Each delay draws from
/// its own substream of rng_seed, so results do not depend on thread count.
///
/// The photon-number ratio comes from the plan's mu values; pair.intensity_ratio is
/// not used here.
inline Interferogram simulate_acquisition(const SourcePair& pair, const DetectorConfig& det,
                                          const AcquisitionPlan& plan, const TimeGrid& grid,
                                          unsigned threads = 0) {
  pair.validate();
  det.validate();
  plan.validate();
  const CoherenceIntegrator integrator(pair, grid);
  const CoincidenceModel model = make_coincidence_model(pair, det, plan);
  const double norm = integrator.reference_norm() * integrator.test_norm();

  Interferogram ig;
  ig.kind = InterferogramKind::counts;
  ig.delays = plan.delays();
  ig.probability.resize(plan.delay_count);
  ig.counts.resize(plan.delay_count);
  ig.gates.assign(plan.delay_count, det.gates_per_point);
  detail::parallel_for(plan.delay_count, threads, [&](std::size_t k) {
    double p = model.probability(integrator.coherence_product(ig.delays[k]) / norm);
    if (p < 0.0 && p > -1e-15) p = 0.0;  // rounding at perfect destructive interference
    if (!(p >= 0.0 && p <= 1.0))
      throw ModelOverflow(fmt::format("coincidence probability {} at delay {} s left [0, 1]; lower mu", p,
                                      ig.delays[k]));
    std::mt19937_64 rng(detail::stream_seed(det.rng_seed, k));
    std::binomial_distribution<std::uint64_t> draw(det.gates_per_point, p);
    ig.probability[k] = p;
    ig.counts[k] = draw(rng);
  });

  ig.metadata["kind"] = "counts";
  ig.metadata["detuning_hz"] = fmt::format("{}", pair.detuning());
  ig.metadata["mu_ref"] = fmt::format("{}", plan.mu_ref);
  ig.metadata["mu_test"] = fmt::format("{}", plan.mu_test);
  ig.metadata["efficiency"] = fmt::format("{}", det.efficiency);
  ig.metadata["gate_width_s"] = fmt::format("{}", det.gate_width);
  ig.metadata["dark_count_prob"] = fmt::format("{}", det.dark_count_prob);
  ig.metadata["gates_per_point"] = fmt::format("{}", det.gates_per_point);
  ig.metadata["rng_seed"] = fmt::format("{}", det.rng_seed);
  ig.metadata["polarization_angle_rad"] = fmt::format("{}", pair.polarization_angle);
  ig.metadata["accidental_probability"] = fmt::format("{}", model.accidental_probability());
  return ig;
}

inline Interferogram simulate_acquisition(const SourcePair& pair, const DetectorConfig& det,
                                          const AcquisitionPlan& plan, unsigned threads = 0) {
  return simulate_acquisition(pair, det, plan, quadrature_grid({pair.reference, pair.test}), threads);
}

struct VisibilityFit {
  double visibility = 0.0;
  double visibility_std = 0.0;
  double beat_frequency = 0.0;
  double envelope_width = 0.0;  // sigma of exp(-tau^2 / (2 sigma^2))
  double plateau = 0.0;
  double reduced_chi2 = 0.0;
};

namespace fit_impl {

inline double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Dominant nonzero frequency of a uniformly sampled real sequence.
inline double dominant_frequency(std::span<const double> x, double step) {
  const std::size_t padded = detail::next_pow2(4 * x.size());
  const auto spectrum = detail::fft_real_padded(x, padded);
  std::vector<double> power(padded / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);
  std::size_t peak = 1;
  for (std::size_t k = 1; k < power.size(); ++k)
    if (power[k] > power[peak]) peak = k;
  return detail::peak_centroid(power, peak, 3) / (static_cast<double>(padded) * step);
}

struct Model {
  std::span<const double> tau;
  bool free_frequency;
  double fixed_frequency;

  // params: plateau, visibility, sigma, [frequency]
  double value(const Eigen::VectorXd& p, std::size_t k) const {
    const double f = free_frequency ? p[3] : fixed_frequency;
    const double env = std::exp(-tau[k] * tau[k] / (2.0 * p[2] * p[2]));
    return p[0] * (1.0 - p[1] * env * std::cos(detail::kTwoPi * f * tau[k]));
  }

  void gradient(const Eigen::VectorXd& p, std::size_t k, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> g) const {
    const double t = tau[k];
    const double f = free_frequency ? p[3] : fixed_frequency;
    const double env = std::exp(-t * t / (2.0 * p[2] * p[2]));
    const double c = std::cos(detail::kTwoPi * f * t);
    g[0] = 1.0 - p[1] * env * c;
    g[1] = -p[0] * env * c;
    g[2] = -p[0] * p[1] * c * env * (t * t / (p[2] * p[2] * p[2]));
    if (free_frequency) g[3] = p[0] * p[1] * env * std::sin(detail::kTwoPi * f * t) * detail::kTwoPi * t;
  }
};

}  // namespace fit_impl

/// Least-squares fit of plateau [1 - V exp(-tau^2/(2 sigma^2)) cos(2 pi f tau)].
/// Counted data are weighted by binomial variances (two reweighting passes) and
/// the reported error is absolute; analytic data are unweighted and the error is
/// scaled by the residual variance. When the data cannot pin the visibility down
/// (e.g. the envelope collapses onto a handful of counts) the error is infinite.
inline VisibilityFit fit_visibility(const Interferogram& ig) {
  ig.validate();
  const std::size_t n = ig.size();
  if (n < 10) throw InvalidInput("fit_visibility: need at least 10 delay points");
  const auto y = ig.values();
  const std::span<const double> tau(ig.delays);
  const double step = ig.delay_step();
  const double span = ig.span();
  const bool counted = ig.kind == InterferogramKind::counts;

  const double plateau0 = fit_impl::median(y);
  if (!(plateau0 > 0.0) && *std::max_element(y.begin(), y.end()) <= 0.0)
    throw FitFailure("fit_visibility: interferogram has no coincidences", 0.0);

  std::vector<double> ac(n);
  double ac_energy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ac[k] = plateau0 - y[k];
    ac_energy += ac[k] * ac[k];
  }
  VisibilityFit out;
  if (ac_energy <= 1e-24 * plateau0 * plateau0 * static_cast<double>(n)) {
    out.plateau = plateau0;
    return out;
  }

  std::vector<double> centered(ac);
  double mean_ac = 0.0;
  for (double v : centered) mean_ac += v;
  mean_ac /= static_cast<double>(n);
  for (double& v : centered) v -= mean_ac;
  double f0 = fit_impl::dominant_frequency(centered, step);
  const bool free_frequency = f0 * span >= 2.0;
  if (!free_frequency) f0 = 0.0;

  double m2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) m2 += tau[k] * tau[k] * ac[k] * ac[k];
  double sigma0 = std::sqrt(2.0 * m2 / ac_energy);
  if (!(sigma0 > 0.0)) sigma0 = 0.25 * span;

  std::vector<double> weight(n, 1.0);
  auto set_weights = [&](auto&& model_at) {
    if (!counted) return;
    for (std::size_t k = 0; k < n; ++k) {
      const double g = static_cast<double>(ig.gates[k]);
      const double p = std::clamp(model_at(k), 0.5 / g, 1.0 - 0.5 / g);
      weight[k] = g / (p * (1.0 - p));
    }
  };
  set_weights([&](std::size_t) { return plateau0; });

  // Coarse scan of sigma with the linear parameters solved exactly.
  double best_ssr = std::numeric_limits<double>::infinity();
  double best_sigma = sigma0;
  double best_a = plateau0;
  double best_b = 0.0;
  for (int j = -12; j <= 12; ++j) {
    const double sigma = sigma0 * std::pow(2.0, j / 4.0);
    double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double g = std::exp(-tau[k] * tau[k] / (2.0 * sigma * sigma)) * std::cos(detail::kTwoPi * f0 * tau[k]);
      const double w = weight[k];
      s11 += w;
      s12 -= w * g;
      s22 += w * g * g;
      r1 += w * y[k];
      r2 -= w * g * y[k];
    }
    const double det = s11 * s22 - s12 * s12;
    if (!(std::abs(det) > 0.0)) continue;
    const double a = (r1 * s22 - r2 * s12) / det;
    const double b = (s11 * r2 - s12 * r1) / det;
    double ssr = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double g = std::exp(-tau[k] * tau[k] / (2.0 * sigma * sigma)) * std::cos(detail::kTwoPi * f0 * tau[k]);
      const double r = a - b * g - y[k];
      ssr += weight[k] * r * r;
    }
    if (ssr < best_ssr) {
      best_ssr = ssr;
      best_sigma = sigma;
      best_a = a;
      best_b = b;
    }
  }

  const fit_impl::Model model{tau, free_frequency, f0};
  const int n_params = free_frequency ? 4 : 3;
  Eigen::VectorXd p(n_params);
  p[0] = best_a;
  p[1] = best_a != 0.0 ? best_b / best_a : 0.0;
  p[2] = best_sigma;
  if (free_frequency) p[3] = f0;

  detail::LsqSolution sol;
  const int passes = counted ? 2 : 1;
  for (int pass = 0; pass < passes; ++pass) {
    if (pass > 0) set_weights([&](std::size_t k) { return model.value(sol.params, k); });
    detail::LsqProblem problem;
    problem.n_residuals = static_cast<int>(n);
    problem.residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
      for (std::size_t k = 0; k < n; ++k) r[static_cast<Eigen::Index>(k)] = std::sqrt(weight[k]) * (model.value(x, k) - y[k]);
    };
    problem.jacobian = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& jac) {
      for (std::size_t k = 0; k < n; ++k) {
        model.gradient(x, k, jac.row(static_cast<Eigen::Index>(k)));
        jac.row(static_cast<Eigen::Index>(k)) *= std::sqrt(weight[k]);
      }
    };
    sol = detail::solve_least_squares(problem, pass == 0 ? p : sol.params);
    if (!sol.converged) {
      const double rms = std::sqrt(sol.sum_squares / static_cast<double>(n));
      throw FitFailure(fmt::format("fit_visibility: least squares did not converge (weighted residual rms {})", rms),
                       rms);
    }
  }

  const double dof = static_cast<double>(n) - n_params;
  out.reduced_chi2 = sol.sum_squares / dof;
  const double var_scale = counted ? 1.0 : out.reduced_chi2;
  out.plateau = sol.params[0];
  out.visibility = std::clamp(sol.params[1], 0.0, 1.0);
  const double var_v = sol.covariance(1, 1);
  out.visibility_std = std::isfinite(var_v) ? std::sqrt(std::max(0.0, var_v * var_scale))
                                            : std::numeric_limits<double>::infinity();
  out.envelope_width = std::abs(sol.params[2]);
  out.beat_frequency = free_frequency ? std::abs(sol.params[3]) : 0.0;
  return out;
}

struct EffectivenessPoint {
  double mu = 0.0;
  double visibility = 0.0;
  double visibility_std = 0.0;
};

/// Fitted visibility versus balanced mean photon number (mu_ref = mu_test = mu).
/// Point i uses substream i of det.rng_seed.
inline std::vector<EffectivenessPoint> effectiveness_sweep(const SourcePair& pair, const DetectorConfig& det,
                                                           std::span<const double> mu_values,
                                                           const AcquisitionPlan& plan_template,
                                                           unsigned threads = 0) {
  if (mu_values.empty()) throw InvalidParameter("effectiveness_sweep: empty mu ladder");
  for (std::size_t i = 0; i < mu_values.size(); ++i) {
    if (!(mu_values[i] > 0.0)) throw InvalidParameter(fmt::format("mu values must be positive (got {})", mu_values[i]));
    if (i > 0 && !(mu_values[i] > mu_values[i - 1])) throw InvalidParameter("mu values must be strictly ascending");
  }
  const TimeGrid grid = quadrature_grid({pair.reference, pair.test});
  std::vector<EffectivenessPoint> table;
  table.reserve(mu_values.size());
  for (std::size_t i = 0; i < mu_values.size(); ++i) {
    AcquisitionPlan plan = plan_template;
    plan.mu_ref = plan.mu_test = mu_values[i];
    DetectorConfig d = det;
    d.rng_seed = detail::stream_seed(det.rng_seed, 0x5eed0000ULL + i);
    const auto fit = fit_visibility(simulate_acquisition(pair, d, plan, grid, threads));
    table.push_back({mu_values[i], fit.visibility, fit.visibility_std});
  }
  return table;
}

}  // namespace fpfts
