#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "fpfts/detail/numeric.hpp"
#include "fpfts/errors.hpp"
#include "fpfts/interferogram.hpp"
#include "fpfts/wavepacket.hpp"

namespace fpfts {

/// Reference and test modes plus their mismatch: intensity_ratio is the mean photon
/// number ratio test/reference, polarization_angle the relative polarization angle.
struct SourcePair {
  WavePacket reference;
  WavePacket test;
  double intensity_ratio = 1.0;
  double polarization_angle = 0.0;

  void validate() const {
    if (!(intensity_ratio >= 0.0) || !std::isfinite(intensity_ratio))
      throw InvalidParameter(fmt::format("intensity_ratio must be finite and >= 0 (got {})", intensity_ratio));
    if (!(polarization_angle >= 0.0 && polarization_angle <= detail::kPi / 2.0))
      throw InvalidParameter(
          fmt::format("polarization_angle must lie in [0, pi/2] (got {})", polarization_angle));
  }

  // Carrier offset test - reference.
  double detuning() const noexcept { return test.center_frequency() - reference.center_frequency(); }
};

inline SourcePair make_source_pair(WavePacket reference, WavePacket test, double intensity_ratio = 1.0,
                            double polarization_angle = 0.0) {
  SourcePair p{std::move(reference), std::move(test), intensity_ratio, polarization_angle};
  p.validate();
  return p;
}

/// Joint detection density of the two-photon mode at arrival time t0 and delay tau:
///   g(t0, tau) = 1/4 |f1(t0 + tau) f2(t0) - f1(t0) f2(t0 + tau)|^2
inline double mutual_coherence(const SourcePair& pair, double t0, double tau) {
  const auto& f1 = pair.reference;
  const auto& f2 = pair.test;
  return 0.25 * std::norm(f1(t0 + tau) * f2(t0) - f1(t0) * f2(t0 + tau));
}

inline double visibility_from_ratio(double ratio) {
  if (!(ratio >= 0.0) || std::isnan(ratio))
    throw InvalidParameter(fmt::format("intensity ratio must be >= 0 (got {})", ratio));
  if (std::isinf(ratio)) return 0.0;
  return 2.0 * ratio / ((1.0 + ratio) * (1.0 + ratio));
}

// Malus projection of the relative polarization angle onto an equivalent ratio.
inline double ratio_from_polarization(double theta) {
  if (!(theta >= 0.0 && theta <= detail::kPi / 2.0))
    throw InvalidParameter(fmt::format("polarization angle must lie in [0, pi/2] (got {})", theta));
  // cos of the double nearest pi/2 is 6e-17, not zero.
  const double c = theta == detail::kPi / 2.0 ? 0.0 : std::cos(theta);
  const double s = std::sin(theta);
  return c * c / (1.0 + s * s);
}

// Fraction of the balanced-case fringe surviving a polarization mismatch.
inline double polarization_overlap(double theta) {
  return visibility_from_ratio(ratio_from_polarization(theta)) / visibility_from_ratio(1.0);
}

/// Photon-pair weights of a two-mode weak coherent input with mean numbers in ratio R.
/// Pairs drawn from one source split like classical particles; only cross pairs
/// (one photon from each source) carry the two-photon interference term.
struct PairWeights {
  double same_source;
  double cross_source;
};

inline PairWeights pair_weights(double ratio) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio))
    throw InvalidParameter(fmt::format("intensity ratio must be finite and >= 0 (got {})", ratio));
  const double total = (1.0 + ratio) * (1.0 + ratio);
  return {(1.0 + ratio * ratio) / total, 2.0 * ratio / total};
}

inline void check_grid_covers(const WavePacket& packet, const TimeGrid& grid, const char* which) {
  const double outside = packet.mass_outside(grid.t_start, grid.t_end());
  if (outside > 1e-6)
    throw GridTooShort(fmt::format("{} packet: {:.3g} of its envelope mass lies outside the time grid [{}, {}] s",
                                   which, outside, grid.t_start, grid.t_end()));
}

/// Cached quadrature of the overlap integrals entering the coincidence probability.
///
/// The two lasers are independent, so the emission times of the two photons are
/// uncorrelated. Averaging g(t0, tau) over their relative offset factors every
/// integral: the r*s terms reduce to the marginal norms and the z-terms to the
/// product of the amplitude autocorrelations
///   gamma_i(tau) = integral f_i(u) f_i*(u + tau) du.
class CoherenceIntegrator {
 public:
  CoherenceIntegrator(const SourcePair& pair, const TimeGrid& grid) : pair_(pair), grid_(grid) {
    pair.validate();
    grid.validate();
    if (grid.n_points < 2) throw InvalidParameter("coherence quadrature needs at least two grid points");
    check_grid_covers(pair.reference, grid, "reference");
    check_grid_covers(pair.test, grid, "test");
    ref_ = evaluate(pair.reference, grid);
    test_ = evaluate(pair.test, grid);
    ref_norm_ = norm_of(ref_);
    test_norm_ = norm_of(test_);
  }

  double reference_norm() const noexcept { return ref_norm_; }
  double test_norm() const noexcept { return test_norm_; }

  std::complex<double> autocorrelation_reference(double tau) const { return autocorrelation(pair_.reference, ref_, tau); }
  std::complex<double> autocorrelation_test(double tau) const { return autocorrelation(pair_.test, test_, tau); }

  // gamma_ref(tau) * conj(gamma_test(tau))
  std::complex<double> coherence_product(double tau) const {
    return autocorrelation_reference(tau) * std::conj(autocorrelation_test(tau));
  }

  // Single-photon-pair coincidence probability.
  double coincidence(double tau) const { return 0.5 * (ref_norm_ * test_norm_ - coherence_product(tau).real()); }

  double plateau() const noexcept { return 0.5 * ref_norm_ * test_norm_; }

 private:
  double norm_of(const std::vector<std::complex<double>>& f) const {
    std::vector<double> r(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) r[k] = std::norm(f[k]);
    return detail::trapezoid(r, grid_.t_step);
  }

  std::complex<double> autocorrelation(const WavePacket& packet, const std::vector<std::complex<double>>& samples,
                                       double tau) const {
    std::complex<double> acc{0.0, 0.0};
    const std::size_t n = samples.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
      acc += w * samples[k] * std::conj(packet(grid_.time(k) + tau));
    }
    return acc * grid_.t_step;
  }

  SourcePair pair_;
  TimeGrid grid_;
  std::vector<std::complex<double>> ref_;
  std::vector<std::complex<double>> test_;
  double ref_norm_ = 0.0;
  double test_norm_ = 0.0;
};

/// Probability of a coincidence at relative delay tau for one photon from each
/// source: the t0-integral of mutual_coherence, averaged over the independent
/// emission times (see CoherenceIntegrator). Plateau 1/2, zero at tau = 0 for any
/// pair of unit-norm modes.
inline double coincidence_probability(const SourcePair& pair, double tau, const TimeGrid& grid) {
  return CoherenceIntegrator(pair, grid).coincidence(tau);
}

inline std::complex<double> coherence_product(const SourcePair& pair, double tau, const TimeGrid& grid) {
  return CoherenceIntegrator(pair, grid).coherence_product(tau);
}

/// Noiseless interferogram of two weak coherent states.
///
/// Each delay mixes same-source pairs (flat, weight (1 + R^2)/(1 + R)^2) with
/// cross-source pairs (weight 2R/(1 + R)^2) whose z-term is scaled by the
/// polarization overlap. Values are probabilities whose plateau is half the product
/// of the marginal norms; with normalize_to_plateau the plateau is 1.
inline Interferogram analytic_interferogram(const SourcePair& pair, std::span<const double> delays,
                                            const TimeGrid& grid, bool normalize_to_plateau = false,
                                            unsigned threads = 0) {
  const CoherenceIntegrator integrator(pair, grid);
  const auto weights = pair_weights(pair.intensity_ratio);
  const double pol = polarization_overlap(pair.polarization_angle);
  const double plateau = integrator.plateau();
  const double scale = normalize_to_plateau ? 1.0 / plateau : 1.0;

  Interferogram ig;
  ig.kind = InterferogramKind::analytic;
  ig.delays.assign(delays.begin(), delays.end());
  ig.probability.resize(delays.size());
  detail::parallel_for(delays.size(), threads, [&](std::size_t k) {
    const double z = integrator.coherence_product(delays[k]).real();
    const double cross = plateau - 0.5 * pol * z;
    ig.probability[k] = scale * (weights.same_source * plateau + weights.cross_source * cross);
  });

  ig.metadata["kind"] = "analytic";
  ig.metadata["normalized_to_plateau"] = normalize_to_plateau ? "true" : "false";
  ig.metadata["plateau"] = fmt::format("{}", plateau * scale);
  ig.metadata["detuning_hz"] = fmt::format("{}", pair.detuning());
  ig.metadata["intensity_ratio"] = fmt::format("{}", pair.intensity_ratio);
  ig.metadata["polarization_angle_rad"] = fmt::format("{}", pair.polarization_angle);
  ig.metadata["expected_visibility"] = fmt::format("{}", weights.cross_source * pol);
  return ig;
}

}  // namespace fpfts
