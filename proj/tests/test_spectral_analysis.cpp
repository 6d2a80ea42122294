#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fpfts/detector_sim.hpp"
#include "fpfts/spectral_analysis.hpp"
#include "oracles.hpp"

using namespace fpfts;

namespace {

std::vector<double> uniform_delays(double start, double step, std::size_t n) {
  std::vector<double> d(n);
  for (std::size_t k = 0; k < n; ++k) d[k] = start + static_cast<double>(k) * step;
  return d;
}

Interferogram analytic_for(const SourcePair& pair, double half_span, double step) {
  const auto n = static_cast<std::size_t>(std::round(2.0 * half_span / step));
  return analytic_interferogram(pair, uniform_delays(-half_span, step, n), quadrature_grid({pair.reference, pair.test}),
                                true);
}

Interferogram counted_for(const SourcePair& pair, std::uint64_t seed) {
  DetectorConfig det;
  det.rng_seed = seed;
  return simulate_acquisition(pair, det, AcquisitionPlan{});
}

// Peak-normalized beat spectrum and the folded oracle correlation on the same bins.
double round_trip_error(const SourcePair& pair) {
  const double tau = std::max(pair.reference.coherence_time(), pair.test.coherence_time());
  const auto result = fts_transform(analytic_for(pair, 8.0 * tau, 1e-9), Window::rectangular);
  const auto grid = spectral_grid({pair.reference, pair.test});
  const auto direct = oracle::direct_beat(spectrum_of(pair.reference, grid), spectrum_of(pair.test, grid));
  const auto expected = oracle::folded(direct, result.beat_spectrum.f_step, result.beat_spectrum.size());
  return oracle::normalized_rms(result.beat_spectrum.values, expected);
}

Spectrum reference_spectrum(const SourcePair& pair) {
  return spectrum_of(pair.reference, spectral_grid({pair.reference, pair.test}));
}

Spectrum gaussian_line(double sigma, double center, double f_step, std::size_t n) {
  Spectrum s{center - 0.5 * static_cast<double>(n - 1) * f_step, f_step, {}};
  for (std::size_t k = 0; k < n; ++k) {
    const double x = s.frequency(k) - center;
    s.values.push_back(std::exp(-x * x / (2 * sigma * sigma)));
  }
  return s;
}

Spectrum convolve(const Spectrum& a, const Spectrum& b) {
  // same step on both
  Spectrum out{a.f_start + b.f_start, a.f_step, std::vector<double>(a.size() + b.size() - 1, 0.0)};
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out.values[i + j] += a.values[i] * b.values[j] * a.f_step;
  return out;
}

}  // namespace

TEST(FtsTransform, FindsBeatWithinOneBin) {
  const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(40e6, 0.25e-6));
  const auto ig = analytic_for(pair, 2e-6, 500e-12);
  const auto r = fts_transform(ig);
  EXPECT_EQ(r.window_tag, "rectangular");
  EXPECT_LE(std::abs(r.beat_frequency - 40e6), r.resolution);
  EXPECT_GT(r.peak_to_floor, kSupportThreshold);
}

TEST(FtsTransform, BeatSweepFromCountsWithinOneBin) {
  std::uint64_t seed = 300;
  for (double f : {10e6, 20e6, 40e6, 80e6, 120e6, 160e6, 200e6}) {
    const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(f, 0.25e-6));
    const auto r = fts_transform(counted_for(pair, seed++));
    EXPECT_EQ(r.window_tag, "hann");
    EXPECT_LE(std::abs(r.beat_frequency - f), r.resolution) << f;
  }
}

TEST(FtsTransform, FlatCountsShowNoLine) {
  const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(40e6, 0.25e-6), 1.0, oracle::pi / 2);
  const auto r = fts_transform(counted_for(pair, 77));
  EXPECT_LT(r.peak_to_floor, kSupportThreshold);
}

TEST(FtsTransform, ResolutionIsInverseSpan) {
  for (auto [n, step] : {std::pair<std::size_t, double>{1000, 1e-9}, {8000, 500e-12}, {333, 2e-9}}) {
    Interferogram ig;
    ig.delays = uniform_delays(0.0, step, n);
    ig.probability.resize(n);
    for (std::size_t k = 0; k < n; ++k) ig.probability[k] = 1.0 + 0.3 * std::cos(2 * oracle::pi * 37e6 * ig.delays[k]);
    const auto r = fts_transform(ig);
    EXPECT_DOUBLE_EQ(r.resolution, 1.0 / (static_cast<double>(n) * step));
    EXPECT_GE(r.padded_length, 4 * n);
    EXPECT_EQ(r.padded_length & (r.padded_length - 1), 0u);
    EXPECT_NEAR(r.beat_spectrum.f_step * static_cast<double>(r.padded_length) * step, 1.0, 1e-12);
  }
}

TEST(FtsTransform, ParsevalWithWindowGain) {
  const std::size_t n = 4000;
  const double step = 1e-9;
  Interferogram ig;
  ig.delays = uniform_delays(0.0, step, n);
  for (std::size_t k = 0; k < n; ++k) ig.probability.push_back(1.0 + 0.4 * std::cos(2 * oracle::pi * 61.3e6 * ig.delays[k]));
  double ac_energy = 0.0;
  for (std::size_t k = 0; k < n; ++k) ac_energy += std::pow(0.4 * std::cos(2 * oracle::pi * 61.3e6 * ig.delays[k]), 2) * step;
  for (auto [w, gain] : {std::pair<Window, double>{Window::rectangular, 1.0}, {Window::hann, 3.0 / 8.0}}) {
    const auto r = fts_transform(ig, w);
    const auto& v = r.beat_spectrum.values;
    double spectral = 0.0;
    for (std::size_t m = 0; m < v.size(); ++m) spectral += (m == 0 || m + 1 == v.size() ? 1.0 : 2.0) * v[m] * v[m];
    spectral *= r.beat_spectrum.f_step;
    EXPECT_NEAR(spectral / ac_energy, gain, 0.01 * gain) << to_string(w);
  }
}

TEST(FtsTransform, RoundTripMatchesDirectCorrelation) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> tau(0.1e-6, 0.5e-6), det(20e6, 150e6), beta(0.0, 1.5);
  for (int trial = 0; trial < 5; ++trial) {
    auto test = make_gaussian(det(rng), tau(rng));
    if (trial % 2 == 1) test = apply_phase_modulation(test, Waveform::sinusoid, 5e6, beta(rng));
    const auto pair = make_source_pair(make_gaussian(0.0, tau(rng)), test);
    EXPECT_LT(round_trip_error(pair), 0.01) << "trial " << trial;
  }
}

TEST(FtsTransform, RejectsDegenerateInput) {
  Interferogram ig;
  ig.delays = uniform_delays(0.0, 1e-9, 64);
  ig.probability.assign(64, 0.0);
  EXPECT_THROW(fts_transform(ig), DegenerateInput);
  ig.probability.assign(63, 1.0);
  EXPECT_THROW(fts_transform(ig), InvalidInput);
  ig.probability.assign(64, 1.0);
  ig.delays[10] += 0.3e-9;
  EXPECT_THROW(fts_transform(ig), InvalidInput);
}

TEST(FtsTransform, WindowTags) {
  for (auto w : {Window::rectangular, Window::hann, Window::automatic}) EXPECT_EQ(window_from_string(to_string(w)), w);
  EXPECT_THROW(window_from_string("blackman"), InvalidParameter);
}

TEST(Deconvolution, GaussianWidthsSubtractInQuadrature) {
  for (auto [tr, tt] : {std::pair{0.25e-6, 0.1e-6}, {0.2e-6, 0.2e-6}, {0.5e-6, 0.15e-6}}) {
    const auto pair = make_source_pair(make_gaussian(0.0, tr), make_gaussian(60e6, tt));
    const auto r = deconvolve_reference(fts_transform(analytic_for(pair, 8.0 * std::max(tr, tt), 1e-9)),
                                        reference_spectrum(pair));
    ASSERT_TRUE(r.test_spectrum);
    EXPECT_TRUE(r.warnings.empty());
    const double wb = rms_width(r.beat_spectrum);
    const double wr = rms_width(reference_spectrum(pair));
    EXPECT_NEAR(rms_width(*r.test_spectrum) / std::sqrt(wb * wb - wr * wr), 1.0, 0.05) << tr << " " << tt;
    EXPECT_NEAR(rms_width(*r.test_spectrum) * 4 * oracle::pi * tt, 1.0, 0.05);
  }
}

TEST(Deconvolution, ForwardConvolutionReproducesBeat) {
  const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(60e6, 0.15e-6));
  const auto r = deconvolve_reference(fts_transform(analytic_for(pair, 3e-6, 1e-9)), reference_spectrum(pair));
  const auto& t = *r.test_spectrum;
  // Mirrored reference, same bins as the recovered test.
  const auto ref = reference_spectrum(pair);
  const double c = centroid(ref);
  Spectrum kernel{t.f_start, t.f_step, std::vector<double>(t.size())};
  for (std::size_t k = 0; k < t.size(); ++k) kernel.values[k] = ref.at(c - kernel.frequency(k));
  const auto forward = convolve(t, kernel);
  std::vector<double> got, want;
  for (std::size_t m = 1; m < r.beat_spectrum.size(); ++m) {
    const double f = r.beat_spectrum.frequency(m);
    want.push_back(r.beat_spectrum.values[m]);
    got.push_back(forward.at(f - r.beat_frequency));
  }
  EXPECT_LT(oracle::normalized_rms(got, want), 0.01);
}

TEST(Deconvolution, SyntheticGaussianLines) {
  const double df = 10e3;
  const double sb = 1.2e6, sr = 0.7e6;
  Spectrum ref = gaussian_line(sr, 0.0, df, 2001);
  FtsResult r;
  r.padded_length = 16384;
  r.resolution = 4 * df;
  r.beat_spectrum = {0.0, df, std::vector<double>(r.padded_length / 2 + 1, 0.0)};
  r.beat_frequency = 30e6;
  for (std::size_t m = 0; m < r.beat_spectrum.size(); ++m) {
    const double x = r.beat_spectrum.frequency(m) - r.beat_frequency;
    r.beat_spectrum.values[m] = std::exp(-x * x / (2 * sb * sb));
  }
  const auto out = deconvolve_reference(r, ref);
  EXPECT_NEAR(rms_width(*out.test_spectrum) / std::sqrt(sb * sb - sr * sr), 1.0, 0.05);
  EXPECT_NEAR(centroid(*out.test_spectrum), 0.0, df);
}

TEST(Deconvolution, NarrowReferenceFallsBackToDelta) {
  const auto pair = make_source_pair(make_gaussian(0.0, 20e-6), make_gaussian(40e6, 0.25e-6));
  const auto r = deconvolve_reference(fts_transform(analytic_for(pair, 2e-6, 1e-9)), reference_spectrum(pair));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("delta"), std::string::npos);
  const auto& t = *r.test_spectrum;
  EXPECT_NEAR(centroid(t), 0.0, r.resolution);
  EXPECT_NEAR(t.at(0.0) / t.peak_value(), 1.0, 0.02);
}

TEST(Deconvolution, RejectsBadNoiseFloor) {
  const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(40e6, 0.25e-6));
  const auto r = fts_transform(analytic_for(pair, 2e-6, 1e-9));
  EXPECT_THROW(deconvolve_reference(r, reference_spectrum(pair), -1.0), InvalidParameter);
  EXPECT_THROW(deconvolve_reference(r, reference_spectrum(pair), 0.0), InvalidParameter);
}

TEST(Deconvolution, PhaseModulatedTestRecovered) {
  const auto test = apply_phase_modulation(make_gaussian(80e6, 0.25e-6), Waveform::sinusoid, 10e6, 1.0);
  const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), test);
  const auto r = deconvolve_reference(fts_transform(analytic_for(pair, 2e-6, 500e-12)), reference_spectrum(pair));
  const auto truth = spectrum_of(test, spectral_grid({pair.reference, test}));
  const auto& got = *r.test_spectrum;
  std::vector<double> a, b;
  for (std::size_t k = 0; k < got.size(); ++k) {
    a.push_back(got.values[k]);
    b.push_back(truth.at(80e6 + got.frequency(k)));
  }
  EXPECT_LT(oracle::normalized_rms(a, b), 0.05);
  const auto plain = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(80e6, 0.25e-6));
  const auto r0 = deconvolve_reference(fts_transform(analytic_for(plain, 2e-6, 500e-12)), reference_spectrum(plain));
  EXPECT_GT(rms_width(got), 2.0 * rms_width(*r0.test_spectrum));
}

TEST(Deconvolution, CountedModulatedLineIsBroader) {
  const auto test = apply_phase_modulation(make_gaussian(80e6, 0.25e-6), Waveform::sinusoid, 10e6, 1.0);
  const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), test);
  const auto plain = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(80e6, 0.25e-6));
  const auto ig_mod = counted_for(pair, 5);
  const auto ig_plain = counted_for(plain, 6);
  const auto r = deconvolve_reference(fts_transform(ig_mod), reference_spectrum(pair));
  const auto r0 = deconvolve_reference(fts_transform(ig_plain), reference_spectrum(plain));
  EXPECT_GT(rms_width(*r.test_spectrum), 3.0 * rms_width(*r0.test_spectrum));
  EXPECT_LT(coherence_width(ig_mod), coherence_width(ig_plain));
}

TEST(Ambiguity, SignFromBeatChange) {
  FtsResult a, b;
  a.resolution = b.resolution = 250e3;
  a.beat_frequency = 40e6;
  b.beat_frequency = 30e6;
  EXPECT_DOUBLE_EQ(resolve_ambiguity(a, b, 10e6), 40e6);
  b.beat_frequency = 50e6;
  EXPECT_DOUBLE_EQ(resolve_ambiguity(a, b, 10e6), -40e6);
  b.beat_frequency = 45e6;
  EXPECT_THROW(resolve_ambiguity(a, b, 10e6), AmbiguityUnresolved);
  EXPECT_THROW(resolve_ambiguity(a, b, 0.0), InvalidParameter);
  EXPECT_THROW(resolve_ambiguity(a, b, 40e6), InvalidParameter);
}

TEST(Ambiguity, TestBelowReferenceFromCounts) {
  const double shift = 10e6;
  const auto test = make_gaussian(-25e6, 0.25e-6);
  const auto a = fts_transform(counted_for(make_source_pair(make_gaussian(0.0, 0.25e-6), test), 1));
  const auto b = fts_transform(counted_for(make_source_pair(make_gaussian(shift, 0.25e-6), test), 2));
  const double signed_beat = resolve_ambiguity(a, b, shift);
  EXPECT_LT(signed_beat, 0.0);
  EXPECT_NEAR(signed_beat, -25e6, a.resolution);
}

TEST(Unfold, FlagsFoldingRisk) {
  const auto plain = make_gaussian(20e6, 0.25e-6);
  const auto wide = apply_phase_modulation(plain, Waveform::sinusoid, 30e6, 1.5);
  const auto grid = spectral_grid({plain, wide});
  const double w_plain = full_width_1e(spectrum_of(plain, grid));
  const double w_wide = full_width_1e(spectrum_of(wide, grid));
  EXPECT_GT(w_wide, 60e6);
  const auto ok = check_unfolded(20e6, w_plain);
  EXPECT_TRUE(ok.unfolded);
  const auto bad = check_unfolded(20e6, w_wide);
  EXPECT_FALSE(bad.unfolded);
  EXPECT_NE(bad.diagnostic.find("folding"), std::string::npos);
}

TEST(PowerConversion, MatchesIndependentCalculation) {
  const double h = 6.62607015e-34, c = 299792458.0;
  const double lambda = 1547.32e-9, wg = 4e-9;
  for (double mu : {1e-6, 4.94e-5, 0.2, 1.0, 37.5}) {
    const double want = mu * h * c / lambda / wg;
    const auto r = photon_flux_to_power(mu, lambda, wg);
    EXPECT_NEAR(r.power_watts / want, 1.0, 5e-7) << mu;
    EXPECT_NEAR(r.power_dbm, 10.0 * std::log10(want * 1e3), 1e-6);
    EXPECT_NEAR(power_to_photon_flux(r.power_watts, lambda, wg) / mu, 1.0, 1e-12);
  }
}

TEST(PowerConversion, TelecomAnchors) {
  const double lambda = 1547.32e-9, wg = 4e-9;
  const double mu = power_to_photon_flux(dbm_to_watts(-118.0), lambda, wg);
  EXPECT_NEAR(mu, 4.94e-5, 0.01e-5);
  EXPECT_NEAR(photon_flux_to_power(mu, lambda, wg).power_dbm, -118.0, 1e-9);
  const auto fig2 = photon_flux_to_power(0.2, lambda, wg);
  EXPECT_NEAR(fig2.power_watts, 6.42e-12, 0.01e-12);
  EXPECT_NEAR(fig2.power_dbm, -81.93, 0.01);
  const auto dark = photon_flux_to_power(0.0, lambda, wg);
  EXPECT_EQ(dark.power_watts, 0.0);
  EXPECT_TRUE(std::isinf(dark.power_dbm));
  EXPECT_THROW(photon_flux_to_power(-1.0, lambda, wg), InvalidParameter);
  EXPECT_THROW(photon_flux_to_power(1.0, 0.0, wg), InvalidParameter);
  EXPECT_THROW(photon_flux_to_power(1.0, lambda, 0.0), InvalidParameter);
}

TEST(Bundle, WritesFilesThatReadBack) {
  const auto pair = make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(40e6, 0.25e-6));
  const auto r = deconvolve_reference(fts_transform(analytic_for(pair, 2e-6, 1e-9)), reference_spectrum(pair));
  const auto dir = std::filesystem::temp_directory_path() / "fpfts_bundle_test";
  std::filesystem::remove_all(dir);
  write_fts_bundle(r, dir, {{"note", "x"}});
  std::ifstream beat(dir / "beat.csv");
  EXPECT_EQ(read_spectrum_csv(beat).values.size(), r.beat_spectrum.size());
  EXPECT_TRUE(std::filesystem::exists(dir / "test.csv"));
  std::ifstream meta(dir / "fts.meta");
  std::stringstream ss;
  ss << meta.rdbuf();
  EXPECT_NE(ss.str().find("[fts]"), std::string::npos);
  EXPECT_NE(ss.str().find("beat_frequency_hz = "), std::string::npos);
  EXPECT_NE(ss.str().find("note = x"), std::string::npos);
  std::filesystem::remove_all(dir);
}
