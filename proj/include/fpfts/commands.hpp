#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fpfts/classical_heterodyne.hpp"
#include "fpfts/config.hpp"
#include "fpfts/detector_sim.hpp"
#include "fpfts/interferogram.hpp"
#include "fpfts/quantum_interference.hpp"
#include "fpfts/spectral_analysis.hpp"
#include "fpfts/spectrum.hpp"
#include "fpfts/wavepacket.hpp"

namespace fpfts {

struct CommandOptions {
  std::filesystem::path out_dir = "out";
  bool analytic_only = false;
  unsigned threads = 0;  // 0: the config's run.threads
};

// Values reported in the [result] section of a command's metadata sidecar.
using ResultMap = std::map<std::string, std::string>;

namespace cmd_impl {

inline unsigned threads(const RunConfig& cfg, const CommandOptions& opts) {
  return opts.threads ? opts.threads : cfg.threads;
}

inline std::string num(double v) { return fmt::format("{}", v); }

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(fmt::format("cannot write '{}'", path.string()));
  return os;
}

inline void write_csv(const std::filesystem::path& path, const Interferogram& ig) {
  auto os = open_out(path);
  write_interferogram_csv(ig, os);
}

inline void write_csv(const std::filesystem::path& path, const Spectrum& s) {
  auto os = open_out(path);
  write_spectrum_csv(s, os);
}

// Config sidecar plus a [result] section that parse_config skips.
inline void write_meta(const std::filesystem::path& path, const RunConfig& cfg, const ResultMap& result) {
  auto os = open_out(path);
  emit_config(cfg, os);
  os << "\n[result]\n";
  for (const auto& [k, v] : result) os << k << " = " << v << "\n";
  if (!os) throw Error(fmt::format("failed writing '{}'", path.string()));
}

inline std::string mhz_tag(double hz) { return fmt::format("{}MHz", std::round(hz / 1e3) / 1e3); }

}  // namespace cmd_impl

/// Counted and analytic interferograms for the configured pair, with fitted
/// visibilities in interferogram.meta.
inline ResultMap cmd_interferogram(const RunConfig& cfg, const CommandOptions& opts) {
  validate(cfg);
  const unsigned threads = cmd_impl::threads(cfg, opts);
  std::filesystem::create_directories(opts.out_dir);
  const auto pair = cfg.source_pair();
  const auto grid = quadrature_grid({pair.reference, pair.test});
  ResultMap result;

  const auto analytic = analytic_interferogram(pair, cfg.plan.delays(), grid, false, threads);
  cmd_impl::write_csv(opts.out_dir / "interferogram_analytic.csv", analytic);
  const auto fa = fit_visibility(analytic);
  result["analytic.visibility"] = cmd_impl::num(fa.visibility);
  result["analytic.expected_visibility"] = analytic.metadata.at("expected_visibility");
  result["analytic.beat_frequency_hz"] = cmd_impl::num(fa.beat_frequency);

  if (!opts.analytic_only) {
    const auto counted = simulate_acquisition(pair, cfg.detector_config(), cfg.plan, grid, threads);
    cmd_impl::write_csv(opts.out_dir / "interferogram_counts.csv", counted);
    const auto fc = fit_visibility(counted);
    result["counts.visibility"] = cmd_impl::num(fc.visibility);
    result["counts.visibility_std"] = cmd_impl::num(fc.visibility_std);
    result["counts.beat_frequency_hz"] = cmd_impl::num(fc.beat_frequency);
    result["counts.envelope_width_s"] = cmd_impl::num(fc.envelope_width);
    result["counts.reduced_chi2"] = cmd_impl::num(fc.reduced_chi2);
    result["counts.accidental_probability"] = counted.metadata.at("accidental_probability");
  }
  const auto power = photon_flux_to_power(cfg.plan.mu_ref, cfg.wavelength, cfg.detector.gate_width);
  result["reference_power_dbm"] = cmd_impl::num(power.power_dbm);
  cmd_impl::write_meta(opts.out_dir / "interferogram.meta", cfg, result);
  return result;
}

namespace cmd_impl {

struct FtsCase {
  std::string name;
  PacketSpec test;
  std::uint64_t stream;
};

inline Interferogram acquire(const RunConfig& cfg, const SourcePair& pair, std::uint64_t stream,
                             const CommandOptions& opts) {
  const auto grid = quadrature_grid({pair.reference, pair.test});
  if (opts.analytic_only) return analytic_interferogram(pair, cfg.plan.delays(), grid, true, threads(cfg, opts));
  DetectorConfig det = cfg.detector_config();
  det.rng_seed = detail::stream_seed(cfg.seed, stream);
  return simulate_acquisition(pair, det, cfg.plan, grid, threads(cfg, opts));
}

inline void run_fts_case(const RunConfig& cfg, const FtsCase& c, const CommandOptions& opts, ResultMap& summary) {
  const auto dir = opts.out_dir / c.name;
  std::filesystem::create_directories(dir);
  const auto pair = make_source_pair(cfg.reference.build(), c.test.build(), cfg.intensity_ratio, cfg.polarization_angle);
  const auto ig = acquire(cfg, pair, c.stream, opts);
  write_csv(dir / "interferogram.csv", ig);

  const auto reference_spectrum = spectrum_of(pair.reference, spectral_grid({pair.reference, pair.test}));
  FtsResult fts = deconvolve_reference(fts_transform(ig, cfg.analysis.window), reference_spectrum,
                                       cfg.analysis.noise_floor);
  ResultMap extra;
  double signed_beat = fts.beat_frequency;
  if (cfg.analysis.reference_shift > 0.0) {
    PacketSpec shifted = cfg.reference;
    shifted.center_frequency += cfg.analysis.reference_shift;
    const auto pair_b = make_source_pair(shifted.build(), c.test.build(), cfg.intensity_ratio, cfg.polarization_angle);
    const auto fts_b = fts_transform(acquire(cfg, pair_b, c.stream + 0x10000ULL, opts), cfg.analysis.window);
    write_csv(dir / "beat_shifted.csv", fts_b.beat_spectrum);
    signed_beat = resolve_ambiguity(fts, fts_b, cfg.analysis.reference_shift);
    extra["shifted_beat_frequency_hz"] = num(fts_b.beat_frequency);
    extra["sign"] = "resolved";
  } else {
    extra["sign"] = "assumed positive (no reference shift configured)";
  }
  // Onto the reference-relative axis; a test below the reference comes out mirrored.
  Spectrum test = signed_beat < 0.0 ? mirrored(*fts.test_spectrum, 0.0) : *fts.test_spectrum;
  test.f_start += signed_beat;
  fts.test_spectrum = test;

  const auto unfold = check_unfolded(fts.beat_frequency, full_width_1e(test));
  if (!unfold.unfolded) fts.warnings.push_back(unfold.diagnostic);

  const auto esa = simulate_esa_spectrum(pair, cfg.classical_config());
  write_csv(dir / "esa.csv", esa);
  const auto fit = gaussian_fit_r2(esa, std::abs(pair.detuning()));

  {
    auto os = open_out(dir / "overlay.csv");
    os << "frequency_hz,fts_beat_au,classical_beat_au\n";
    const double fts_peak = fts.beat_spectrum.peak_value();
    const double esa_peak = std::max(fit.amplitude, 1e-300);
    for (std::size_t k = 0; k < esa.size(); ++k) {
      const double f = esa.frequency(k);
      os << fmt::format("{},{},{}\n", f, fts.beat_spectrum.at(f) / fts_peak, (esa.values[k] - fit.floor) / esa_peak);
    }
  }

  extra["signed_frequency_hz"] = num(signed_beat);
  extra["true_detuning_hz"] = num(pair.detuning());
  extra["classical_center_hz"] = num(fit.center);
  extra["classical_width_hz"] = num(fit.width);
  extra["classical_r_squared"] = num(fit.r_squared);
  extra["test_rms_width_hz"] = num(rms_width(test));
  extra["test_full_width_1e_hz"] = num(full_width_1e(test));
  extra["beat_rms_width_hz"] = num(rms_width(fts.beat_spectrum));
  extra["coherence_width_s"] = num(coherence_width(ig));
  extra["unfolded"] = unfold.unfolded ? "true" : "false";
  write_fts_bundle(fts, dir, extra);

  summary[c.name + ".beat_frequency_hz"] = num(fts.beat_frequency);
  summary[c.name + ".signed_frequency_hz"] = num(signed_beat);
  summary[c.name + ".classical_center_hz"] = num(fit.center);
  summary[c.name + ".resolution_hz"] = num(fts.resolution);
  summary[c.name + ".test_rms_width_hz"] = extra["test_rms_width_hz"];
}

}  // namespace cmd_impl

/// Few-photon FTS pipeline next to the classical ESA trace. One subdirectory per
/// case: a beat sweep gives one case per test offset; compare_unmodulated runs the
/// test with and without its phase modulation.
inline ResultMap cmd_fts(const RunConfig& cfg, const CommandOptions& opts) {
  validate(cfg);
  std::filesystem::create_directories(opts.out_dir);
  std::vector<cmd_impl::FtsCase> cases;
  if (!cfg.analysis.beat_sweep.empty()) {
    for (std::size_t i = 0; i < cfg.analysis.beat_sweep.size(); ++i) {
      PacketSpec t = cfg.test;
      t.center_frequency = cfg.analysis.beat_sweep[i];
      cases.push_back({"beat_" + cmd_impl::mhz_tag(t.center_frequency - cfg.reference.center_frequency), t, i});
    }
  } else if (cfg.analysis.compare_unmodulated) {
    PacketSpec off = cfg.test;
    off.modulated = false;
    cases.push_back({"modulated", cfg.test, 0});
    cases.push_back({"unmodulated", off, 1});
  } else {
    cases.push_back({"fts", cfg.test, 0});
  }
  ResultMap summary;
  for (const auto& c : cases) {
    try {
      cmd_impl::run_fts_case(cfg, c, opts, summary);
    } catch (const Error& e) {
      throw Error(fmt::format("case {}: {}", c.name, e.what()));
    }
  }
  cmd_impl::write_meta(opts.out_dir / "fts.meta", cfg, summary);
  return summary;
}

/// Visibility versus mu for the few-photon FTS and R^2 versus mu for the classical
/// heterodyne baseline.
inline ResultMap cmd_effectiveness(const RunConfig& cfg, const CommandOptions& opts) {
  validate(cfg);
  std::filesystem::create_directories(opts.out_dir);
  const unsigned threads = cmd_impl::threads(cfg, opts);
  const auto pair = cfg.source_pair();
  const auto& fts_mu = cfg.effectiveness.fts_mu_values;

  std::vector<EffectivenessPoint> fts;
  if (opts.analytic_only) {
    // Expected coincidence probabilities, no sampling noise.
    const auto grid = quadrature_grid({pair.reference, pair.test});
    for (double mu : fts_mu) {
      AcquisitionPlan plan = cfg.plan;
      plan.mu_ref = plan.mu_test = mu;
      auto ig = simulate_acquisition(pair, cfg.detector_config(), plan, grid, threads);
      ig.kind = InterferogramKind::analytic;
      ig.counts.clear();
      ig.gates.clear();
      fts.push_back({mu, fit_visibility(ig).visibility, 0.0});
    }
  } else {
    fts = effectiveness_sweep(pair, cfg.detector_config(), fts_mu, cfg.plan, threads);
  }
  const auto classical = classical_effectiveness_sweep(pair, cfg.classical_config(), cfg.effectiveness.classical_mu_values,
                                                       cfg.wavelength, cfg.detector.gate_width, threads);
  {
    auto os = cmd_impl::open_out(opts.out_dir / "effectiveness_fts.csv");
    os << "mu,visibility,visibility_std\n";
    for (const auto& p : fts) os << fmt::format("{},{},{}\n", p.mu, p.visibility, p.visibility_std);
  }
  {
    auto os = cmd_impl::open_out(opts.out_dir / "effectiveness_classical.csv");
    os << "mu,r_squared\n";
    for (const auto& p : classical) os << fmt::format("{},{}\n", p.mu, p.r_squared);
  }

  ResultMap result;
  double v_max = 0.0;
  for (const auto& p : fts) v_max = std::max(v_max, p.visibility);
  // Smallest ladder mu from which the classical fit holds (R^2 >= 0.5) all the way up.
  std::optional<double> crossover;
  for (auto it = classical.rbegin(); it != classical.rend() && it->r_squared >= 0.5; ++it) crossover = it->mu;
  result["fts.max_visibility"] = cmd_impl::num(v_max);
  result["classical.crossover_mu"] = crossover ? cmd_impl::num(*crossover) : "none";
  if (crossover)
    result["classical.crossover_power_dbm"] =
        cmd_impl::num(photon_flux_to_power(*crossover, cfg.wavelength, cfg.detector.gate_width).power_dbm);
  cmd_impl::write_meta(opts.out_dir / "effectiveness.meta", cfg, result);
  return result;
}

/// Closed-form visibility against intensity ratio and polarization angle.
inline ResultMap cmd_visibility_curves(const RunConfig& cfg, const CommandOptions& opts) {
  validate(cfg);
  std::filesystem::create_directories(opts.out_dir);
  const auto n_ratio = static_cast<std::size_t>(std::llround(cfg.curves.ratio_max / cfg.curves.ratio_step));
  {
    auto os = cmd_impl::open_out(opts.out_dir / "visibility_ratio.csv");
    os << "ratio,visibility\n";
    for (std::size_t k = 0; k <= n_ratio; ++k) {
      const double r = std::min(cfg.curves.ratio_max, static_cast<double>(k) * cfg.curves.ratio_step);
      os << fmt::format("{},{}\n", r, visibility_from_ratio(r));
    }
  }
  {
    auto os = cmd_impl::open_out(opts.out_dir / "visibility_angle.csv");
    os << "angle_rad,visibility\n";
    const std::size_t n = cfg.curves.angle_points;
    for (std::size_t k = 0; k < n; ++k) {
      const double theta =
          k + 1 == n ? detail::kPi / 2.0 : detail::kPi / 2.0 * static_cast<double>(k) / static_cast<double>(n - 1);
      os << fmt::format("{},{}\n", theta, visibility_from_ratio(ratio_from_polarization(theta)));
    }
  }
  ResultMap result;
  result["visibility_at_ratio_1"] = cmd_impl::num(visibility_from_ratio(1.0));
  result["visibility_at_ratio_0.8"] = cmd_impl::num(visibility_from_ratio(0.8));
  result["visibility_at_angle_0.1pi"] = cmd_impl::num(visibility_from_ratio(ratio_from_polarization(0.1 * detail::kPi)));
  result["visibility_at_angle_pi_over_2"] =
      cmd_impl::num(visibility_from_ratio(ratio_from_polarization(detail::kPi / 2.0)));
  cmd_impl::write_meta(opts.out_dir / "visibility_curves.meta", cfg, result);
  return result;
}

}  // namespace fpfts
