#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "fpfts/classical_heterodyne.hpp"
#include "fpfts/detector_sim.hpp"
#include "fpfts/errors.hpp"
#include "fpfts/quantum_interference.hpp"
#include "fpfts/spectral_analysis.hpp"
#include "fpfts/wavepacket.hpp"

namespace fpfts {

struct PacketSpec {
  double center_frequency = 0.0;
  double coherence_time = 0.25e-6;
  bool modulated = false;
  double modulation_frequency = 0.0;
  double modulation_index = 0.0;

  WavePacket build() const {
    auto p = make_gaussian(center_frequency, coherence_time);
    return modulated ? apply_phase_modulation(p, Waveform::sinusoid, modulation_frequency, modulation_index) : p;
  }

  bool operator==(const PacketSpec&) const = default;
};

struct AnalysisConfig {
  Window window = Window::automatic;
  std::optional<double> noise_floor;  // unset: per-kind default
  double reference_shift = 0.0;       // 0 disables the second run
  std::vector<double> beat_sweep;     // test offsets run in turn; empty: test as configured
  bool compare_unmodulated = false;

  bool operator==(const AnalysisConfig&) const = default;
};

struct EffectivenessConfig {
  std::vector<double> fts_mu_values{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};
  std::vector<double> classical_mu_values{1.0, 3.16, 10.0, 31.6, 100.0, 316.0, 1000.0, 3160.0, 10000.0};

  bool operator==(const EffectivenessConfig&) const = default;
};

struct CurvesConfig {
  double ratio_max = 1.0;
  double ratio_step = 0.01;
  std::size_t angle_points = 91;

  bool operator==(const CurvesConfig&) const = default;
};

struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  unsigned threads = 0;
  double wavelength = 1547.32e-9;
  PacketSpec reference;
  PacketSpec test{40e6, 0.25e-6, false, 0.0, 0.0};
  double intensity_ratio = 1.0;
  double polarization_angle = 0.0;
  DetectorConfig detector;
  AcquisitionPlan plan;
  AnalysisConfig analysis;
  ClassicalBeatConfig classical;
  EffectivenessConfig effectiveness;
  CurvesConfig curves;

  SourcePair source_pair() const {
    return make_source_pair(reference.build(), test.build(), intensity_ratio, polarization_angle);
  }

  // The run seed drives both random processes.
  DetectorConfig detector_config() const {
    DetectorConfig d = detector;
    d.rng_seed = seed;
    return d;
  }
  ClassicalBeatConfig classical_config() const {
    ClassicalBeatConfig c = classical;
    c.seed = detail::stream_seed(seed, 0xc1a55ULL);
    return c;
  }

  bool operator==(const RunConfig&) const = default;
};

namespace config_impl {

using boost::property_tree::ptree;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(path, fmt::format("expected a number, got '{}'", text));
  }
  if (used != t.size()) throw ConfigError(path, fmt::format("expected a number, got '{}'", text));
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

inline std::uint64_t to_u64(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(path, fmt::format("expected a nonnegative integer, got '{}'", text));
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw ConfigError(path, fmt::format("integer out of range: '{}'", text));
  }
}

inline bool to_bool(const std::string& path, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(path, fmt::format("expected true or false, got '{}'", text));
}

inline std::vector<double> to_list(const std::string& path, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(to_double(path, item));
  }
  return out;
}

inline std::string list_text(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += fmt::format("{}{}", i ? ", " : "", v[i]);
  return out;
}

inline void check(bool ok, const std::string& path, const std::string& reason) {
  if (!ok) throw ConfigError(path, reason);
}

// Reads keys of one section, remembering which ones were consumed.
class Section {
 public:
  Section(const ptree* node, std::string name) : node_(node), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!node_) return std::nullopt;
    const auto child = node_->get_child_optional(ptree::path_type(key, '\0'));
    if (!child) return std::nullopt;
    return child->data();
  }
  std::string path(const std::string& key) const { return name_ + "." + key; }

  void number(const std::string& key, double& target) {
    if (auto v = raw(key)) target = to_double(path(key), *v);
  }
  template <class Int>
  void count(const std::string& key, Int& target) {
    if (auto v = raw(key)) {
      const auto n = to_u64(path(key), *v);
      check(n <= std::numeric_limits<Int>::max(), path(key), "too large");
      target = static_cast<Int>(n);
    }
  }
  void flag(const std::string& key, bool& target) {
    if (auto v = raw(key)) target = to_bool(path(key), *v);
  }
  void text(const std::string& key, std::string& target) {
    if (auto v = raw(key)) target = trim(*v);
  }
  void list(const std::string& key, std::vector<double>& target) {
    if (auto v = raw(key)) target = to_list(path(key), *v);
  }

  void reject_unknown() const {
    if (!node_) return;
    for (const auto& [key, child] : *node_)
      if (!used_.count(key)) throw ConfigError(path(key), "unknown key");
  }

 private:
  const ptree* node_;
  std::string name_;
  std::set<std::string> used_;
};

inline void read_packet(Section& s, PacketSpec& p) {
  s.number("center_frequency_hz", p.center_frequency);
  s.number("coherence_time_s", p.coherence_time);
  std::string modulation = p.modulated ? "sinusoid" : "none";
  s.text("modulation", modulation);
  if (modulation == "none") {
    p.modulated = false;
  } else if (modulation == "sinusoid") {
    p.modulated = true;
  } else {
    throw ConfigError(s.path("modulation"), fmt::format("expected none or sinusoid, got '{}'", modulation));
  }
  s.number("modulation_frequency_hz", p.modulation_frequency);
  s.number("modulation_index_rad", p.modulation_index);
}

inline void validate_packet(const PacketSpec& p, const std::string& section) {
  check(p.coherence_time > 0.0, section + ".coherence_time_s", "must be positive");
  if (p.modulated) {
    check(p.modulation_frequency > 0.0, section + ".modulation_frequency_hz", "must be positive");
    check(p.modulation_index >= 0.0, section + ".modulation_index_rad", "must be >= 0");
  }
}

inline void validate_ladder(const std::vector<double>& mu, const std::string& path) {
  check(!mu.empty(), path, "needs at least one value");
  for (std::size_t i = 0; i < mu.size(); ++i) {
    check(mu[i] > 0.0, path, fmt::format("values must be positive (got {})", mu[i]));
    if (i > 0) check(mu[i] > mu[i - 1], path, "values must be strictly ascending");
  }
}

}  // namespace config_impl

/// Rejects out-of-range fields with the dotted path of the first offender.
inline void validate(const RunConfig& c) {
  using config_impl::check;
  check(!c.name.empty(), "run.name", "must not be empty");
  check(!c.output_dir.empty(), "run.output_dir", "must not be empty");
  check(c.wavelength > 0.0, "run.wavelength_m", "must be positive");
  config_impl::validate_packet(c.reference, "reference");
  config_impl::validate_packet(c.test, "test");
  check(c.intensity_ratio >= 0.0, "pair.intensity_ratio", "must be >= 0");
  check(c.polarization_angle >= 0.0 && c.polarization_angle <= detail::kPi / 2.0, "pair.polarization_angle_rad",
        "must lie in [0, pi/2]");

  const auto& d = c.detector;
  check(d.efficiency > 0.0 && d.efficiency <= 1.0, "detector.efficiency", "must lie in (0, 1]");
  check(d.gate_width > 0.0, "detector.gate_width_s", "must be positive");
  check(d.dark_count_prob >= 0.0 && d.dark_count_prob < 1.0, "detector.dark_count_prob", "must lie in [0, 1)");
  check(d.gates_per_point >= 1, "detector.gates_per_point", "must be >= 1");

  const auto& p = c.plan;
  check(p.mu_ref > 0.0, "plan.mu_ref", "must be positive");
  check(p.mu_test > 0.0, "plan.mu_test", "must be positive");
  check(p.mu_ref <= 1e3, "plan.mu_ref", "beyond detector saturation (max 1000)");
  check(p.mu_test <= 1e3, "plan.mu_test", "beyond detector saturation (max 1000)");
  check(p.delay_step > 0.0, "plan.delay_step_s", "must be positive");
  check(p.delay_count >= 16, "plan.delay_count", "must be >= 16");
  check(p.delay_count <= 1u << 24, "plan.delay_count", "must be <= 16777216");

  const double nyquist = 0.5 / p.delay_step;
  auto check_beat = [&](double offset, const std::string& path) {
    const double beat = std::abs(offset - c.reference.center_frequency);
    check(beat < nyquist, path,
          fmt::format("beat {} Hz is above the delay-sampling Nyquist frequency {} Hz; lower plan.delay_step_s", beat,
                      nyquist));
  };
  check_beat(c.test.center_frequency, "test.center_frequency_hz");
  for (double f : c.analysis.beat_sweep) check_beat(f, "analysis.beat_sweep_hz");

  if (c.analysis.noise_floor) check(*c.analysis.noise_floor > 0.0, "analysis.noise_floor", "must be positive");
  check(c.analysis.reference_shift >= 0.0, "analysis.reference_shift_hz", "must be >= 0");
  if (c.analysis.compare_unmodulated)
    check(c.test.modulated, "analysis.compare_unmodulated", "requires test.modulation = sinusoid");

  const auto& k = c.classical;
  check(k.p_ref >= 0.0, "classical.p_ref_w", "must be >= 0");
  check(k.p_test >= 0.0, "classical.p_test_w", "must be >= 0");
  check(k.noise_floor >= 0.0, "classical.noise_floor", "must be >= 0");
  check(k.rin_level >= 0.0, "classical.rin_level", "must be >= 0");
  check(k.esa_span > 0.0, "classical.esa_span_hz", "must be positive");
  check(k.esa_points >= 16, "classical.esa_points", "must be >= 16");

  config_impl::validate_ladder(c.effectiveness.fts_mu_values, "effectiveness.fts_mu_values");
  config_impl::validate_ladder(c.effectiveness.classical_mu_values, "effectiveness.classical_mu_values");
  for (double mu : c.effectiveness.fts_mu_values)
    check(mu <= 1e3, "effectiveness.fts_mu_values", "beyond detector saturation (max 1000)");

  check(c.curves.ratio_max > 0.0, "curves.ratio_max", "must be positive");
  check(c.curves.ratio_step > 0.0 && c.curves.ratio_step <= c.curves.ratio_max, "curves.ratio_step",
        "must lie in (0, ratio_max]");
  check(c.curves.ratio_max / c.curves.ratio_step <= 1e7, "curves.ratio_step", "too many points");
  check(c.curves.angle_points >= 2, "curves.angle_points", "must be >= 2");

  try {
    (void)c.source_pair();
  } catch (const InvalidParameter& e) {
    throw ConfigError("reference/test", e.what());
  }
}

/// Parses `[section]` / `key = value` text. Unknown sections and keys are rejected;
/// a `[result]` section (written into metadata sidecars) is ignored.
inline RunConfig parse_config(std::istream& in) {
  using config_impl::Section;
  config_impl::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config", fmt::format("line {}: {}", e.line(), e.message()));
  }
  static const std::set<std::string> known{"run",    "reference", "test",     "pair",          "detector", "plan",
                                           "analysis", "classical", "effectiveness", "curves", "result"};
  for (const auto& [name, node] : tree) {
    if (!known.count(name)) throw ConfigError(name, "unknown section");
    if (node.empty() && !node.data().empty()) throw ConfigError(name, "key outside any section");
  }
  auto section = [&](const std::string& name) {
    const auto child = tree.get_child_optional(config_impl::ptree::path_type(name, '\0'));
    return Section(child ? &*child : nullptr, name);
  };

  RunConfig c;
  {
    auto s = section("run");
    s.text("name", c.name);
    s.count("seed", c.seed);
    s.text("output_dir", c.output_dir);
    s.count("threads", c.threads);
    s.number("wavelength_m", c.wavelength);
    s.reject_unknown();
  }
  {
    auto s = section("reference");
    config_impl::read_packet(s, c.reference);
    s.reject_unknown();
  }
  {
    auto s = section("test");
    config_impl::read_packet(s, c.test);
    s.reject_unknown();
  }
  {
    auto s = section("pair");
    s.number("intensity_ratio", c.intensity_ratio);
    s.number("polarization_angle_rad", c.polarization_angle);
    s.reject_unknown();
  }
  {
    auto s = section("detector");
    s.number("efficiency", c.detector.efficiency);
    s.number("gate_width_s", c.detector.gate_width);
    s.number("dark_count_prob", c.detector.dark_count_prob);
    s.count("gates_per_point", c.detector.gates_per_point);
    s.reject_unknown();
  }
  {
    auto s = section("plan");
    s.number("mu_ref", c.plan.mu_ref);
    s.number("mu_test", c.plan.mu_test);
    s.number("delay_start_s", c.plan.delay_start);
    s.number("delay_step_s", c.plan.delay_step);
    s.count("delay_count", c.plan.delay_count);
    s.reject_unknown();
  }
  {
    auto s = section("analysis");
    if (auto w = s.raw("window")) {
      try {
        c.analysis.window = window_from_string(config_impl::trim(*w));
      } catch (const InvalidParameter& e) {
        throw ConfigError(s.path("window"), e.what());
      }
    }
    if (auto nf = s.raw("noise_floor")) {
      const auto t = config_impl::trim(*nf);
      c.analysis.noise_floor =
          t == "default" ? std::nullopt : std::optional<double>(config_impl::to_double(s.path("noise_floor"), t));
    }
    s.number("reference_shift_hz", c.analysis.reference_shift);
    s.list("beat_sweep_hz", c.analysis.beat_sweep);
    s.flag("compare_unmodulated", c.analysis.compare_unmodulated);
    s.reject_unknown();
  }
  {
    auto s = section("classical");
    s.number("p_ref_w", c.classical.p_ref);
    s.number("p_test_w", c.classical.p_test);
    s.number("noise_floor", c.classical.noise_floor);
    s.number("rin_level", c.classical.rin_level);
    s.number("esa_span_hz", c.classical.esa_span);
    s.count("esa_points", c.classical.esa_points);
    s.count("averages", c.classical.averages);
    s.reject_unknown();
  }
  {
    auto s = section("effectiveness");
    s.list("fts_mu_values", c.effectiveness.fts_mu_values);
    s.list("classical_mu_values", c.effectiveness.classical_mu_values);
    s.reject_unknown();
  }
  {
    auto s = section("curves");
    s.number("ratio_max", c.curves.ratio_max);
    s.number("ratio_step", c.curves.ratio_step);
    s.count("angle_points", c.curves.angle_points);
    s.reject_unknown();
  }
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", fmt::format("cannot open '{}'", path.string()));
  return parse_config(in);
}

// Every field, so that parse_config(emit) reproduces the configuration.
inline void emit_config(const RunConfig& c, std::ostream& os) {
  auto packet = [&](const char* name, const PacketSpec& p) {
    os << fmt::format("[{}]\n", name);
    os << fmt::format("center_frequency_hz = {}\n", p.center_frequency);
    os << fmt::format("coherence_time_s = {}\n", p.coherence_time);
    os << fmt::format("modulation = {}\n", p.modulated ? "sinusoid" : "none");
    os << fmt::format("modulation_frequency_hz = {}\n", p.modulation_frequency);
    os << fmt::format("modulation_index_rad = {}\n\n", p.modulation_index);
  };
  os << "[run]\n";
  os << fmt::format("name = {}\n", c.name);
  os << fmt::format("seed = {}\n", c.seed);
  os << fmt::format("output_dir = {}\n", c.output_dir);
  os << fmt::format("threads = {}\n", c.threads);
  os << fmt::format("wavelength_m = {}\n\n", c.wavelength);
  packet("reference", c.reference);
  packet("test", c.test);
  os << "[pair]\n";
  os << fmt::format("intensity_ratio = {}\n", c.intensity_ratio);
  os << fmt::format("polarization_angle_rad = {}\n\n", c.polarization_angle);
  os << "[detector]\n";
  os << fmt::format("efficiency = {}\n", c.detector.efficiency);
  os << fmt::format("gate_width_s = {}\n", c.detector.gate_width);
  os << fmt::format("dark_count_prob = {}\n", c.detector.dark_count_prob);
  os << fmt::format("gates_per_point = {}\n\n", c.detector.gates_per_point);
  os << "[plan]\n";
  os << fmt::format("mu_ref = {}\n", c.plan.mu_ref);
  os << fmt::format("mu_test = {}\n", c.plan.mu_test);
  os << fmt::format("delay_start_s = {}\n", c.plan.delay_start);
  os << fmt::format("delay_step_s = {}\n", c.plan.delay_step);
  os << fmt::format("delay_count = {}\n\n", c.plan.delay_count);
  os << "[analysis]\n";
  os << fmt::format("window = {}\n", to_string(c.analysis.window));
  os << fmt::format("noise_floor = {}\n", c.analysis.noise_floor ? fmt::format("{}", *c.analysis.noise_floor) : "default");
  os << fmt::format("reference_shift_hz = {}\n", c.analysis.reference_shift);
  os << fmt::format("beat_sweep_hz = {}\n", config_impl::list_text(c.analysis.beat_sweep));
  os << fmt::format("compare_unmodulated = {}\n\n", c.analysis.compare_unmodulated);
  os << "[classical]\n";
  os << fmt::format("p_ref_w = {}\n", c.classical.p_ref);
  os << fmt::format("p_test_w = {}\n", c.classical.p_test);
  os << fmt::format("noise_floor = {}\n", c.classical.noise_floor);
  os << fmt::format("rin_level = {}\n", c.classical.rin_level);
  os << fmt::format("esa_span_hz = {}\n", c.classical.esa_span);
  os << fmt::format("esa_points = {}\n", c.classical.esa_points);
  os << fmt::format("averages = {}\n\n", c.classical.averages);
  os << "[effectiveness]\n";
  os << fmt::format("fts_mu_values = {}\n", config_impl::list_text(c.effectiveness.fts_mu_values));
  os << fmt::format("classical_mu_values = {}\n\n", config_impl::list_text(c.effectiveness.classical_mu_values));
  os << "[curves]\n";
  os << fmt::format("ratio_max = {}\n", c.curves.ratio_max);
  os << fmt::format("ratio_step = {}\n", c.curves.ratio_step);
  os << fmt::format("angle_points = {}\n", c.curves.angle_points);
}

inline std::string emit_config(const RunConfig& c) {
  std::ostringstream os;
  emit_config(c, os);
  return os.str();
}

// --out beats FPFTS_OUTPUT_DIR, which beats the config's run.output_dir.
inline std::filesystem::path resolve_output_dir(const std::optional<std::string>& cli_out, const RunConfig& c) {
  if (cli_out && !cli_out->empty()) return *cli_out;
  if (const char* env = std::getenv("FPFTS_OUTPUT_DIR"); env && *env) return env;
  return c.output_dir;
}

}  // namespace fpfts
