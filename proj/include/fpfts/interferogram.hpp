#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fpfts/errors.hpp"

namespace fpfts {

enum class InterferogramKind { analytic, counts };

inline std::string to_string(InterferogramKind k) { return k == InterferogramKind::analytic ? "analytic" : "counts"; }

/// Coincidence probability (analytic) or counted coincidences (Monte Carlo) versus
/// the relative detection delay. Counted interferograms also carry the expected
/// per-gate probability that generated them.
struct Interferogram {
  InterferogramKind kind = InterferogramKind::analytic;
  std::vector<double> delays;
  std::vector<double> probability;
  std::vector<std::uint64_t> counts;
  std::vector<std::uint64_t> gates;
  std::map<std::string, std::string> metadata;

  std::size_t size() const noexcept { return delays.size(); }

  double delay_step() const { return delays.size() < 2 ? 0.0 : delays[1] - delays[0]; }

  double span() const { return static_cast<double>(delays.size()) * delay_step(); }

  // Observed coincidence fraction per delay.
  std::vector<double> values() const {
    if (kind == InterferogramKind::analytic) return probability;
    std::vector<double> v(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
      v[k] = gates[k] > 0 ? static_cast<double>(counts[k]) / static_cast<double>(gates[k]) : 0.0;
    return v;
  }

  void validate() const {
    if (delays.size() < 2) throw InvalidInput("interferogram: need at least two delays");
    const double step = delay_step();
    if (!(step > 0.0)) throw InvalidInput("interferogram: delays must be strictly increasing");
    for (std::size_t k = 1; k < delays.size(); ++k) {
      const double d = delays[k] - delays[k - 1];
      if (!(d > 0.0)) throw InvalidInput("interferogram: delays must be strictly increasing");
      if (std::abs(d - step) > 1e-6 * step) throw InvalidInput("interferogram: delays are not uniformly spaced");
    }
    if (kind == InterferogramKind::analytic) {
      if (probability.size() != delays.size()) throw InvalidInput("interferogram: probability length mismatch");
      for (double p : probability)
        if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInput("interferogram: probabilities must be >= 0");
    } else {
      if (counts.size() != delays.size() || gates.size() != delays.size())
        throw InvalidInput("interferogram: counts/gates length mismatch");
      for (std::size_t k = 0; k < counts.size(); ++k) {
        if (gates[k] == 0) throw InvalidInput(fmt::format("interferogram: zero gates at delay index {}", k));
        if (counts[k] > gates[k]) throw InvalidInput("interferogram: counts exceed gates");
      }
    }
  }
};

// CSV with header `delay_s,counts,gates,probability`. Analytic rows leave counts and
// gates empty.
inline void write_interferogram_csv(const Interferogram& ig, std::ostream& os) {
  os << "delay_s,counts,gates,probability\n";
  for (std::size_t k = 0; k < ig.size(); ++k) {
    if (ig.kind == InterferogramKind::analytic) {
      os << fmt::format("{},,,{}\n", ig.delays[k], ig.probability[k]);
    } else {
      const double p = k < ig.probability.size() ? ig.probability[k] : 0.0;
      os << fmt::format("{},{},{},{}\n", ig.delays[k], ig.counts[k], ig.gates[k], p);
    }
  }
}

inline Interferogram read_interferogram_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("delay_s,counts,gates,probability", 0) != 0)
    throw InvalidInput("interferogram csv: missing header 'delay_s,counts,gates,probability'");
  Interferogram ig;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() == 3) cells.emplace_back();
    if (cells.size() != 4) throw InvalidInput("interferogram csv: malformed row '" + line + "'");
    const bool has_counts = !cells[1].empty();
    if (first) {
      ig.kind = has_counts ? InterferogramKind::counts : InterferogramKind::analytic;
      first = false;
    }
    ig.delays.push_back(std::stod(cells[0]));
    if (has_counts) {
      ig.counts.push_back(std::stoull(cells[1]));
      ig.gates.push_back(std::stoull(cells[2]));
    }
    ig.probability.push_back(cells[3].empty() ? 0.0 : std::stod(cells[3]));
  }
  ig.validate();
  return ig;
}

}  // namespace fpfts
