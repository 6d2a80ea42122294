#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "fpfts/detector_sim.hpp"
#include "oracles.hpp"

using namespace fpfts;

namespace {

SourcePair fig2_pair(double detuning = 40e6) {
  return make_source_pair(make_gaussian(0.0, 0.25e-6), make_gaussian(detuning, 0.25e-6));
}

// Photon-level simulation of one gate: uniform optical phase, Poissonian photon
// numbers in each output port, threshold detection with independent dark clicks.
double brute_force_coincidence(double mu_ref, double mu_test, double eta, double dark, double overlap,
                               std::complex<double> coherence, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * oracle::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution dark_click(dark);
  const double a = 0.5 * (mu_ref + mu_test);
  const double b = std::sqrt(mu_ref * mu_test * overlap);
  const double c = std::abs(coherence);
  const double spread = c > 0.0 ? std::sqrt(-2.0 * std::log(c)) : 0.0;
  long hits = 0;
  for (int i = 0; i < trials; ++i) {
    const double phi_a = uni(rng);
    const double phi_b = c > 0.0 ? phi_a + std::arg(coherence) + spread * gauss(rng) : uni(rng);
    std::poisson_distribution<int> na(eta * (a + b * std::cos(phi_a)));
    std::poisson_distribution<int> nb(eta * (a - b * std::cos(phi_b)));
    const bool click_a = na(rng) > 0 || dark_click(rng);
    const bool click_b = nb(rng) > 0 || dark_click(rng);
    hits += click_a && click_b;
  }
  return static_cast<double>(hits) / trials;
}

AcquisitionPlan short_plan(double mu, std::size_t count = 200, double step = 5e-9) {
  AcquisitionPlan plan;
  plan.mu_ref = plan.mu_test = mu;
  plan.delay_count = count;
  plan.delay_step = step;
  plan.delay_start = -0.5 * step * static_cast<double>(count);
  return plan;
}

double binomial_sigma(std::uint64_t gates, double p) { return std::sqrt(static_cast<double>(gates) * p * (1.0 - p)); }

// Visibility error from the Fisher information of binomial counts under the
// four-parameter fringe model, evaluated at the given parameters.
double fisher_visibility_std(const Interferogram& ig, const VisibilityFit& fit) {
  Eigen::Vector4d theta(fit.plateau, fit.visibility, fit.envelope_width, fit.beat_frequency);
  auto model = [&](const Eigen::Vector4d& q, double t) {
    return q[0] * (1.0 - q[1] * std::exp(-t * t / (2 * q[2] * q[2])) * std::cos(2 * oracle::pi * q[3] * t));
  };
  Eigen::Matrix4d info = Eigen::Matrix4d::Zero();
  for (std::size_t k = 0; k < ig.size(); ++k) {
    const double t = ig.delays[k];
    Eigen::Vector4d grad;
    for (int j = 0; j < 4; ++j) {
      Eigen::Vector4d hi = theta, lo = theta;
      const double h = 1e-6 * std::max(std::abs(theta[j]), 1e-3);
      hi[j] += h;
      lo[j] -= h;
      grad[j] = (model(hi, t) - model(lo, t)) / (2 * h);
    }
    const double p = std::max(model(theta, t), 1e-300);
    info += static_cast<double>(ig.gates[k]) / (p * (1 - p)) * grad * grad.transpose();
  }
  return std::sqrt(info.inverse()(1, 1));
}

Interferogram expected_only(const Interferogram& counted) {
  Interferogram ig;
  ig.kind = InterferogramKind::analytic;
  ig.delays = counted.delays;
  ig.probability = counted.probability;
  return ig;
}

}  // namespace

TEST(CoincidenceModel, MatchesPhotonLevelSimulation) {
  struct Case {
    double mu_ref, mu_test, eta, dark, overlap;
    std::complex<double> coherence;
  };
  const Case cases[] = {
      {1.0, 1.0, 0.5, 0.0, 1.0, {1.0, 0.0}},
      {1.0, 1.0, 0.5, 0.01, 1.0, std::polar(0.6, 0.7)},
      {0.3, 2.0, 0.8, 0.05, 0.5, std::polar(0.9, 2.5)},
      {20.0, 20.0, 0.15, 1e-3, 1.0, std::polar(0.8, 0.0)},
      {2.0, 0.5, 1.0, 0.0, 1.0, {0.0, 0.0}},
  };
  const int trials = 400000;
  std::uint64_t seed = 11;
  for (const auto& c : cases) {
    const CoincidenceModel model(c.mu_ref, c.mu_test, c.eta, c.dark, c.overlap);
    const double p = model.probability(c.coherence);
    const double mc = brute_force_coincidence(c.mu_ref, c.mu_test, c.eta, c.dark, c.overlap, c.coherence, trials, seed++);
    EXPECT_NEAR(mc, p, 4.5 * std::sqrt(p * (1 - p) / trials)) << c.mu_ref << " " << c.mu_test << " " << c.coherence;
  }
}

TEST(CoincidenceModel, FewPhotonLimit) {
  const double eta = 0.15, mu_r = 1e-4, mu_t = 3e-4, m = 0.7;
  const CoincidenceModel model(mu_r, mu_t, eta, 0.0, m);
  for (auto g : {std::complex<double>(1, 0), std::polar(0.5, 1.0), std::polar(0.9, -2.0), std::complex<double>(0, 0)}) {
    const double limit = eta * eta * (std::pow(mu_r + mu_t, 2) / 4 - mu_r * mu_t * m * g.real() / 2);
    EXPECT_NEAR(model.probability(g) / limit, 1.0, 2e-3) << g;
  }
}

TEST(CoincidenceModel, AccidentalsAreProductOfSingles) {
  const double eta = 0.15, mu = 0.2, dark = 1e-3;
  const CoincidenceModel model(mu, 0.0, eta, dark, 1.0);
  const double single = 1.0 - (1.0 - dark) * std::exp(-eta * mu / 2);
  EXPECT_NEAR(model.singles_probability(), single, 1e-12);
  EXPECT_NEAR(model.accidental_probability(), single * single, 1e-14);
  EXPECT_NEAR(model.probability(std::polar(0.8, 0.3)), single * single, 1e-14);
}

TEST(CoincidenceModel, RejectsOutOfRange) {
  EXPECT_THROW(CoincidenceModel(2e3, 0.2, 0.15, 0.0, 1.0), ModelOverflow);
  EXPECT_THROW(CoincidenceModel(-0.1, 0.2, 0.15, 0.0, 1.0), InvalidParameter);
  EXPECT_THROW(CoincidenceModel(0.1, 0.2, 0.15, 0.0, 1.5), InvalidParameter);
}

TEST(DetectorConfig, Validation) {
  DetectorConfig d;
  EXPECT_NO_THROW(d.validate());
  d.efficiency = 1.2;
  EXPECT_THROW(d.validate(), InvalidParameter);
  d = {};
  d.dark_count_prob = -1e-5;
  EXPECT_THROW(d.validate(), InvalidParameter);
  d = {};
  d.gates_per_point = 0;
  EXPECT_THROW(d.validate(), InvalidParameter);
  AcquisitionPlan plan;
  plan.mu_test = -0.2;
  EXPECT_THROW(plan.validate(), InvalidParameter);
  plan = {};
  plan.delay_step = 0.0;
  EXPECT_THROW(plan.validate(), InvalidParameter);
}

TEST(Acquisition, HugeMeanPhotonNumberOverflows) {
  DetectorConfig det;
  EXPECT_THROW(simulate_acquisition(fig2_pair(), det, short_plan(5e3)), ModelOverflow);
}

TEST(Acquisition, NoTestLightGivesAccidentalsOnly) {
  DetectorConfig det;
  det.dark_count_prob = 1e-3;
  det.gates_per_point = 200000;
  auto plan = short_plan(0.2);
  plan.mu_test = 0.0;
  const auto ig = simulate_acquisition(fig2_pair(), det, plan);
  const double single = 1.0 - (1.0 - det.dark_count_prob) * std::exp(-det.efficiency * plan.mu_ref / 2);
  const double p = single * single;
  double total = 0;
  for (auto c : ig.counts) total += static_cast<double>(c);
  const double n = static_cast<double>(det.gates_per_point * ig.size());
  EXPECT_NEAR(total, n * p, 3.0 * std::sqrt(n * p * (1 - p)));
  for (double q : ig.probability) EXPECT_NEAR(q, p, 1e-15);
}

TEST(Acquisition, ConvergesToScaledAnalyticCurve) {
  const auto pair = fig2_pair();
  DetectorConfig det;
  det.dark_count_prob = 0.0;
  det.gates_per_point = 1000000;
  det.rng_seed = 21;
  const double mu = 0.05;
  const auto plan = short_plan(mu);
  const auto ig = simulate_acquisition(pair, det, plan);
  const auto grid = quadrature_grid({pair.reference, pair.test});
  const auto curve = analytic_interferogram(pair, ig.delays, grid, true);
  const double scale = std::pow(det.efficiency * mu, 2);
  for (std::size_t k = 0; k < ig.size(); ++k) {
    const double p = scale * curve.probability[k];
    const double g = static_cast<double>(det.gates_per_point);
    EXPECT_LT(std::abs(static_cast<double>(ig.counts[k]) - g * p), 4.0 * binomial_sigma(det.gates_per_point, p))
        << "delay " << ig.delays[k];
  }
}

TEST(Acquisition, CountsStatisticallySoundOverManySeeds) {
  const auto pair = fig2_pair();
  DetectorConfig det;
  det.dark_count_prob = 0.0;
  det.gates_per_point = 1000000;
  const auto plan = short_plan(0.05);
  const auto grid = quadrature_grid({pair.reference, pair.test});
  std::size_t inside = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    det.rng_seed = seed;
    const auto ig = simulate_acquisition(pair, det, plan, grid);
    for (std::size_t k = 0; k < ig.size(); ++k) {
      const double mean = static_cast<double>(det.gates_per_point) * ig.probability[k];
      inside += std::abs(static_cast<double>(ig.counts[k]) - mean) <= 4.0 * binomial_sigma(det.gates_per_point, ig.probability[k]);
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(inside) / static_cast<double>(total), 0.99);
}

TEST(Acquisition, DeterministicAcrossThreadCounts) {
  const auto pair = fig2_pair();
  DetectorConfig det;
  det.rng_seed = 99;
  const auto plan = short_plan(0.2, 1000, 1e-9);
  const auto one = simulate_acquisition(pair, det, plan, 1);
  const auto four = simulate_acquisition(pair, det, plan, 4);
  EXPECT_EQ(one.counts, four.counts);
  EXPECT_EQ(one.probability, four.probability);
  det.rng_seed = 100;
  EXPECT_NE(simulate_acquisition(pair, det, plan, 2).counts, one.counts);
}

TEST(VisibilityFit, RecoversGeneratingVisibility) {
  const auto pair = fig2_pair();
  DetectorConfig det;
  det.rng_seed = 5;
  AcquisitionPlan plan;  // 8000 delays at 500 ps, mu = 0.2
  const auto ig = simulate_acquisition(pair, det, plan);
  const auto truth = fit_visibility(expected_only(ig));
  const auto fit = fit_visibility(ig);
  EXPECT_NEAR(fit.visibility, truth.visibility, 3.0 * fit.visibility_std);
  EXPECT_NEAR(fit.visibility, 0.5, 3.0 * fit.visibility_std);
  EXPECT_NEAR(fit.beat_frequency, 40e6, 0.5e6);
  EXPECT_NEAR(fit.reduced_chi2, 1.0, 0.1);
}

TEST(VisibilityFit, ErrorMatchesFisherInformation) {
  const auto pair = fig2_pair();
  DetectorConfig det;
  det.rng_seed = 8;
  auto plan = short_plan(0.02, 2000, 1e-9);
  const auto ig = simulate_acquisition(pair, det, plan);
  const auto fit = fit_visibility(ig);
  EXPECT_NEAR(fit.visibility_std / fisher_visibility_std(ig, fit), 1.0, 0.2);
}

TEST(VisibilityFit, NoiseDominatedAtDarkCountFloor) {
  const auto pair = fig2_pair();
  DetectorConfig det;
  det.rng_seed = 13;
  AcquisitionPlan plan;
  plan.mu_ref = plan.mu_test = 10.0 * det.dark_count_prob / det.efficiency;
  const auto ig = simulate_acquisition(pair, det, plan);
  const auto truth = fit_visibility(expected_only(ig));
  const auto fit = fit_visibility(ig);
  EXPECT_GT(truth.visibility, 0.4);
  EXPECT_GE(fit.visibility_std, 0.5 * truth.visibility);
  // Same operating point with the whole fringe model known: still an error of order V.
  VisibilityFit at_truth = truth;
  EXPECT_GE(fisher_visibility_std(ig, at_truth), 0.5 * truth.visibility);
}

TEST(VisibilityFit, FlatInterferogramHasNoVisibility) {
  auto pair = fig2_pair();
  pair.polarization_angle = oracle::pi / 2;
  DetectorConfig det;
  det.rng_seed = 3;
  const auto ig = simulate_acquisition(pair, det, short_plan(0.2, 2000, 1e-9));
  for (double p : ig.probability) EXPECT_DOUBLE_EQ(p, ig.probability.front());
  const auto fit = fit_visibility(ig);
  EXPECT_LE(fit.visibility, 3.0 * fit.visibility_std + 1e-12);
}

TEST(VisibilityFit, NoCoincidencesFails) {
  DetectorConfig det;
  det.dark_count_prob = 0.0;
  auto plan = short_plan(0.2);
  plan.mu_ref = plan.mu_test = 0.0;
  EXPECT_THROW(fit_visibility(simulate_acquisition(fig2_pair(), det, plan)), FitFailure);
}

TEST(Effectiveness, VisibilityDropsWithMeanPhotonNumber) {
  DetectorConfig det;
  det.rng_seed = 17;
  const std::vector<double> mus{0.2, 2.0, 10.0};
  const auto table = effectiveness_sweep(fig2_pair(), det, mus, AcquisitionPlan{});
  ASSERT_EQ(table.size(), 3u);
  for (std::size_t i = 0; i + 1 < table.size(); ++i) {
    const double gap = table[i].visibility - table[i + 1].visibility;
    const double sd = std::hypot(table[i].visibility_std, table[i + 1].visibility_std);
    EXPECT_GT(gap, 3.0 * sd) << table[i].mu << " vs " << table[i + 1].mu;
  }
}

TEST(Effectiveness, RejectsBadLadders) {
  DetectorConfig det;
  const std::vector<double> with_zero{0.0, 1.0};
  const std::vector<double> descending{1.0, 0.5};
  EXPECT_THROW(effectiveness_sweep(fig2_pair(), det, with_zero, short_plan(1.0)), InvalidParameter);
  EXPECT_THROW(effectiveness_sweep(fig2_pair(), det, descending, short_plan(1.0)), InvalidParameter);
  EXPECT_THROW(effectiveness_sweep(fig2_pair(), det, std::vector<double>{}, short_plan(1.0)), InvalidParameter);
}

TEST(Effectiveness, VisibilityFallsWithDarkCounts) {
  const auto pair = fig2_pair();
  const double ladder[] = {0.0, 1e-4, 1e-3, 3e-3, 1e-2};
  auto plan = short_plan(0.05, 2000, 1e-9);
  double previous_expected = 1.0;
  double previous_counted = 1.0;
  double previous_std = 0.0;
  for (double dark : ladder) {
    DetectorConfig det;
    det.dark_count_prob = dark;
    det.gates_per_point = 1000000;
    det.rng_seed = 41;
    const auto ig = simulate_acquisition(pair, det, plan);
    const double expected = fit_visibility(expected_only(ig)).visibility;
    EXPECT_LE(expected, previous_expected + 1e-9) << dark;
    const auto fit = fit_visibility(ig);
    EXPECT_LE(fit.visibility, previous_counted + 3.0 * std::hypot(fit.visibility_std, previous_std)) << dark;
    previous_expected = expected;
    previous_counted = fit.visibility;
    previous_std = fit.visibility_std;
  }
  EXPECT_LT(previous_expected, 0.1);
}
