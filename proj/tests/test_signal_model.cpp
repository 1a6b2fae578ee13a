#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "nvmap/dataset.hpp"
#include "nvmap/signal_model.hpp"
#include "support.hpp"

using namespace nvmap;

namespace {

const PulseSequence kSeq32{32, 6e-6, 50e-6, 1000};
const PulseSequence kSeq256{256, 10e-6, 40e-6, 1000};

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(PulseSequence, UniformGrid) {
  EXPECT_DOUBLE_EQ(kSeq32.tau(0), 6e-6);
  EXPECT_DOUBLE_EQ(kSeq32.tau(999), 50e-6);
  EXPECT_NEAR(kSeq32.step(), 44e-6 / 999, 1e-18);
  EXPECT_THROW((PulseSequence{32, 5e-6, 5e-6, 10}.validate()), std::invalid_argument);
  EXPECT_THROW((PulseSequence{0, 5e-6, 6e-6, 10}.validate()), std::invalid_argument);
  EXPECT_THROW((PulseSequence{4, 5e-6, 6e-6, 1}.validate()), std::invalid_argument);
}

TEST(SpinResponse, NoPerpendicularCouplingGivesUnity) {
  const double wl = kGamma13C * 0.056;
  for (double tau : {6e-6, 13.3e-6, 47e-6}) {
    const auto t = spin_response({25e3, 0.0}, wl, tau, 32);
    EXPECT_EQ(t.m_x, 0.0);
    EXPECT_DOUBLE_EQ(t.m_j, 1.0);
  }
}

TEST(SpinResponse, FullLarmorTurnGivesUnity) {
  const double wl = kGamma13C * 0.056;
  const double tau = kTwoPi / wl;  // beta = 2 pi
  const auto t = spin_response({1e-3, 1e-3}, wl, tau, 32);
  EXPECT_NEAR(t.beta, kTwoPi, 1e-12);
  EXPECT_NEAR(t.m_j, 1.0, 1e-12);
}

TEST(SpinResponse, UnitAxisAndRange) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> tau(1e-6, 60e-6);
  for (int i = 0; i < 2000; ++i) {
    const auto nuc = test::random_nuclei(gen, 1).front();
    const double wl = kGamma13C * (i % 2 ? 0.056 : 0.0056);
    const auto t = spin_response(nuc, wl, tau(gen), i % 3 ? 32 : 256);
    EXPECT_NEAR(t.m_z * t.m_z + t.m_x * t.m_x, 1.0, 1e-12);
    EXPECT_GT(t.omega_tilde, 0.0);
    EXPECT_GE(t.m_j, -1.0);
    EXPECT_LE(t.m_j, 1.0);
    EXPECT_GE(t.phi, 0.0);
    EXPECT_LE(t.phi, std::numbers::pi);
  }
  EXPECT_THROW(spin_response({1e3, 1e3}, 1.0, 0.0, 32), std::invalid_argument);
}

TEST(SpinResponse, MatchesFullSpaceSimulation) {
  // Nucleus (3, 75) kHz at 0.056 T, tau = 10 us, N = 32.
  const Nucleus nuc{3e3, 75e3};
  const auto t = spin_response(nuc, kGamma13C * 0.056, 10e-6, 32);
  const double px = test::full_space_px({nuc}, 0.056, 10e-6, 32);
  EXPECT_NEAR(0.5 * (1.0 + t.m_j), px, 1e-9);
}

TEST(SurvivalProbability, EmptyNodeIsOne) {
  const auto tr = survival_probability(QuantumNode{{}, 0.056}, kSeq32);
  ASSERT_EQ(tr.values.size(), 1000u);
  for (double v : tr.values) EXPECT_EQ(v, 1.0);
}

TEST(SurvivalProbability, ThreeNucleusNodeAgainstFullSpace) {
  const std::vector<Nucleus> nuclei{{3e3, 75e3}, {-45e3, 42e3}, {23e3, 4e3}};
  for (double b_z : {0.056, 0.0056}) {
    const auto tr = survival_probability(QuantumNode{nuclei, b_z}, kSeq32);
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = static_cast<std::size_t>(k) * 50 + 7;
      EXPECT_NEAR(tr.values[i], test::full_space_px(nuclei, b_z, kSeq32.tau(i), 32), 1e-9)
          << "b_z " << b_z << " point " << i;
    }
  }
}

TEST(SurvivalProbability, LongSequenceAgainstFullSpace) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto nuclei = test::random_nuclei(gen, 2);
    const auto tr = survival_probability(QuantumNode{nuclei, 0.056}, kSeq256);
    for (std::size_t i = 3; i < 1000; i += 111)
      EXPECT_NEAR(tr.values[i], test::full_space_px(nuclei, 0.056, kSeq256.tau(i), 256), 1e-9);
  }
}

TEST(SurvivalProbability, RangeProperty) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const QuantumNode node{test::random_nuclei(gen, 1 + trial % 20), trial % 2 ? 0.056 : 0.0056};
    for (const auto& seq : {kSeq32, kSeq256})
      for (double v : survival_probability(node, seq).values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
  }
}

TEST(SurvivalProbability, ProductFactorisation) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto nuclei = test::random_nuclei(gen, 2);
    const double b_z = trial % 2 ? 0.056 : 0.0056;
    const auto both = survival_probability(QuantumNode{nuclei, b_z}, kSeq32);
    const auto p1 = survival_probability(QuantumNode{{nuclei[0]}, b_z}, kSeq32);
    const auto p2 = survival_probability(QuantumNode{{nuclei[1]}, b_z}, kSeq32);
    for (std::size_t i = 0; i < 1000; ++i)
      EXPECT_NEAR(2 * both.values[i] - 1, (2 * p1.values[i] - 1) * (2 * p2.values[i] - 1),
                  1e-12);
  }
}

TEST(SurvivalProbability, SignOfPerpendicularCouplingIsIrrelevant) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto nuclei = test::random_nuclei(gen, 1 + trial % 20);
    const QuantumNode node{nuclei, trial % 2 ? 0.056 : 0.0056};
    for (auto& n : nuclei) n.a_perp = -n.a_perp;
    const QuantumNode flipped{nuclei, node.b_z};
    EXPECT_TRUE(bitwise_equal(survival_probability(node, kSeq32).values,
                              survival_probability(flipped, kSeq32).values));
  }
}

TEST(SurvivalProbability, ParallelMatchesSerialBitwise) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 10; ++trial) {
    const QuantumNode node{test::random_nuclei(gen, 1 + trial), 0.0056};
    for (const auto& seq : {kSeq32, kSeq256}) {
      EXPECT_TRUE(bitwise_equal(survival_probability(node, seq).values,
                                serial::survival_probability(node, seq).values));
      std::vector<double> into(1000);
      survival_probability_into(node, seq, into);
      EXPECT_TRUE(bitwise_equal(into, serial::survival_probability(node, seq).values));
    }
  }
}

TEST(Decoherence, ContrastDamping) {
  SignalTrace ones{PulseSequence{32, 100e-6, 200e-6, 2}, {1.0, 1.0}};
  const auto damped = apply_decoherence(ones, 200e-6);
  EXPECT_NEAR(damped.values[1], 0.5 + 0.5 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(damped.values[1], 0.6839, 1e-4);

  SignalTrace half{kSeq32, std::vector<double>(1000, 0.5)};
  EXPECT_EQ(apply_decoherence(half, 1e-6).values, half.values);

  const auto tr = survival_probability(QuantumNode{{{10e3, 30e3}}, 0.056}, kSeq32);
  const auto same = apply_decoherence(tr, std::numeric_limits<double>::infinity());
  EXPECT_EQ(same.values, tr.values);
  EXPECT_THROW(apply_decoherence(tr, 0.0), std::invalid_argument);
}

TEST(ShotNoise, ExtremesAreExact) {
  SignalTrace tr{kSeq32, std::vector<double>(1000)};
  for (std::size_t i = 0; i < 1000; ++i) tr.values[i] = i % 2 ? 1.0 : 0.0;
  for (int nm : {1, 10, 1000}) {
    const auto noisy = apply_shot_noise(tr, {200e-6, nm, 42}, 7);
    EXPECT_EQ(noisy.values, tr.values);
  }
}

TEST(ShotNoise, BinomialStatistics) {
  SignalTrace tr{PulseSequence{32, 1e-6, 2e-6, 10000}, std::vector<double>(10000, 0.5)};
  for (int nm : {1000, 500, 100, 10}) {
    const auto noisy = apply_shot_noise(tr, {200e-6, nm, 99}, 0);
    double mean = 0.0, var = 0.0;
    for (double v : noisy.values) mean += v;
    mean /= 10000;
    for (double v : noisy.values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / 9999);
    const double expected = std::sqrt(0.25 / nm);
    EXPECT_NEAR(sd / expected, 1.0, 0.1) << "N_m " << nm;
    for (double v : noisy.values) {
      const double k = v * nm;
      EXPECT_NEAR(k, std::round(k), 1e-9);
    }
  }
}

TEST(ShotNoise, KeyedByIdentityNotOrder) {
  SignalTrace tr{kSeq32, std::vector<double>(1000, 0.3)};
  const AcquisitionNoise noise{200e-6, 1000, 5};
  EXPECT_EQ(apply_shot_noise(tr, noise, 3).values, apply_shot_noise(tr, noise, 3).values);
  EXPECT_NE(apply_shot_noise(tr, noise, 3).values, apply_shot_noise(tr, noise, 4).values);
  EXPECT_NE(apply_shot_noise(tr, noise, 3, 0).values, apply_shot_noise(tr, noise, 3, 1).values);
  EXPECT_NE(apply_shot_noise(tr, noise, 3).values,
            apply_shot_noise(tr, {200e-6, 1000, 6}, 3).values);
  tr.values[0] = 1.5;
  EXPECT_THROW(apply_shot_noise(tr, noise, 0), std::invalid_argument);
}

TEST(Resonance, BareLarmorWithoutCoupling) {
  const double wl = kGamma13C * 0.056;
  const auto taus = resonance_taus({0.0, 1e-9}, wl, 50e-6);
  ASSERT_FALSE(taus.empty());
  EXPECT_NEAR(taus.front(), std::numbers::pi / (2.0 * wl), 1e-15);
  for (std::size_t k = 0; k < taus.size(); ++k)
    EXPECT_NEAR(taus[k], (2.0 * k + 1.0) * std::numbers::pi / (2.0 * wl), 1e-15);
  EXPECT_LE(taus.back(), 50e-6);
  EXPECT_THROW(resonance_taus({0.0, 1.0}, wl, 0.0), std::invalid_argument);
}

TEST(Resonance, DipsSitOnPredictedTaus) {
  const double wl = kGamma13C * 0.056;
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto nuc = test::random_nuclei(gen, 1).front();
    const auto tr = survival_probability(QuantumNode{{nuc}, 0.056}, kSeq32);
    const auto taus = resonance_taus(nuc, wl, 60e-6);
    for (const auto& dip : find_dips(tr)) {
      double best = 1.0;
      for (double t : taus) best = std::min(best, std::abs(t - dip.tau));
      EXPECT_LE(best, kSeq32.step()) << "nucleus " << nuc.a_par << ", " << nuc.a_perp;
    }
  }
}

TEST(Resonance, CandidatesContainTrueFrequency) {
  const double wl = kGamma13C * 0.056;
  const Nucleus nuc{3e3, 75e3};
  const auto tr = survival_probability(QuantumNode{{nuc}, 0.056}, kSeq32);
  const double w = spin_response(nuc, wl, 1e-6, 1).omega_tilde;
  const auto dips = find_dips(tr);
  ASSERT_FALSE(dips.empty());
  for (const auto& dip : dips) {
    const auto cands = omega_tilde_candidates(dip.tau, wl, kTwoPi * 150e3);
    double best = 1e300;
    for (double c : cands) best = std::min(best, std::abs(c - w));
    // One grid step in tau moves the candidate by about 2 omega_res step / tau.
    EXPECT_LE(best, 2.0 * w * kSeq32.step() / dip.tau + 1.0);
  }
}
