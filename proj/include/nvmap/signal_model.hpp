#pragma once

// Closed-form CPMG survival probability of an NV centre coupled to a bath
// of independent spin-1/2 nuclei, plus decoherence and shot-noise
// corruption of the resulting traces.
//
// Couplings and fields are stored as ordinary frequencies (Hz) and tesla;
// conversion to angular frequency happens only where phases are formed.

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace nvmap {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// 13C gyromagnetic ratio, rad s^-1 T^-1.
inline constexpr double kGamma13C = kTwoPi * 10.705e6;

/// Largest node the dataset generator produces.
inline constexpr std::size_t kMaxNuclei = 20;

/// Hyperfine pair of one nucleus, in Hz.
struct Nucleus {
  double a_par = 0.0;
  double a_perp = 0.0;

  friend bool operator==(const Nucleus&, const Nucleus&) = default;
};

struct QuantumNode {
  std::vector<Nucleus> nuclei;
  double b_z = 0.0;  // tesla

  /// Nuclear Larmor frequency gamma_n * B_z in rad/s.
  double larmor() const noexcept { return kGamma13C * b_z; }

  /// Throws std::invalid_argument on non-finite couplings or b_z <= 0.
  void validate() const;
};

/// CPMG acquisition grid. tau is half the interpulse spacing.
struct PulseSequence {
  int n_pulses = 32;
  double tau_min = 6e-6;
  double tau_max = 50e-6;
  int n_points = 1000;

  double step() const noexcept { return (tau_max - tau_min) / (n_points - 1); }
  double tau(std::size_t i) const noexcept {
    return tau_min + static_cast<double>(i) * step();
  }
  std::vector<double> taus() const;

  void validate() const;

  friend bool operator==(const PulseSequence&, const PulseSequence&) = default;
};

/// Intermediate terms of the single-nucleus factor M_j at one tau.
struct SpinResponseTerms {
  double omega_tilde = 0.0;  // rad/s
  double m_z = 1.0;
  double m_x = 0.0;
  double alpha = 0.0;  // omega_tilde * tau
  double beta = 0.0;   // omega_L * tau
  double phi = 0.0;    // rotation angle per CPMG half-unit, in [0, pi]
  double m_j = 1.0;
};

struct AcquisitionNoise {
  double t2 = 200e-6;  // seconds
  int n_measurements = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SignalTrace {
  PulseSequence sequence;
  std::vector<double> values;

  friend bool operator==(const SignalTrace&, const SignalTrace&) = default;
};

SpinResponseTerms spin_response(const Nucleus& nuc, double omega_l, double tau,
                                int n_pulses);

/// P_x = (1 + prod_j M_j) / 2 over the tau grid. Parallel over tau points;
/// results are bitwise identical to serial::survival_probability.
SignalTrace survival_probability(const QuantumNode& node, const PulseSequence& seq);

/// Writes P_x for every grid point into `out` (size seq.n_points) without
/// spawning threads. Used inside per-sample parallel loops.
void survival_probability_into(const QuantumNode& node, const PulseSequence& seq,
                               std::span<double> out);

/// Damps the contrast towards 1/2: P -> 1/2 + (P - 1/2) exp(-tau / t2).
SignalTrace apply_decoherence(SignalTrace trace, double t2);

/// Replaces each value p by k / N_m with k ~ Binomial(N_m, p). The draw for
/// point i is keyed by (noise.seed, stream, sample_id, i), so it does not
/// depend on evaluation order. `stream` separates independent noise
/// realisations of the same sample (e.g. the two pulse sequences).
SignalTrace apply_shot_noise(SignalTrace trace, const AcquisitionNoise& noise,
                             std::uint64_t sample_id, std::uint64_t stream = 0);

/// Angular frequency at which a nucleus produces CPMG dips: the mean of the
/// two conditional precession frequencies, (omega_L + omega_tilde) / 2.
double resonance_frequency(const Nucleus& nuc, double omega_l);

/// All dip positions tau = k pi / (2 omega_res) <= tau_max for odd k.
std::vector<double> resonance_taus(const Nucleus& nuc, double omega_l, double tau_max);

struct Dip {
  std::size_t index = 0;
  double tau = 0.0;
  double value = 0.0;
};

/// Local minima deeper than `depth_fraction` of the deepest point of the
/// trace, i.e. P < 1 - depth_fraction * (1 - P_min).
std::vector<Dip> find_dips(const SignalTrace& trace, double depth_fraction = 0.5);

/// omega_tilde values (rad/s) consistent with a dip at tau for some odd k,
/// restricted to |omega_tilde - omega_l| <= window.
std::vector<double> omega_tilde_candidates(double tau, double omega_l, double window);

namespace serial {

/// Single-threaded reference for survival_probability.
SignalTrace survival_probability(const QuantumNode& node, const PulseSequence& seq);

}  // namespace serial

}  // namespace nvmap
