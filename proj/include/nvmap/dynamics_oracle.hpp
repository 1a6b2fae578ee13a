#pragma once

// Brute-force reference for the closed-form survival probability: each
// nucleus is propagated through the CPMG toggling pattern with exact
// spin-1/2 propagators, conditioned on the NV sigma_z eigenvalue.
//
// Convention (matches the closed form): with s = f(t) * sigma_z = +1 the
// nuclear Hamiltonian is (omega_L + A_par) I_z + A_perp I_x, otherwise it
// is the bare Larmor term omega_L I_z. This is the toggled-frame
// Hamiltonian omega_L z + A/2 + (f sigma_z / 2) A, restricted to one NV
// branch. Pulses are instantaneous; the nuclear state is I/2.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "nvmap/signal_model.hpp"

namespace nvmap {

using Matrix2c = Eigen::Matrix2cd;

/// Largest node oracle_survival accepts.
inline constexpr std::size_t kOracleMaxNuclei = 6;

class OracleScaleError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Times at which the modulation function f(t) flips sign.
struct ToggleSchedule {
  std::vector<double> boundaries;
  double total_time = 0.0;
  int initial_sign = +1;

  /// CPMG pattern: first flip at tau, then every 2 tau; total 2 N tau.
  static ToggleSchedule cpmg(int n_pulses, double tau);

  /// Lengths of the constant-f segments, in order.
  std::vector<double> segments() const;

  /// Throws std::invalid_argument on zero-length or unordered segments.
  void validate() const;
};

struct ConditionalUnitaries {
  Matrix2c u0;  // NV sigma_z = +1 branch
  Matrix2c u1;  // NV sigma_z = -1 branch
};

/// exp(-i (h . sigma / 2) dt) for a field h in rad/s, via the axis-angle form
/// cos(theta/2) I - i sin(theta/2) n.sigma.
Matrix2c spin_half_propagator(double hx, double hy, double hz, double dt);

ConditionalUnitaries conditional_unitaries(const Nucleus& nuc, double omega_l,
                                           const ToggleSchedule& schedule);

/// Tr(rho U0^dagger U1) for rho = I/2. The real part is M_j.
std::complex<double> coherence(const ConditionalUnitaries& u);

/// P_x via explicit propagation. Rejects nodes above kOracleMaxNuclei.
SignalTrace oracle_survival(const QuantumNode& node, const PulseSequence& seq);

namespace serial {
SignalTrace oracle_survival(const QuantumNode& node, const PulseSequence& seq);
}

}  // namespace nvmap
