#include "nvmap/dynamics_oracle.hpp"

#include <cmath>
#include <complex>

namespace nvmap {

namespace {

using namespace std::complex_literals;

double oracle_point(const QuantumNode& node, const PulseSequence& seq, double tau) {
  const auto schedule = ToggleSchedule::cpmg(seq.n_pulses, tau);
  double product = 1.0;
  for (const auto& nuc : node.nuclei)
    product *= coherence(conditional_unitaries(nuc, node.larmor(), schedule)).real();
  return 0.5 * (1.0 + product);
}

SignalTrace run(const QuantumNode& node, const PulseSequence& seq, bool parallel) {
  node.validate();
  seq.validate();
  if (node.nuclei.size() > kOracleMaxNuclei)
    throw OracleScaleError("oracle scale: node has " + std::to_string(node.nuclei.size()) +
                           " nuclei, oracle accepts at most " +
                           std::to_string(kOracleMaxNuclei));
  SignalTrace trace{seq, std::vector<double>(static_cast<std::size_t>(seq.n_points))};
  const auto n = static_cast<std::int64_t>(seq.n_points);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    trace.values[idx] = oracle_point(node, seq, seq.tau(idx));
  }
  return trace;
}

}  // namespace

ToggleSchedule ToggleSchedule::cpmg(int n_pulses, double tau) {
  if (n_pulses <= 0) throw std::invalid_argument("toggle schedule: n_pulses must be positive");
  ToggleSchedule s;
  s.total_time = 2.0 * n_pulses * tau;
  s.boundaries.reserve(static_cast<std::size_t>(n_pulses));
  for (int k = 0; k < n_pulses; ++k) s.boundaries.push_back((2.0 * k + 1.0) * tau);
  s.validate();
  return s;
}

std::vector<double> ToggleSchedule::segments() const {
  std::vector<double> lengths;
  lengths.reserve(boundaries.size() + 1);
  double start = 0.0;
  for (double b : boundaries) {
    lengths.push_back(b - start);
    start = b;
  }
  lengths.push_back(total_time - start);
  return lengths;
}

void ToggleSchedule::validate() const {
  if (initial_sign != 1 && initial_sign != -1)
    throw std::invalid_argument("toggle schedule: initial sign must be +-1");
  for (double len : segments()) {
    if (!(len > 0.0))
      throw std::invalid_argument("toggle schedule: degenerate (zero-length) segment");
  }
}

Matrix2c spin_half_propagator(double hx, double hy, double hz, double dt) {
  const double norm = std::sqrt(hx * hx + hy * hy + hz * hz);
  if (norm == 0.0) return Matrix2c::Identity();
  const double half = 0.5 * norm * dt;
  const double c = std::cos(half);
  const double s = std::sin(half);
  const double nx = hx / norm, ny = hy / norm, nz = hz / norm;
  Matrix2c u;
  u << std::complex<double>(c, -s * nz), std::complex<double>(-s * ny, -s * nx),
      std::complex<double>(s * ny, -s * nx), std::complex<double>(c, s * nz);
  return u;
}

ConditionalUnitaries conditional_unitaries(const Nucleus& nuc, double omega_l,
                                           const ToggleSchedule& schedule) {
  schedule.validate();
  const double a_par = kTwoPi * nuc.a_par;
  const double a_perp = kTwoPi * nuc.a_perp;

  ConditionalUnitaries u{Matrix2c::Identity(), Matrix2c::Identity()};
  int f = schedule.initial_sign;
  double cached_dt = -1.0;
  Matrix2c coupled, bare;
  for (double dt : schedule.segments()) {
    if (dt != cached_dt) {
      coupled = spin_half_propagator(a_perp, 0.0, omega_l + a_par, dt);
      bare = spin_half_propagator(0.0, 0.0, omega_l, dt);
      cached_dt = dt;
    }
    // sigma_z = +1 sees the coupling while f = +1; sigma_z = -1 while f = -1.
    if (f > 0) {
      u.u0 = coupled * u.u0;
      u.u1 = bare * u.u1;
    } else {
      u.u0 = bare * u.u0;
      u.u1 = coupled * u.u1;
    }
    f = -f;
  }
  return u;
}

std::complex<double> coherence(const ConditionalUnitaries& u) {
  return 0.5 * (u.u0.adjoint() * u.u1).trace();
}

SignalTrace oracle_survival(const QuantumNode& node, const PulseSequence& seq) {
  return run(node, seq, true);
}

namespace serial {
SignalTrace oracle_survival(const QuantumNode& node, const PulseSequence& seq) {
  return run(node, seq, false);
}
}  // namespace serial

}  // namespace nvmap
