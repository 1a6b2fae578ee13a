#include "nvmap/signal_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "nvmap/rng.hpp"

namespace nvmap {

namespace {

// Denominator magnitude below which M_j takes its removable limit.
constexpr double kDenominatorFloor = 1e-12;

// Per-nucleus quantities that do not depend on tau.
struct CouplingGeometry {
  double omega_tilde;
  double m_z;
  double m_x;
};

CouplingGeometry geometry(const Nucleus& nuc, double omega_l) {
  const double a_par = kTwoPi * nuc.a_par;
  const double a_perp = kTwoPi * nuc.a_perp;
  const double parallel = a_par + omega_l;
  const double omega_tilde = std::hypot(parallel, a_perp);
  return {omega_tilde, parallel / omega_tilde, a_perp / omega_tilde};
}

// sin(n phi / 2) from cos(phi), phi in [0, pi], as Im (cos(phi/2) + i sin(phi/2))^n.
double sin_half_multiple(double cos_phi, int n) {
  double re = std::sqrt(std::max(0.0, 0.5 * (1.0 + cos_phi)));
  double im = std::sqrt(std::max(0.0, 0.5 * (1.0 - cos_phi)));
  double acc_re = 1.0, acc_im = 0.0;
  for (unsigned k = static_cast<unsigned>(n); k; k >>= 1) {
    if (k & 1u) {
      const double t = acc_re * re - acc_im * im;
      acc_im = acc_re * im + acc_im * re;
      acc_re = t;
    }
    const double t = re * re - im * im;
    im = 2.0 * re * im;
    re = t;
  }
  return acc_im;
}

// M_j from the trigonometric terms; shared by spin_response and the grid
// kernels so both paths agree bitwise.
double m_factor(const CouplingGeometry& g, double cos_a, double sin_a, double cos_b,
                double sin_b, int n_pulses) {
  const double cos_phi_raw = cos_a * cos_b - g.m_z * sin_a * sin_b;
  const double denominator = 1.0 + cos_phi_raw;
  // phi = pi: the numerator (1 - cos a)(1 - cos b) m_x^2 vanishes with it.
  if (std::abs(denominator) <= kDenominatorFloor) return 1.0;
  const double s = sin_half_multiple(std::clamp(cos_phi_raw, -1.0, 1.0), n_pulses);
  const double ratio = g.m_x * g.m_x * (1.0 - cos_a) * (1.0 - cos_b) / denominator;
  return std::clamp(1.0 - ratio * s * s, -1.0, 1.0);
}

// Points per block; sin/cos of alpha are exact at block starts and advanced
// by rotation inside a block. Blocks are fixed, so results do not depend on
// how the grid is split between threads.
constexpr std::int64_t kBlock = 64;

void fill_grid(const QuantumNode& node, const PulseSequence& seq, std::span<double> out,
               bool parallel) {
  const double omega_l = node.larmor();
  std::vector<CouplingGeometry> geo;
  geo.reserve(node.nuclei.size());
  for (const auto& nuc : node.nuclei) geo.push_back(geometry(nuc, omega_l));

  const double step = seq.step();
  const auto n = static_cast<std::int64_t>(seq.n_points);
  const std::int64_t blocks = (n + kBlock - 1) / kBlock;
#pragma omp parallel if (parallel)
  {
    std::array<double, kBlock> cos_b, sin_b, product;
#pragma omp for schedule(static)
    for (std::int64_t b = 0; b < blocks; ++b) {
      const std::int64_t first = b * kBlock;
      const std::int64_t len = std::min(kBlock, n - first);
      for (std::int64_t k = 0; k < len; ++k) {
        const double beta = omega_l * seq.tau(static_cast<std::size_t>(first + k));
        cos_b[k] = std::cos(beta);
        sin_b[k] = std::sin(beta);
        product[k] = 1.0;
      }
      for (const auto& g : geo) {
        const double alpha0 = g.omega_tilde * seq.tau(static_cast<std::size_t>(first));
        double ca = std::cos(alpha0), sa = std::sin(alpha0);
        const double cd = std::cos(g.omega_tilde * step), sd = std::sin(g.omega_tilde * step);
        for (std::int64_t k = 0; k < len; ++k) {
          product[k] *= m_factor(g, ca, sa, cos_b[k], sin_b[k], seq.n_pulses);
          const double t = ca * cd - sa * sd;
          sa = sa * cd + ca * sd;
          ca = t;
        }
      }
      for (std::int64_t k = 0; k < len; ++k)
        out[static_cast<std::size_t>(first + k)] = 0.5 * (1.0 + product[k]);
    }
  }
}

}  // namespace

void QuantumNode::validate() const {
  if (!(b_z > 0.0) || !std::isfinite(b_z))
    throw std::invalid_argument("quantum node: b_z must be positive and finite");
  for (const auto& nuc : nuclei) {
    if (!std::isfinite(nuc.a_par) || !std::isfinite(nuc.a_perp))
      throw std::invalid_argument("quantum node: non-finite hyperfine coupling");
  }
}

std::vector<double> PulseSequence::taus() const {
  std::vector<double> t(static_cast<std::size_t>(n_points));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau(i);
  return t;
}

void PulseSequence::validate() const {
  if (n_pulses <= 0) throw std::invalid_argument("pulse sequence: n_pulses must be positive");
  if (n_points < 2) throw std::invalid_argument("pulse sequence: n_points must be >= 2");
  if (!(tau_min > 0.0) || !(tau_min < tau_max) || !std::isfinite(tau_max))
    throw std::invalid_argument("pulse sequence: need 0 < tau_min < tau_max");
}

void AcquisitionNoise::validate() const {
  if (!(t2 > 0.0)) throw std::invalid_argument("acquisition noise: t2 must be positive");
  if (n_measurements < 1)
    throw std::invalid_argument("acquisition noise: n_measurements must be >= 1");
}

SpinResponseTerms spin_response(const Nucleus& nuc, double omega_l, double tau,
                                int n_pulses) {
  if (!(tau > 0.0)) throw std::invalid_argument("spin_response: tau must be positive");
  const CouplingGeometry g = geometry(nuc, omega_l);
  SpinResponseTerms t;
  t.omega_tilde = g.omega_tilde;
  t.m_z = g.m_z;
  t.m_x = g.m_x;
  t.alpha = g.omega_tilde * tau;
  t.beta = omega_l * tau;
  const double cos_a = std::cos(t.alpha), sin_a = std::sin(t.alpha);
  const double cos_b = std::cos(t.beta), sin_b = std::sin(t.beta);
  t.phi = std::acos(std::clamp(cos_a * cos_b - g.m_z * sin_a * sin_b, -1.0, 1.0));
  t.m_j = m_factor(g, cos_a, sin_a, cos_b, sin_b, n_pulses);
  return t;
}

SignalTrace survival_probability(const QuantumNode& node, const PulseSequence& seq) {
  node.validate();
  seq.validate();
  SignalTrace trace{seq, std::vector<double>(static_cast<std::size_t>(seq.n_points))};
  fill_grid(node, seq, trace.values, /*parallel=*/true);
  return trace;
}

void survival_probability_into(const QuantumNode& node, const PulseSequence& seq,
                               std::span<double> out) {
  if (out.size() != static_cast<std::size_t>(seq.n_points))
    throw std::invalid_argument("survival_probability_into: output size mismatch");
  fill_grid(node, seq, out, /*parallel=*/false);
}

namespace serial {

SignalTrace survival_probability(const QuantumNode& node, const PulseSequence& seq) {
  node.validate();
  seq.validate();
  SignalTrace trace{seq, std::vector<double>(static_cast<std::size_t>(seq.n_points))};
  fill_grid(node, seq, trace.values, /*parallel=*/false);
  return trace;
}

}  // namespace serial

SignalTrace apply_decoherence(SignalTrace trace, double t2) {
  if (!(t2 > 0.0)) throw std::invalid_argument("apply_decoherence: t2 must be positive");
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    const double damping = std::exp(-trace.sequence.tau(i) / t2);
    trace.values[i] = std::clamp(0.5 + (trace.values[i] - 0.5) * damping, 0.0, 1.0);
  }
  return trace;
}

SignalTrace apply_shot_noise(SignalTrace trace, const AcquisitionNoise& noise,
                             std::uint64_t sample_id, std::uint64_t stream) {
  noise.validate();
  const int n_m = noise.n_measurements;
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    const double p = trace.values[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("apply_shot_noise: value outside [0, 1]");
    if (p == 0.0 || p == 1.0) continue;  // Binomial(N, 0) = 0, Binomial(N, 1) = N
    CounterRng rng(noise.seed ^ mix64(stream), sample_id, streams::kShotNoise | i);
    std::binomial_distribution<int> binomial(n_m, p);
    trace.values[i] = static_cast<double>(binomial(rng)) / n_m;
  }
  return trace;
}

double resonance_frequency(const Nucleus& nuc, double omega_l) {
  return 0.5 * (omega_l + geometry(nuc, omega_l).omega_tilde);
}

std::vector<double> resonance_taus(const Nucleus& nuc, double omega_l, double tau_max) {
  if (!(tau_max > 0.0)) throw std::invalid_argument("resonance_taus: tau_max must be positive");
  const double quarter_period = std::numbers::pi / (2.0 * resonance_frequency(nuc, omega_l));
  std::vector<double> taus;
  for (std::int64_t k = 1;; k += 2) {
    const double tau = static_cast<double>(k) * quarter_period;
    if (tau > tau_max) break;
    taus.push_back(tau);
  }
  return taus;
}

std::vector<Dip> find_dips(const SignalTrace& trace, double depth_fraction) {
  if (!(depth_fraction > 0.0 && depth_fraction <= 1.0))
    throw std::invalid_argument("find_dips: depth fraction must lie in (0, 1]");
  const auto& v = trace.values;
  std::vector<Dip> dips;
  if (v.size() < 3) return dips;
  const double p_min = *std::min_element(v.begin(), v.end());
  if (p_min >= 1.0) return dips;
  const double level = 1.0 - depth_fraction * (1.0 - p_min);
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] < level && v[i] < v[i - 1] && v[i] <= v[i + 1])
      dips.push_back({i, trace.sequence.tau(i), v[i]});
  }
  return dips;
}

std::vector<double> omega_tilde_candidates(double tau, double omega_l, double window) {
  if (!(tau > 0.0)) throw std::invalid_argument("omega_tilde_candidates: tau must be positive");
  std::vector<double> out;
  // omega_res = k pi / (2 tau) and omega_tilde = 2 omega_res - omega_l.
  const double step = std::numbers::pi / tau;
  auto k = static_cast<std::int64_t>(std::floor((omega_l - window) / step));
  if (k < 1) k = 1;
  if (k % 2 == 0) ++k;
  for (;; k += 2) {
    const double w = static_cast<double>(k) * step - omega_l;
    if (w > omega_l + window) break;
    if (w > 0.0 && std::abs(w - omega_l) <= window) out.push_back(w);
  }
  return out;
}

}  // namespace nvmap
