#pragma once

// Shared test helpers: an independent full Hilbert-space simulation of the
// NV plus nuclei under an explicit pi-pulse train, temporary directories
// and the published per-nucleus coupling tables.

#include <Eigen/Dense>
#include <complex>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nvmap/signal_model.hpp"

namespace nvmap::test {

using MatrixXc = Eigen::MatrixXcd;

// NV qubit (|0> couples, |1> does not) tensor n spin-1/2 nuclei. The NV
// starts in |+>, nuclei fully mixed; instantaneous X pulses at tau, 3 tau,
// ..., total time 2 N tau. Returns the probability of finding |+>.
inline double full_space_px(const std::vector<Nucleus>& nuclei, double b_z, double tau,
                            int n_pulses) {
  const int n = static_cast<int>(nuclei.size());
  const int dim = 2 << n;
  const double omega_l = kGamma13C * b_z;
  using C = std::complex<double>;

  MatrixXc sz(2, 2), sx(2, 2), id2 = MatrixXc::Identity(2, 2);
  sz << 0.5, 0.0, 0.0, -0.5;
  sx << 0.0, 0.5, 0.5, 0.0;
  MatrixXc p0(2, 2), xnv(2, 2);
  p0 << 1.0, 0.0, 0.0, 0.0;
  xnv << 0.0, 1.0, 1.0, 0.0;

  auto embed = [&](const MatrixXc& nv, int which, const MatrixXc& op) {
    MatrixXc out = nv;
    for (int j = 0; j < n; ++j) {
      const MatrixXc& f = (j == which) ? op : id2;
      MatrixXc next(out.rows() * 2, out.cols() * 2);
      for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c) next.block(2 * r, 2 * c, 2, 2) = out(r, c) * f;
      out = next;
    }
    return out;
  };

  MatrixXc h = MatrixXc::Zero(dim, dim);
  for (int j = 0; j < n; ++j) {
    const double a_par = kTwoPi * nuclei[j].a_par;
    const double a_perp = kTwoPi * nuclei[j].a_perp;
    h += omega_l * embed(id2, j, sz);
    h += embed(p0, j, a_par * sz + a_perp * sx);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXc> eig(h);
  auto evolve = [&](double t) {
    Eigen::VectorXcd phase(dim);
    for (int k = 0; k < dim; ++k) phase(k) = std::exp(C(0.0, -eig.eigenvalues()(k) * t));
    return MatrixXc(eig.eigenvectors() * phase.asDiagonal() * eig.eigenvectors().adjoint());
  };
  const MatrixXc u_tau = evolve(tau);
  const MatrixXc u_2tau = evolve(2.0 * tau);
  const MatrixXc pulse = embed(xnv, -1, id2);

  MatrixXc u = u_tau;
  for (int k = 1; k < n_pulses; ++k) u = u_2tau * pulse * u;
  u = u_tau * pulse * u;

  MatrixXc plus(2, 2);
  plus << 0.5, 0.5, 0.5, 0.5;
  const MatrixXc rho0 = embed(plus, -1, id2) / static_cast<double>(1 << n);
  const MatrixXc rho = u * rho0 * u.adjoint();
  const MatrixXc proj = embed(plus, -1, id2);
  return (proj * rho).trace().real();
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nvmap_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<Nucleus> random_nuclei(std::mt19937_64& gen, int n) {
  std::uniform_real_distribution<double> par(-100e3, 100e3), perp(2e3, 102e3);
  std::vector<Nucleus> out;
  for (int j = 0; j < n; ++j) {
    const double a = par(gen);
    out.push_back({a, perp(gen)});
  }
  return out;
}

// One row of a published example: a TP row has both sides, an FP row only
// the prediction, an FN row only the truth. MAE columns are per-pair errors.
struct TableRow {
  bool has_true;
  bool has_pred;
  double true_par, pred_par, true_perp, pred_perp, mae_par, mae_perp;
};

// Low-field example (16 true nuclei, 14 TP, 4 FP).
inline const std::vector<TableRow>& low_field_table() {
  static const std::vector<TableRow> rows{
      {true, true, -98875.9444, -98977.6469, 22447.4441, 22149.7736, 101.7025, 297.6705},
      {false, true, 0, -91381.1482, 0, 77329.0481, 0, 0},
      {true, true, -82236.4611, -81407.0352, 77605.0795, 79489.1775, 829.4259, 1884.0980},
      {true, true, -62594.5591, -62383.3453, 52589.1205, 52937.9509, 211.2138, 348.8304},
      {true, true, -40809.0586, -40134.6354, 79724.3165, 78805.7938, 674.4232, 918.5228},
      {false, true, 0, -31221.3240, 0, 75342.1168, 0, 0},
      {true, false, -6661.2290, 0, 6511.8053, 0, 0, 0},
      {true, true, 618.3637, 215.3625, 71233.4150, 71235.2092, 403.0012, 1.7942},
      {true, true, 22835.2283, 18848.5981, 35535.9281, 37496.4055, 3986.6302, 1960.4774},
      {true, true, 16596.4429, 16086.5253, 41711.0597, 45149.3541, 509.9176, 3438.2945},
      {true, true, 15900.9482, 15723.3536, 83833.8436, 81957.4694, 177.5945, 1876.3741},
      {true, true, 29856.8923, 31612.6085, 64685.9245, 62537.1901, 1755.7162, 2148.7344},
      {true, true, 34015.0876, 35494.7985, 51611.0833, 47527.5732, 1479.7109, 4083.5101},
      {true, true, 41004.5308, 41864.7914, 35584.3040, 36961.9774, 860.2606, 1377.6733},
      {true, false, 77065.1584, 0, 29807.1735, 0, 0, 0},
      {false, true, 0, 79676.1586, 0, 19732.8844, 0, 0},
      {true, true, 89884.9243, 92841.0141, 97399.2709, 96192.1903, 2956.0898, 1207.0806},
      {false, true, 0, 94358.1544, 0, 49727.2727, 0, 0},
      {true, true, 97146.7497, 99163.0711, 89029.5304, 86725.7760, 2016.3214, 2303.7544},
      {true, true, 97293.2625, 97487.4372, 37515.6950, 36848.4848, 194.1747, 667.2102},
  };
  return rows;
}

// High-field example (16 true nuclei, all TP, 1 FP).
inline const std::vector<TableRow>& high_field_table() {
  static const std::vector<TableRow> rows{
      {true, true, -89149.1218, -89391.4015, 58528.9955, 59126.8238, 242.2796, 597.8283},
      {true, true, -89250.2135, -88996.2634, 17861.7656, 17565.9156, 253.9501, 295.8500},
      {true, true, -72472.3346, -72437.9473, 76943.9533, 76196.5106, 34.3873, 747.4427},
      {true, true, -71864.3395, -71922.1106, 43449.0304, 45797.3485, 57.7711, 2348.3181},
      {true, true, -67856.0332, -67967.1083, 62388.9558, 63707.9890, 111.0751, 1319.0332},
      {true, true, -43283.2279, -43177.4256, 36742.4227, 37291.3753, 105.8023, 548.9526},
      {true, true, -34559.2966, -34673.3668, 72799.0305, 72707.0707, 114.0702, 91.9598},
      {true, true, -25741.1784, -25642.2826, 41337.3828, 41100.0937, 98.8958, 237.2891},
      {true, true, -21229.8613, -20136.9824, 31394.1066, 32611.2804, 1092.8789, 1217.1738},
      {true, true, -5100.0355, -4781.0481, 63366.8872, 65145.7431, 318.9874, 1778.8560},
      {false, true, 0, -3661.1630, 0, 49835.4978, 0, 0},
      {true, true, 38751.9170, 38627.5640, 30000.2914, 28444.7756, 124.3530, 1555.5158},
      {true, true, 41270.5583, 41909.5477, 70786.8143, 68707.0707, 638.9895, 2079.7436},
      {true, true, 46661.3024, 47180.3462, 47310.4908, 46332.2110, 519.0437, 978.2798},
      {true, true, 69741.6539, 69770.4207, 29130.9627, 27272.3312, 28.7668, 1858.6315},
      {true, true, 76707.7658, 76469.3030, 40118.2734, 40647.3430, 238.4628, 529.0696},
      {true, true, 87940.3129, 88358.4590, 40976.3481, 40236.5320, 418.1461, 739.8161},
  };
  return rows;
}

}  // namespace nvmap::test
