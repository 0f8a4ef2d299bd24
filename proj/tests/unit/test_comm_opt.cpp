#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "xlisac/comm_opt.hpp"
#include "xlisac/signal.hpp"

using namespace xlisac;

namespace {

SystemConfig small_config(int n_rf, int n_e) {
  SystemConfig c;
  c.n_rf = n_rf;
  c.n_e = n_e;
  return c.resolved();
}

}  // namespace

TEST(SumRate, Examples) {
  SystemConfig c = small_config(1, 2);
  c.noise_power = 1.0;
  const PropagationMatrix p{Side::Tx, CVec::Ones(2)};
  const AnalogBfMatrix w{Side::Tx, CMat::Constant(1, 2, cplx(0.5, 0.0))};
  CRow h(2);
  h << 1.0, 1.0;
  EXPECT_EQ(sum_rate(w, CMat::Zero(1, 1), {h}, p, c), 0.0);
  // |h P W v|^2 = 1 = sigma^2.
  EXPECT_NEAR(sum_rate(w, CMat::Ones(1, 1), {h}, p, c), 1.0, 1e-12);

  const SystemConfig c2 = small_config(2, 3);
  std::mt19937_64 rng(1);
  const PropagationMatrix p2 = propagation_matrix(Side::Tx, c2);
  const AnalogBfMatrix w2{Side::Tx, complex_gaussian(2, 3, 1.0, rng)};
  const CMat v = complex_gaussian(2, 2, 1.0, rng);
  std::vector<CRow> hs{complex_gaussian(1, 6, 1e-6, rng), complex_gaussian(1, 6, 1e-6, rng)};
  double oracle = 0.0;
  for (int u = 0; u < 2; ++u) {
    const cplx g = (hs[u] * p2.dense() * w2.materialized() * v.col(u))(0);
    oracle += std::log2(1.0 + std::norm(g) / c2.noise_power);
  }
  EXPECT_NEAR(sum_rate(w2, v, hs, p2, c2), oracle, 1e-9 * oracle);
}

TEST(BlockDiagonalize, MatchedFilterForOneUser) {
  std::mt19937_64 rng(2);
  const CMat g = complex_gaussian(1, 4, 1.0, rng);
  const CMat v = block_diagonalize(g, CMat::Identity(4, 4), 2.0);
  const CVec dir = g.adjoint().col(0).normalized();
  EXPECT_NEAR(std::abs(dir.dot(v.col(0))), v.col(0).norm(), 1e-12);
  EXPECT_NEAR(v.squaredNorm(), 2.0, 1e-12);
}

TEST(BlockDiagonalize, OrthogonalUsersNoLoss) {
  CMat g = CMat::Zero(2, 3);
  g(0, 0) = 2.0;
  g(1, 1) = cplx(0.0, 1.0);
  const CMat v = block_diagonalize(g, CMat::Identity(3, 3), 1.0);
  EXPECT_NEAR(std::abs(v(0, 0)), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(std::abs(v(1, 1)), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(std::abs((g * v)(1, 0)), 0.0, 1e-15);
}

TEST(BlockDiagonalize, ProjectorOracle) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const CMat g = complex_gaussian(2, 4, 1.0, rng);
    const CMat v = block_diagonalize(g, CMat::Identity(4, 4), 1.0);
    const CMat gv = g * v;
    EXPECT_LT(std::abs(gv(1, 0)), 1e-10 * std::abs(gv(0, 0)));
    EXPECT_LT(std::abs(gv(0, 1)), 1e-10 * std::abs(gv(1, 1)));
    for (int u = 0; u < 2; ++u) {
      const CRow other = g.row(1 - u);
      const CMat proj = CMat::Identity(4, 4) - other.adjoint() * other / other.squaredNorm();
      const double gain = (g.row(u) * proj).norm();
      EXPECT_NEAR(std::abs(gv(u, u)) / v.col(u).norm(), gain, 1e-10 * gain);
      EXPECT_NEAR(v.col(u).squaredNorm(), 0.5, 1e-12);
    }
  }
}

TEST(BlockDiagonalize, InfeasibleCases) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(block_diagonalize(complex_gaussian(3, 2, 1.0, rng), CMat::Identity(2, 2), 1.0), InfeasibleBdError);
  CMat collide(2, 2);
  collide << 1.0, 2.0, 2.0, 4.0;
  EXPECT_THROW(block_diagonalize(collide, CMat::Identity(2, 2), 1.0), InfeasibleBdError);
}

TEST(BlockDiagonalization, PowerEqualityThroughPropagation) {
  const SystemConfig c = small_config(4, 16);
  const LorentzianCodebook cb = LorentzianCodebook::make(c.codebook_bits);
  std::mt19937_64 rng(5);
  const PropagationMatrix p = propagation_matrix(Side::Tx, c);
  const AnalogBfMatrix w = random_analog_matrix(rng, Side::Tx, cb, c);
  const std::vector<CRow> h{dl_channel({2.0, 0.5, 0.6}, c), dl_channel({5.0, 0.5, 2.2}, c)};
  const CMat v = block_diagonalization(w, h, p, c);
  EXPECT_NEAR((p.dense() * w.materialized() * v).squaredNorm(), c.p_max, 1e-9 * c.p_max);
  const CMat g = effective_dl_channels(w, h, p) * v;
  EXPECT_LT(std::abs(g(0, 1)), 1e-10 * std::abs(g(1, 1)));
  EXPECT_LT(std::abs(g(1, 0)), 1e-10 * std::abs(g(0, 0)));
}

namespace {

// Beam gain over radiated power, the quantity the codeword search ranks by.
double gain_ratio(const CRow& hp, const CVec& p, const CVec& w) {
  return std::norm((hp * w)(0)) / (p.cwiseAbs2().array() * w.cwiseAbs2().array()).sum();
}

}  // namespace

TEST(SelectCodewords, ZeroChannelFallsBackToZeroPhase) {
  const SystemConfig c = small_config(2, 3);
  const LorentzianCodebook cb = LorentzianCodebook::make(4);
  const AnalogBfMatrix w = select_tx_codewords({CRow::Zero(6)}, propagation_matrix(Side::Tx, c), cb, c);
  for (Eigen::Index i = 0; i < w.weights.size(); ++i) EXPECT_EQ(w.weights(i), cb.weights[zero_phase_index(cb)]);
}

TEST(SelectCodewords, NearExhaustiveOnSmallCodebook) {
  for (int bits : {3, 4}) {
    const SystemConfig c = small_config(1, 3);
    const LorentzianCodebook cb = LorentzianCodebook::make(bits);
    const int n = cb.size();
    const PropagationMatrix p = propagation_matrix(Side::Tx, c);
    std::mt19937_64 rng(7 + bits);
    for (int t = 0; t < 20; ++t) {
      const CRow h = complex_gaussian(1, 3, 1.0, rng);
      const CRow hp = h * p.dense();
      double best = 0.0;
      CVec w(3);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int d = 0; d < n; ++d) {
            w << cb.weights[a], cb.weights[b], cb.weights[d];
            best = std::max(best, gain_ratio(hp, p.diagonal, w));
          }
      const AnalogBfMatrix got = select_tx_codewords({h}, p, cb, c);
      EXPECT_GE(gain_ratio(hp, p.diagonal, got.weights.row(0).transpose()), best * 0.98) << bits << " " << t;
    }
  }
}

TEST(DesignComm, PowerFeasibleAndRateIncreasing) {
  SystemConfig c = small_config(4, 16);
  const LorentzianCodebook cb = LorentzianCodebook::make(c.codebook_bits);
  const PropagationMatrix p = propagation_matrix(Side::Tx, c);
  const std::vector<CRow> h{dl_channel({2.0, 0.5, 0.6}, c), dl_channel({5.0, 0.5, 2.2}, c)};
  double last = -1.0;
  for (double dbm : {40.0, 60.0, 80.0}) {
    c.p_max = dbm_to_watts(dbm);
    const CommDesign d = design_comm(h, p, cb, c);
    EXPECT_NEAR((p.dense() * d.w_tx_c.materialized() * d.v_c).squaredNorm(), c.p_max, 1e-9 * c.p_max);
    EXPECT_GT(d.sum_rate, last);
    last = d.sum_rate;
  }
}
