#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "xlisac/acquisition.hpp"
#include "xlisac/isac.hpp"
#include "xlisac/signal.hpp"

using namespace xlisac;

namespace {

SystemConfig desk(double p_dbm = 60.0) {
  SystemConfig c;
  c.p_max = dbm_to_watts(p_dbm);
  return c.resolved();
}

Scenario desk_scenario() {
  Scenario s;
  s.targets = {{2.0, kPi / 6, 0.8}, {4.5, kPi / 6, 2.2}, {3.0, kPi / 6, 1.5}};
  s.reflection_coeffs = {std::polar(1.0, 0.3), std::polar(1.0, 1.9), std::polar(1.0, -2.4)};
  s.user_indices = {0, 1};
  return s;
}

BfConfiguration random_bf(const ChannelSet& ch, const SystemConfig& c, std::mt19937_64& rng) {
  const LorentzianCodebook cb = LorentzianCodebook::make(c.codebook_bits);
  BfConfiguration bf;
  bf.w_rx = random_analog_matrix(rng, Side::Rx, cb, c);
  bf.w_tx = random_analog_matrix(rng, Side::Tx, cb, c);
  bf.v = random_precoder(bf.w_tx, ch.p_tx, 2, c.p_max, rng);
  return bf;
}

}  // namespace

TEST(SiCanceller, ExactCancellationAndDirectChain) {
  SystemConfig c = desk();
  c.n_rf = 2;
  c.n_e = 4;
  c = c.resolved();
  const ChannelSet ch = synthesize_channels(desk_scenario(), c);
  std::mt19937_64 rng(1);
  BfConfiguration bf = random_bf(ch, c, rng);
  const CMat direct = bf.w_rx.materialized().adjoint() * ch.p_rx.dense().adjoint() * ch.h_si * ch.p_tx.dense() *
                      bf.w_tx.materialized();
  bf.d = si_canceller(bf, ch);
  EXPECT_LT((bf.d + direct).norm(), 1e-12 * direct.norm());
  EXPECT_LT((effective_si(bf, ch) + bf.d).norm(), 1e-12 * direct.norm());
  for (double r : residual_si(bf, ch)) EXPECT_LE(r, 1e-24 * direct.squaredNorm());

  SystemConfig quiet = c;
  quiet.si_gain = 0.0;
  const ChannelSet none = synthesize_channels(desk_scenario(), quiet);
  bf.d = si_canceller(bf, none);
  EXPECT_EQ(bf.d.norm(), 0.0);
  EXPECT_EQ(gamma_si_feasibility(bf, none), 0.0);
}

TEST(ResidualSi, RowsAndScaling) {
  const SystemConfig c = desk();
  const ChannelSet ch = synthesize_channels(desk_scenario(), c);
  std::mt19937_64 rng(2);
  BfConfiguration bf = random_bf(ch, c, rng);
  bf.d = CMat::Zero(c.n_rf, c.n_rf);
  const CMat rows = effective_si(bf, ch) * bf.v;
  const std::vector<double> r = residual_si(bf, ch);
  ASSERT_EQ(static_cast<int>(r.size()), c.n_rf);
  for (int i = 0; i < c.n_rf; ++i) EXPECT_NEAR(r[i], rows.row(i).squaredNorm(), 1e-12 * rows.row(i).squaredNorm());
  bf.v *= 2.0;
  const std::vector<double> r2 = residual_si(bf, ch);
  for (int i = 0; i < c.n_rf; ++i) EXPECT_NEAR(r2[i], 4 * r[i], 1e-12 * r[i]);
}

TEST(ResidualSi, TruncationNeverRaisesRows) {
  const SystemConfig c = desk();
  const ChannelSet ch = synthesize_channels(desk_scenario(), c);
  std::mt19937_64 rng(3);
  BfConfiguration bf = random_bf(ch, c, rng);
  const CMat e = effective_si(bf, ch);
  bf.d = -0.9 * e;
  Eigen::JacobiSVD<CMat> svd(-bf.d, Eigen::ComputeFullV);
  std::vector<double> prev(c.n_rf, std::numeric_limits<double>::infinity());
  for (int kept = c.n_rf; kept >= 1; --kept) {
    CMat f = svd.matrixV();
    f.rightCols(c.n_rf - kept).setZero();
    bf.v = f;
    const std::vector<double> rows = residual_si(bf, ch);
    for (int i = 0; i < c.n_rf; ++i) EXPECT_LE(rows[i], prev[i] * (1 + 1e-12));
    prev = rows;
  }
}

TEST(GammaSi, SvdOracle) {
  SystemConfig c = desk();
  c.n_rf = 2;
  c.n_e = 2;
  c = c.resolved();
  const ChannelSet ch = synthesize_channels(desk_scenario(), c);
  std::mt19937_64 rng(4);
  BfConfiguration bf = random_bf(ch, c, rng);
  bf.d = CMat::Zero(2, 2);
  bf.v = CMat::Identity(2, 2);
  Eigen::JacobiSVD<CMat> svd(effective_si(bf, ch));
  EXPECT_NEAR(gamma_si_feasibility(bf, ch), svd.singularValues()(0), 1e-12 * svd.singularValues()(0));
  bf.d = si_canceller(bf, ch);
  EXPECT_LE(gamma_si_feasibility(bf, ch), 1e-12 * svd.singularValues()(0));
}

TEST(Modes, ParseAndName) {
  EXPECT_EQ(parse_mode("isac"), IsacMode::Isac);
  EXPECT_EQ(parse_mode("sensing-only"), IsacMode::SensingOnly);
  EXPECT_EQ(parse_mode("comm-only"), IsacMode::CommOnly);
  EXPECT_EQ(mode_name(IsacMode::CommOnly), "comm-only");
  EXPECT_THROW(parse_mode("both"), ConfigError);
}

class Algorithm1Test : public ::testing::Test {
 protected:
  void SetUp() override {
    config = desk(90.0);
    scenario = desk_scenario();
    channels = synthesize_channels(scenario, config);
    users = scenario.user_positions();
  }
  SystemConfig config;
  Scenario scenario;
  ChannelSet channels;
  std::vector<SphericalPosition> users;
  LorentzianCodebook codebook = LorentzianCodebook::make(10);
};

TEST_F(Algorithm1Test, EndpointsReproduceComponentDesigns) {
  const IsacSolution base = algorithm1(users, channels, codebook, config);
  IsacOptions comm;
  comm.xi = 1.0;
  comm.rho = 1.0;
  const CombinedDesign c1 = combine_designs(base.sensing, base.comm, 1.0, 1.0, codebook, channels.p_tx, config.p_max);
  EXPECT_EQ(c1.w_tx.weights, base.comm.w_tx_c.weights);
  EXPECT_LT((c1.v - base.comm.v_c).norm(), 1e-9 * base.comm.v_c.norm());
  const CombinedDesign c0 = combine_designs(base.sensing, base.comm, 0.0, 0.0, codebook, channels.p_tx, config.p_max);
  EXPECT_EQ(c0.w_tx.weights, base.sensing.w_tx_s.weights);
  const CommDesign same{base.sensing.w_tx_s, base.sensing.v_s, 0.0};
  const CombinedDesign twin = combine_designs(base.sensing, same, 0.5, 0.5, codebook, channels.p_tx, config.p_max);
  EXPECT_EQ(twin.w_tx.weights, base.sensing.w_tx_s.weights);
  EXPECT_THROW(combine_designs(base.sensing, base.comm, 1.5, 0.0, codebook, channels.p_tx, config.p_max), DomainError);

  const IsacSolution forced = algorithm1(users, channels, codebook, config, comm);
  ASSERT_EQ(forced.grid_trace.size(), 1u);
  EXPECT_EQ(forced.grid_trace[0].xi, 1.0);
}

TEST_F(Algorithm1Test, VacuousConstraintsGiveGridOptimum) {
  SystemConfig loose = config;
  loose.gamma_s = std::numeric_limits<double>::infinity();
  loose.gamma_si = std::numeric_limits<double>::infinity();
  const IsacSolution sol = algorithm1(users, channels, codebook, loose);
  EXPECT_TRUE(sol.feasible);
  EXPECT_EQ(sol.kept_columns, loose.n_rf);
  double best = -1.0;
  for (const GridPoint& g : sol.grid_trace) best = std::max(best, g.sum_rate);
  EXPECT_NEAR(sol.sum_rate, best, 1e-9 * best);
  EXPECT_EQ(sol.grid_trace.size(), 121u);
}

TEST_F(Algorithm1Test, SelectedPointDominatesFeasibleGrid) {
  SystemConfig c = config;
  const IsacSolution probe = algorithm1(users, channels, codebook, c);
  // Put the sensing threshold between the best and the worst grid PEB so the constraint binds.
  std::vector<double> pebs;
  for (const GridPoint& g : probe.grid_trace) pebs.push_back(g.peb);
  std::sort(pebs.begin(), pebs.end());
  c.gamma_s = pebs[pebs.size() / 2];
  const IsacSolution sol = algorithm1(users, channels, codebook, c);
  const GridPoint* pick = nullptr;
  for (const GridPoint& g : sol.grid_trace)
    if (g.xi == sol.bf.xi && g.rho == sol.bf.rho) pick = &g;
  ASSERT_NE(pick, nullptr);
  EXPECT_TRUE(pick->peb_feasible);
  for (const GridPoint& g : sol.grid_trace) {
    if (g.peb_feasible) {
      EXPECT_LE(g.sum_rate, pick->sum_rate);
    }
  }
}

TEST_F(Algorithm1Test, FeasibilityFlagIsSound) {
  for (double gs : {1e-4, 1e-3, 1e-2}) {
    SystemConfig c = config;
    c.gamma_s = gs;
    const IsacSolution sol = algorithm1(users, channels, codebook, c);
    EXPECT_EQ(sol.feasible, verify_feasibility(sol, users, channels, c)) << gs;
    if (sol.feasible) {
      EXPECT_LE(sol.peb, gs);
      for (double r : sol.residual_si) EXPECT_LE(r, c.gamma_si);
    }
  }
}

TEST_F(Algorithm1Test, NoSelfInterferenceExitsAtFullBasis) {
  SystemConfig c = config;
  c.si_gain = 0.0;
  c.gamma_s = std::numeric_limits<double>::infinity();
  const ChannelSet ch = synthesize_channels(scenario, c);
  const IsacSolution sol = algorithm1(users, ch, codebook, c);
  EXPECT_TRUE(sol.feasible);
  EXPECT_EQ(sol.kept_columns, c.n_rf);
  ASSERT_FALSE(sol.truncation_trace.empty());
  EXPECT_EQ(sol.truncation_trace.front().max_residual_si, 0.0);
}

TEST_F(Algorithm1Test, Deterministic) {
  const IsacSolution a = algorithm1(users, channels, codebook, config);
  const IsacSolution b = algorithm1(users, channels, codebook, config);
  EXPECT_EQ(a.bf.w_tx.weights, b.bf.w_tx.weights);
  EXPECT_EQ(a.bf.v, b.bf.v);
  EXPECT_EQ(a.sum_rate, b.sum_rate);
  EXPECT_EQ(a.peb, b.peb);
}
