#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "xlisac/config_io.hpp"
#include "xlisac/harness.hpp"
#include "xlisac/signal.hpp"

using namespace xlisac;

namespace {

const char* kHeader =
    "seed,p_max_dbm,rmse_m,peb_m,sum_rate_bpshz_true,sum_rate_bpshz_est,residual_si_max,feasible,wall_ms";

RunConfig tiny_run() {
  RunConfig c = load_run_config(std::filesystem::path(XLISAC_CONFIG_DIR) / "desk.ini");
  c.system.n_rf = 2;
  c.system.n_e = 8;
  c.scenario.n_targets = 2;
  c.scenario.n_users = 1;
  c.grid.n_r = 12;
  c.grid.n_theta = 12;
  c.grid.n_phi = 36;
  c.acquisition.looks = 4;
  c.harness.trials = 2;
  c.harness.p_max_dbm = {80, 100};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Symbols, OrthogonalRowsAtStreamPower) {
  std::mt19937_64 rng(1);
  const SymbolBlock s = make_symbols(3, 200, rng, 0.25);
  const CMat g = s.s * s.s.adjoint() / 200.0;
  EXPECT_LT((g - 0.25 * CMat::Identity(3, 3)).norm(), 1e-10 * 0.25);
}

TEST(Synthesize, NoiselessWithoutSelfInterference) {
  SystemConfig c;
  c.n_rf = 2;
  c.n_e = 4;
  c.si_gain = 0.0;
  c = c.resolved();
  c.noise_power = 0.0;
  Scenario s;
  s.targets = {{2.0, 0.5, 1.0}};
  s.reflection_coeffs = {1.0};
  s.user_indices = {0};
  const ChannelSet ch = synthesize_channels(s, c);
  std::mt19937_64 rng(2);
  const LorentzianCodebook cb = LorentzianCodebook::make(8);
  BfConfiguration bf;
  bf.w_rx = random_analog_matrix(rng, Side::Rx, cb, c);
  bf.w_tx = random_analog_matrix(rng, Side::Tx, cb, c);
  bf.v = CMat::Identity(2, 1);
  bf.d = CMat::Zero(2, 2);
  const SymbolBlock sym = make_symbols(1, 16, rng);
  EXPECT_LT((synthesize_received(bf, ch, sym, rng, c) - effective_echo(bf, ch) * sym.s).norm(), 1e-20);
}

TEST(Synthesize, NoiseCovarianceMonteCarlo) {
  SystemConfig c;
  c.n_rf = 2;
  c.n_e = 4;
  c.si_gain = 0.0;
  c = c.resolved();
  Scenario s;
  s.targets = {{2.0, 0.5, 1.0}};
  s.reflection_coeffs = {1.0};
  s.user_indices = {0};
  const ChannelSet ch = synthesize_channels(s, c);
  std::mt19937_64 rng(3);
  const LorentzianCodebook cb = LorentzianCodebook::make(8);
  BfConfiguration bf;
  bf.w_rx = random_analog_matrix(rng, Side::Rx, cb, c);
  bf.w_tx = random_analog_matrix(rng, Side::Tx, cb, c);
  bf.v = CMat::Zero(2, 1);
  bf.d = CMat::Zero(2, 2);
  const SymbolBlock sym = make_symbols(1, 10000, rng);
  const CMat y = synthesize_received(bf, ch, sym, rng, c);
  const CMat emp = y * y.adjoint() / 10000.0;
  const CMat pw = ch.p_rx.dense() * bf.w_rx.materialized();
  const CMat rn = c.noise_power * pw.adjoint() * pw;
  EXPECT_LT((emp - rn).norm(), 0.05 * rn.norm());
}

TEST(Scenario, GeneratorFollowsSettings) {
  const SystemConfig c = SystemConfig{}.resolved();
  ScenarioSettings set;
  std::mt19937_64 a(7), b(7);
  const Scenario s1 = generate_scenario(a, c, set), s2 = generate_scenario(b, c, set);
  ASSERT_EQ(s1.n_targets(), 3);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(s1.targets[k].r, s2.targets[k].r);
    EXPECT_EQ(s1.targets[k].phi, s2.targets[k].phi);
    EXPECT_EQ(s1.targets[k].theta, kPi / 6);
    EXPECT_NEAR(std::abs(s1.reflection_coeffs[k]), 1.0, 1e-12);
  }
  EXPECT_EQ(s1.user_indices, (std::vector<int>{0, 1}));

  std::mt19937_64 rng(8);
  const auto [lo, hi] = fresnel_clip(set.r_min, set.r_max, c);
  double sum = 0.0;
  const int draws = 10000 / 3 + 1;
  for (int i = 0; i < draws; ++i)
    for (const auto& t : generate_scenario(rng, c, set).targets) {
      sum += t.phi;
      EXPECT_GE(t.r, lo);
      EXPECT_LE(t.r, hi);
    }
  const double n = 3.0 * draws;
  const double sigma = kPi / std::sqrt(12.0 * n);
  EXPECT_NEAR(sum / n, kPi / 2, 3 * sigma);
}

TEST(Seeds, TrialSeedIsOrderFree) {
  EXPECT_EQ(trial_seed(1, 2, 3), trial_seed(1, 2, 3));
  EXPECT_NE(trial_seed(1, 2, 3), trial_seed(1, 3, 2));
  EXPECT_NE(trial_seed(1, 2, 3), trial_seed(2, 2, 3));
}

TEST(Records, CsvRoundTripAndHeader) {
  std::vector<TrialRecord> recs(2);
  recs[0] = {12345, 0, 0, 60.0, 0.012, 0.003, 0.002, 41.5, 40.25, 1e-15, true, 0.0, false, ""};
  recs[1] = {987654321, 1, 0, 75.5, 0.5, 0.01, 0.009, 50.125, 49.0, 3.5e-14, false, 12.0, false, ""};
  std::ostringstream out;
  write_records_csv(recs, out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), kHeader);
  std::istringstream in(out.str());
  const std::vector<TrialRecord> back = read_records_csv(in);
  ASSERT_EQ(back.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].seed, recs[i].seed);
    EXPECT_EQ(back[i].p_max_dbm, recs[i].p_max_dbm);
    EXPECT_EQ(back[i].rmse_m, recs[i].rmse_m);
    EXPECT_EQ(back[i].peb_m, recs[i].peb_m);
    EXPECT_EQ(back[i].sum_rate_true, recs[i].sum_rate_true);
    EXPECT_EQ(back[i].sum_rate_est, recs[i].sum_rate_est);
    EXPECT_EQ(back[i].residual_si_max, recs[i].residual_si_max);
    EXPECT_EQ(back[i].feasible, recs[i].feasible);
    EXPECT_EQ(back[i].wall_ms, recs[i].wall_ms);
  }
  std::ostringstream empty;
  write_records_csv({}, empty);
  EXPECT_EQ(empty.str(), std::string(kHeader) + "\n");
}

TEST(Summary, EmptyRecordsGiveZeroCounts) {
  const RunSummary s = summarize({}, {60.0, 70.0});
  ASSERT_EQ(s.powers.size(), 2u);
  EXPECT_EQ(s.powers[0].trials, 0);
  EXPECT_EQ(s.powers[1].completed, 0);
}

TEST(Summary, AggregatesCompletedTrialsOnly) {
  std::vector<TrialRecord> recs(3);
  for (int i = 0; i < 3; ++i) {
    recs[i].p_max_dbm = 60.0;
    recs[i].rmse_m = 1.0 + i;
    recs[i].peb_m = 0.5;
    recs[i].sum_rate_true = 10.0 * (i + 1);
    recs[i].feasible = i == 0;
  }
  recs[2].failed = true;
  const RunSummary s = summarize(recs, {60.0});
  EXPECT_EQ(s.powers[0].trials, 3);
  EXPECT_EQ(s.powers[0].completed, 2);
  EXPECT_EQ(s.powers[0].failed, 1);
  EXPECT_DOUBLE_EQ(s.powers[0].mean_rmse, 1.5);
  EXPECT_DOUBLE_EQ(s.powers[0].median_ratio, 3.0);
  EXPECT_DOUBLE_EQ(s.powers[0].mean_rate_true, 15.0);
  EXPECT_DOUBLE_EQ(s.powers[0].feasible_fraction, 0.5);
}

TEST(Config, ParsesUnitsAndRejectsBadInput) {
  EXPECT_NEAR(parse_quantity("120 GHz", Unit::Frequency), 120e9, 1);
  EXPECT_NEAR(parse_quantity("30 dBm", Unit::Power), 1.0, 1e-12);
  EXPECT_NEAR(parse_quantity("90 deg", Unit::Angle), kPi / 2, 1e-15);
  EXPECT_NEAR(parse_quantity("0.5 lambda", Unit::Length, 2e-3), 1e-3, 1e-15);
  EXPECT_NEAR(parse_quantity("2 mm", Unit::Length), 2e-3, 1e-15);
  EXPECT_THROW(parse_quantity("3 furlongs", Unit::Length), ConfigError);
  EXPECT_EQ(parse_list("60, 75,90"), (std::vector<double>{60, 75, 90}));

  const RunConfig c = parse_run_config("[system]\nn_rf = 2\nn_e = 8\np_max = 40 dBm\n[harness]\ntrials = 3\n");
  EXPECT_EQ(c.system.n_rf, 2);
  EXPECT_NEAR(c.system.p_max, 10.0, 1e-12);
  EXPECT_EQ(c.harness.trials, 3);
  EXPECT_THROW(parse_run_config("[system]\nn_rf = -1\n").validate(), ConfigError);
  EXPECT_THROW(parse_run_config("[system]\nbogus_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[estimation]\nstatistic = music\n"), ConfigError);
}

TEST(Config, DeskFileValidates) {
  const RunConfig c = load_run_config(std::filesystem::path(XLISAC_CONFIG_DIR) / "desk.ini");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.system.n_e, 16);
  EXPECT_EQ(c.harness.trials, 50);
  EXPECT_EQ(c.harness.p_max_dbm.size(), 5u);
}

TEST(MonteCarlo, OneTrialOnePower) {
  RunConfig c = tiny_run();
  c.harness.trials = 1;
  c.harness.p_max_dbm = {90};
  const RunResult r = run_monte_carlo(c);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_FALSE(r.records[0].failed) << r.records[0].error;
  EXPECT_GE(r.records[0].rmse_m, 0.0);
  EXPECT_GT(r.records[0].peb_m, 0.0);
  EXPECT_EQ(r.records[0].seed, trial_seed(c.system.rng_seed, 0, 0));
}

TEST(MonteCarlo, ModesShareTrialsAndMatchSingleRuns) {
  const RunConfig c = tiny_run();
  const std::vector<RunResult> all = run_monte_carlo_modes(c, {IsacMode::Isac, IsacMode::CommOnly});
  RunConfig comm = c;
  comm.harness.mode = IsacMode::CommOnly;
  const RunResult single = run_monte_carlo(comm);
  std::ostringstream a, b;
  write_records_csv(all[1].records, a);
  write_records_csv(single.records, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(all[0].records.size(), 4u);
  // Same scenarios per trial; the final refinement uses each mode's own beamformer.
  for (size_t i = 0; i < all[0].records.size(); ++i) {
    EXPECT_EQ(all[0].records[i].seed, all[1].records[i].seed);
    EXPECT_EQ(all[0].records[i].p_max_dbm, all[1].records[i].p_max_dbm);
  }
}

TEST(MonteCarlo, EmittedFilesAreByteStable) {
  const RunConfig c = tiny_run();
  const auto root = std::filesystem::temp_directory_path() / "xlisac_unit_emit";
  std::filesystem::remove_all(root);
  emit_outputs(run_monte_carlo(c), c, root / "a");
  emit_outputs(run_monte_carlo(c), c, root / "b");
  for (const char* f : {"records.csv", "summary.json", "plotdata_rmse_peb.csv", "plotdata_sum_rate.csv",
                        "plotdata_feasibility.csv"}) {
    const std::string x = slurp(root / "a" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(root / "b" / f)) << f;
  }
  std::ifstream csv(root / "a" / "records.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, kHeader);
  std::filesystem::remove_all(root);
}
