#include <benchmark/benchmark.h>

#include <random>

#include "xlisac/acquisition.hpp"
#include "xlisac/crb_opt.hpp"
#include "xlisac/fim.hpp"
#include "xlisac/isac.hpp"
#include "xlisac/signal.hpp"

using namespace xlisac;

namespace {

SystemConfig config_for(int n_e, double p_dbm = 90.0) {
  SystemConfig c;
  c.n_e = n_e;
  c.p_max = dbm_to_watts(p_dbm);
  return c.resolved();
}

Scenario three_targets() {
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

void BM_ChannelPartials(benchmark::State& state) {
  const SystemConfig c = config_for(static_cast<int>(state.range(0)));
  const auto users = three_targets().user_positions();
  for (auto _ : state) benchmark::DoNotOptimize(channel_partials(users, c));
}
BENCHMARK(BM_ChannelPartials)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

void BM_FimForTargets(benchmark::State& state) {
  const SystemConfig c = config_for(static_cast<int>(state.range(0)));
  const Scenario s = three_targets();
  const ChannelSet ch = synthesize_channels(s, c);
  std::mt19937_64 rng(1);
  const BfConfiguration bf = random_bf(ch, c, rng);
  const auto users = s.user_positions();
  for (auto _ : state) benchmark::DoNotOptimize(fim_for_targets(bf, users, ch.p_tx, ch.p_rx, c));
}
BENCHMARK(BM_FimForTargets)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

void BM_AlternateCrb(benchmark::State& state) {
  const SystemConfig c = config_for(static_cast<int>(state.range(0)));
  const auto users = three_targets().user_positions();
  const PropagationMatrix p_tx = propagation_matrix(Side::Tx, c), p_rx = propagation_matrix(Side::Rx, c);
  const KMatrices k = k_matrices(channel_partials(users, c), p_tx, p_rx);
  for (auto _ : state) benchmark::DoNotOptimize(alternate_crb(k, c.n_rf, c.n_e));
}
BENCHMARK(BM_AlternateCrb)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Algorithm1(benchmark::State& state) {
  const SystemConfig c = config_for(static_cast<int>(state.range(0)));
  const Scenario s = three_targets();
  const ChannelSet ch = synthesize_channels(s, c);
  const LorentzianCodebook cb = LorentzianCodebook::make(c.codebook_bits);
  const auto users = s.user_positions();
  for (auto _ : state) benchmark::DoNotOptimize(algorithm1(users, ch, cb, c));
}
BENCHMARK(BM_Algorithm1)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_AcquireTargets(benchmark::State& state) {
  const SystemConfig c = config_for(16, 110.0);
  const Scenario s = three_targets();
  const ChannelSet ch = synthesize_channels(s, c);
  const LorentzianCodebook cb = LorentzianCodebook::make(c.codebook_bits);
  SearchGrid grid;
  grid.n_r = 30;
  grid.n_theta = 30;
  grid.n_phi = 90;
  AcquisitionSettings settings;
  settings.looks = static_cast<int>(state.range(0));
  for (auto _ : state) {
    std::mt19937_64 rng(2);
    benchmark::DoNotOptimize(acquire_targets(ch, s.n_targets(), c, grid, settings, cb, rng));
  }
}
BENCHMARK(BM_AcquireTargets)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
