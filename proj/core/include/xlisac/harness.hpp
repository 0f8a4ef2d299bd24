#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "xlisac/acquisition.hpp"
#include "xlisac/crb_opt.hpp"
#include "xlisac/estimation.hpp"
#include "xlisac/isac.hpp"
#include "xlisac/scenario.hpp"

namespace xlisac {

struct ScenarioSettings {
  int n_targets = 3;
  int n_users = 2;
  double theta = kPi / 6;
  double phi_min = 0.0, phi_max = kPi;
  double r_min = 1.0, r_max = 15.0;
  bool clip_to_fresnel = true;
};

struct HarnessSettings {
  int trials = 50;
  std::vector<double> p_max_dbm{40, 50, 60, 70, 80};
  IsacMode mode = IsacMode::Isac;
  bool record_timing = false;  // wall_ms stays 0 otherwise so outputs are byte-stable
};

struct RunConfig {
  SystemConfig system;
  ScenarioSettings scenario;
  SearchGrid grid;  // r_min/r_max <= 0 follow the scenario range
  AcquisitionSettings acquisition;
  CrbOptions crb;
  FactorizeOptions factorize;
  HarnessSettings harness;
  std::string source_text;  // raw config contents for the echo

  // Resolved system constants plus the effective search grid; throws ConfigError.
  RunConfig resolved() const;
  void validate() const;
};

Scenario generate_scenario(std::mt19937_64& rng, const SystemConfig& config, const ScenarioSettings& settings);

struct TrialRecord {
  std::uint64_t seed = 0;
  int power_index = 0;
  int trial_index = 0;
  double p_max_dbm = 0.0;
  double rmse_m = 0.0;
  double peb_m = 0.0;
  double peb_est_m = 0.0;  // bound of the emitted design at the estimated positions; not written to CSV
  double sum_rate_true = 0.0;
  double sum_rate_est = 0.0;
  double residual_si_max = 0.0;
  bool feasible = false;
  double wall_ms = 0.0;
  bool failed = false;
  std::string error;
};

struct PowerSummary {
  double p_max_dbm = 0.0;
  int trials = 0;
  int completed = 0;
  int failed = 0;
  double mean_rmse = 0.0, median_rmse = 0.0;
  double mean_peb = 0.0, median_peb = 0.0;
  double median_ratio = 0.0;  // median of rmse / peb
  double mean_rate_true = 0.0, mean_rate_est = 0.0;
  double feasible_fraction = 0.0;
};

struct RunSummary {
  std::string run_id;
  std::string mode;
  std::uint64_t master_seed = 0;
  std::vector<PowerSummary> powers;
};

struct RunResult {
  RunSummary summary;
  std::vector<TrialRecord> records;
};

std::uint64_t trial_seed(std::uint64_t master, int power_index, int trial_index);

TrialRecord run_trial(const RunConfig& config, double p_max_dbm, std::uint64_t seed);

// One trial evaluated under several modes. Scenario, channels and acquisition are shared, and each mode
// continues from the same rng state, so every record equals the one a single-mode run would produce.
std::vector<TrialRecord> run_trial_modes(const RunConfig& config, double p_max_dbm, std::uint64_t seed,
                                         const std::vector<IsacMode>& modes);

RunSummary summarize(const std::vector<TrialRecord>& records, const std::vector<double>& p_max_dbm);

RunResult run_monte_carlo(const RunConfig& config);

// Same trials and seeds as run_monte_carlo, one result per mode.
std::vector<RunResult> run_monte_carlo_modes(const RunConfig& config, const std::vector<IsacMode>& modes);

void write_records_csv(const std::vector<TrialRecord>& records, std::ostream& out);
std::vector<TrialRecord> read_records_csv(std::istream& in);

// records.csv, summary.json and plotdata_*.csv under `dir`.
void emit_outputs(const RunResult& result, const RunConfig& config, const std::filesystem::path& dir);

std::string summary_json(const RunResult& result, const RunConfig& config);

}  // namespace xlisac
