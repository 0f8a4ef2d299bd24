#include "xlisac/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "xlisac/channel.hpp"
#include "xlisac/comm_opt.hpp"
#include "xlisac/fim.hpp"
#include "xlisac/signal.hpp"

namespace xlisac {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// JSON has no NaN or infinity; those become null.
nlohmann::ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

RunConfig RunConfig::resolved() const {
  RunConfig c = *this;
  c.system = system.resolved();
  double lo = scenario.r_min, hi = scenario.r_max;
  if (scenario.clip_to_fresnel && c.system.carrier_frequency > 0) std::tie(lo, hi) = fresnel_clip(lo, hi, c.system);
  if (c.grid.r_min <= 0) c.grid.r_min = lo;
  if (c.grid.r_max <= 0) c.grid.r_max = hi;
  return c;
}

void RunConfig::validate() const {
  const RunConfig c = resolved();
  c.system.validate();
  const auto& s = c.scenario;
  if (s.n_targets < 1) throw ConfigError("invalid configuration: n_targets must be >= 1");
  if (s.n_users < 1 || s.n_users > s.n_targets) throw ConfigError("invalid configuration: n_users must be in [1, n_targets]");
  if (s.n_users > c.system.n_rf) throw ConfigError("invalid configuration: n_users must not exceed n_rf");
  if (s.n_users > c.system.t_slots) throw ConfigError("invalid configuration: n_users must not exceed t_slots");
  if (!(s.r_min > 0) || !(s.r_max >= s.r_min)) throw ConfigError("invalid configuration: scenario range interval");
  if (s.theta < 0 || s.theta > kPi) throw ConfigError("invalid configuration: scenario theta outside [0, 180] deg");
  if (!(s.phi_max >= s.phi_min)) throw ConfigError("invalid configuration: scenario azimuth interval");
  c.grid.validate();
  if (c.acquisition.looks < 1) throw ConfigError("invalid configuration: looks must be >= 1");
  if (c.acquisition.slots_per_look < 0) throw ConfigError("invalid configuration: slots_per_look must be >= 0");
  if (c.acquisition.pilot_streams < 0 || c.acquisition.pilot_streams > c.system.n_rf)
    throw ConfigError("invalid configuration: pilot_streams must be in [0, n_rf]");
  if (c.acquisition.cycles < 0) throw ConfigError("invalid configuration: cycles must be >= 0");
  if (c.crb.max_iterations < 1 || c.factorize.max_rounds < 1)
    throw ConfigError("invalid configuration: iteration limits must be >= 1");
  if (c.harness.trials < 1) throw ConfigError("invalid configuration: trials must be >= 1");
  if (c.harness.p_max_dbm.empty()) throw ConfigError("invalid configuration: p_max_dbm list is empty");
}

Scenario generate_scenario(std::mt19937_64& rng, const SystemConfig& config, const ScenarioSettings& settings) {
  double lo = settings.r_min, hi = settings.r_max;
  if (settings.clip_to_fresnel) std::tie(lo, hi) = fresnel_clip(lo, hi, config);
  std::uniform_real_distribution<double> range(lo, hi), azimuth(settings.phi_min, settings.phi_max),
      phase(0.0, 2 * kPi);
  Scenario s;
  for (int k = 0; k < settings.n_targets; ++k) {
    const double r = range(rng);
    const double phi = azimuth(rng);
    s.targets.push_back({r, settings.theta, phi});
    s.reflection_coeffs.push_back(std::polar(1.0, phase(rng)));
  }
  for (int u = 0; u < settings.n_users; ++u) s.user_indices.push_back(u);
  return s;
}

std::uint64_t trial_seed(std::uint64_t master, int power_index, int trial_index) {
  return splitmix(splitmix(splitmix(master) ^ static_cast<std::uint64_t>(power_index)) ^
                  static_cast<std::uint64_t>(trial_index));
}

namespace {

// Everything a trial shares across modes: the scenario, its channels, the acquisition and the rng state after it.
struct TrialSetup {
  SystemConfig system;
  Scenario scenario;
  ChannelSet channels;
  LorentzianCodebook codebook;
  AcquisitionResult acquisition;
  std::mt19937_64 rng;
};

TrialSetup prepare_trial(const RunConfig& config, double p_max_dbm, std::uint64_t seed) {
  TrialSetup t;
  t.system = config.system;
  t.system.p_max = dbm_to_watts(p_max_dbm);
  t.rng.seed(seed);
  t.scenario = generate_scenario(t.rng, t.system, config.scenario);
  t.channels = synthesize_channels(t.scenario, t.system);
  t.codebook = LorentzianCodebook::make(t.system.codebook_bits);
  t.acquisition =
      acquire_targets(t.channels, t.scenario.n_targets(), t.system, config.grid, config.acquisition, t.codebook, t.rng);
  return t;
}

void finish_trial(const RunConfig& config, const TrialSetup& setup, IsacMode mode, TrialRecord& rec) {
  const SystemConfig& cfg = setup.system;
  const Scenario& scenario = setup.scenario;
  const ChannelSet& channels = setup.channels;
  const AcquisitionResult& acq = setup.acquisition;
  std::mt19937_64 rng = setup.rng;

  // Estimates are labelled by matching them to the true targets.
  const std::vector<int> match = associate(acq.estimates, scenario.targets);
  std::vector<SphericalPosition> zeta_hat;
  for (int u : scenario.user_indices) zeta_hat.push_back(acq.estimates[match[u]]);

  IsacOptions opts;
  opts.mode = mode;
  opts.crb = config.crb;
  opts.factorize = config.factorize;
  const IsacSolution sol = algorithm1(zeta_hat, channels, setup.codebook, cfg, opts);

  // Sensing block with the selected configuration; the known residual SI is removed digitally.
  const SymbolBlock symbols = make_symbols(scenario.n_users(), cfg.t_slots, rng);
  CMat y = synthesize_received(sol.bf, channels, symbols, rng, cfg);
  CMat si = effective_si(sol.bf, channels);
  if (sol.bf.d.size() != 0) si += sol.bf.d;
  y -= si * sol.bf.v * symbols.s;
  const RefinedEstimate final_est =
      refine_from_block(acq.estimates, sol.bf, channels, y, symbols, cfg, config.grid, config.acquisition.refine_options);

  rec.rmse_m = rmse(final_est.positions, scenario.targets, scenario.user_indices);
  const std::vector<SphericalPosition> users = scenario.user_positions();
  const auto bound = position_error_bound(
      fim_for_targets(sol.bf, users, channels.p_tx, channels.p_rx, cfg, scenario.user_coeffs()), users);
  rec.peb_m = bound ? *bound : std::numeric_limits<double>::infinity();
  rec.peb_est_m = sol.peb;
  rec.sum_rate_true = sum_rate(sol.bf.w_tx, sol.bf.v, channels.h_dl, channels.p_tx, cfg);
  rec.sum_rate_est = sol.sum_rate;
  rec.residual_si_max = sol.residual_si.empty() ? 0.0 : *std::max_element(sol.residual_si.begin(), sol.residual_si.end());
  rec.feasible = sol.feasible;
}

void mark_failed(TrialRecord& rec, const std::exception& e) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.failed = true;
  rec.error = e.what();
  rec.rmse_m = rec.peb_m = rec.peb_est_m = rec.sum_rate_true = rec.sum_rate_est = rec.residual_si_max = nan;
  rec.feasible = false;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::string make_run_id(const RunConfig& c, const std::string& mode) {
  char id[17];
  std::snprintf(id, sizeof id, "%016llx",
                static_cast<unsigned long long>(fnv1a(c.source_text) ^ splitmix(c.system.rng_seed) ^ fnv1a(mode)));
  return std::string(id).substr(0, 12);
}

}  // namespace

TrialRecord run_trial(const RunConfig& config, double p_max_dbm, std::uint64_t seed) {
  return run_trial_modes(config, p_max_dbm, seed, {config.harness.mode}).front();
}

std::vector<TrialRecord> run_trial_modes(const RunConfig& config, double p_max_dbm, std::uint64_t seed,
                                         const std::vector<IsacMode>& modes) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<TrialRecord> out(modes.size());
  for (auto& rec : out) {
    rec.seed = seed;
    rec.p_max_dbm = p_max_dbm;
  }
  std::optional<TrialSetup> setup;
  double shared_ms = 0.0;
  try {
    setup = prepare_trial(config, p_max_dbm, seed);
  } catch (const std::exception& e) {
    for (auto& rec : out) mark_failed(rec, e);
  }
  shared_ms = elapsed_ms(start);
  for (size_t m = 0; m < modes.size() && setup; ++m) {
    const auto mode_start = std::chrono::steady_clock::now();
    try {
      finish_trial(config, *setup, modes[m], out[m]);
    } catch (const std::exception& e) {
      mark_failed(out[m], e);
    }
    if (config.harness.record_timing) out[m].wall_ms = shared_ms + elapsed_ms(mode_start);
  }
  if (!setup && config.harness.record_timing)
    for (auto& rec : out) rec.wall_ms = shared_ms;
  return out;
}

RunSummary summarize(const std::vector<TrialRecord>& records, const std::vector<double>& p_max_dbm) {
  RunSummary summary;
  for (size_t p = 0; p < p_max_dbm.size(); ++p) {
    PowerSummary ps;
    ps.p_max_dbm = p_max_dbm[p];
    std::vector<double> rmse_v, peb_v, ratio, rt, re;
    int feasible = 0;
    for (const auto& r : records) {
      if (r.power_index != static_cast<int>(p)) continue;
      ++ps.trials;
      if (r.failed) {
        ++ps.failed;
        continue;
      }
      ++ps.completed;
      rmse_v.push_back(r.rmse_m);
      if (std::isfinite(r.peb_m)) {
        peb_v.push_back(r.peb_m);
        ratio.push_back(r.rmse_m / r.peb_m);
      }
      rt.push_back(r.sum_rate_true);
      re.push_back(r.sum_rate_est);
      feasible += r.feasible ? 1 : 0;
    }
    ps.mean_rmse = mean(rmse_v);
    ps.median_rmse = median(rmse_v);
    ps.mean_peb = mean(peb_v);
    ps.median_peb = median(peb_v);
    ps.median_ratio = median(ratio);
    ps.mean_rate_true = mean(rt);
    ps.mean_rate_est = mean(re);
    ps.feasible_fraction = ps.completed ? static_cast<double>(feasible) / ps.completed : 0.0;
    summary.powers.push_back(ps);
  }
  return summary;
}

std::vector<RunResult> run_monte_carlo_modes(const RunConfig& config, const std::vector<IsacMode>& modes) {
  const RunConfig c = config.resolved();
  c.validate();
  std::vector<RunResult> results(modes.size());
  const auto& powers = c.harness.p_max_dbm;
  for (size_t p = 0; p < powers.size(); ++p)
    for (int t = 0; t < c.harness.trials; ++t) {
      std::vector<TrialRecord> recs =
          run_trial_modes(c, powers[p], trial_seed(c.system.rng_seed, static_cast<int>(p), t), modes);
      for (size_t m = 0; m < modes.size(); ++m) {
        recs[m].power_index = static_cast<int>(p);
        recs[m].trial_index = t;
        results[m].records.push_back(std::move(recs[m]));
      }
    }
  for (size_t m = 0; m < modes.size(); ++m) {
    auto& r = results[m];
    std::sort(r.records.begin(), r.records.end(), [](const TrialRecord& a, const TrialRecord& b) {
      return std::tie(a.power_index, a.trial_index) < std::tie(b.power_index, b.trial_index);
    });
    r.summary = summarize(r.records, powers);
    r.summary.mode = mode_name(modes[m]);
    r.summary.master_seed = c.system.rng_seed;
    r.summary.run_id = make_run_id(c, r.summary.mode);
  }
  return results;
}

RunResult run_monte_carlo(const RunConfig& config) {
  return std::move(run_monte_carlo_modes(config, {config.harness.mode}).front());
}

void write_records_csv(const std::vector<TrialRecord>& records, std::ostream& out) {
  out << "seed,p_max_dbm,rmse_m,peb_m,sum_rate_bpshz_true,sum_rate_bpshz_est,residual_si_max,feasible,wall_ms\n";
  for (const auto& r : records)
    out << r.seed << ',' << fmt(r.p_max_dbm) << ',' << fmt(r.rmse_m) << ',' << fmt(r.peb_m) << ','
        << fmt(r.sum_rate_true) << ',' << fmt(r.sum_rate_est) << ',' << fmt(r.residual_si_max) << ','
        << (r.feasible ? 1 : 0) << ',' << fmt(r.wall_ms) << '\n';
}

std::vector<TrialRecord> read_records_csv(std::istream& in) {
  std::vector<TrialRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error("records.csv: expected 9 columns, got " + std::to_string(f.size()));
    TrialRecord r;
    r.seed = std::stoull(f[0]);
    r.p_max_dbm = std::strtod(f[1].c_str(), nullptr);
    r.rmse_m = std::strtod(f[2].c_str(), nullptr);
    r.peb_m = std::strtod(f[3].c_str(), nullptr);
    r.sum_rate_true = std::strtod(f[4].c_str(), nullptr);
    r.sum_rate_est = std::strtod(f[5].c_str(), nullptr);
    r.residual_si_max = std::strtod(f[6].c_str(), nullptr);
    r.feasible = f[7] == "1";
    r.wall_ms = std::strtod(f[8].c_str(), nullptr);
    r.failed = std::isnan(r.rmse_m);
    out.push_back(r);
  }
  return out;
}

std::string summary_json(const RunResult& result, const RunConfig& config) {
  using nlohmann::ordered_json;
  const RunConfig c = config.resolved();
  const SystemConfig& s = c.system;
  ordered_json j;
  j["run_id"] = result.summary.run_id;
  j["mode"] = result.summary.mode;
  j["master_seed"] = result.summary.master_seed;
  j["trials_per_power"] = c.harness.trials;
  ordered_json powers = ordered_json::array();
  for (const auto& p : result.summary.powers) {
    powers.push_back({{"p_max_dbm", p.p_max_dbm},
                      {"trials", p.trials},
                      {"completed", p.completed},
                      {"failed", p.failed},
                      {"mean_rmse_m", num(p.mean_rmse)},
                      {"median_rmse_m", num(p.median_rmse)},
                      {"mean_peb_m", num(p.mean_peb)},
                      {"median_peb_m", num(p.median_peb)},
                      {"median_rmse_over_peb", num(p.median_ratio)},
                      {"mean_sum_rate_bpshz_true", num(p.mean_rate_true)},
                      {"mean_sum_rate_bpshz_est", num(p.mean_rate_est)},
                      {"feasible_fraction", p.feasible_fraction}});
  }
  j["powers"] = powers;
  ordered_json cfg;
  cfg["system"] = {{"carrier_frequency_hz", s.carrier_frequency},
                   {"bandwidth_hz", s.bandwidth},
                   {"n_rf", s.n_rf},
                   {"n_e", s.n_e},
                   {"d_e_m", s.d_e},
                   {"d_rf_m", s.d_rf},
                   {"d_p_m", s.d_p},
                   {"t_slots", s.t_slots},
                   {"noise_power_w", s.noise_power},
                   {"codebook_bits", s.codebook_bits},
                   {"absorption_coeff", s.absorption_coeff},
                   {"waveguide_alpha", s.waveguide_alpha},
                   {"waveguide_beta", s.waveguide_beta},
                   {"gamma_si", s.gamma_si},
                   {"gamma_s_m", s.gamma_s},
                   {"si_gain", s.si_gain},
                   {"rng_seed", s.rng_seed},
                   {"grid_resolution_xi_rho", s.grid_resolution_xi_rho}};
  cfg["scenario"] = {{"n_targets", c.scenario.n_targets},
                     {"n_users", c.scenario.n_users},
                     {"theta_deg", c.scenario.theta * 180 / kPi},
                     {"phi_min_deg", c.scenario.phi_min * 180 / kPi},
                     {"phi_max_deg", c.scenario.phi_max * 180 / kPi},
                     {"r_min_m", c.scenario.r_min},
                     {"r_max_m", c.scenario.r_max},
                     {"clip_to_fresnel", c.scenario.clip_to_fresnel}};
  cfg["estimation"] = {{"r_min_m", c.grid.r_min},
                       {"r_max_m", c.grid.r_max},
                       {"n_r", c.grid.n_r},
                       {"theta_min_deg", c.grid.theta_min * 180 / kPi},
                       {"theta_max_deg", c.grid.theta_max * 180 / kPi},
                       {"n_theta", c.grid.n_theta},
                       {"phi_min_deg", c.grid.phi_min * 180 / kPi},
                       {"phi_max_deg", c.grid.phi_max * 180 / kPi},
                       {"n_phi", c.grid.n_phi},
                       {"sweeps", c.grid.sweeps},
                       {"looks", c.acquisition.looks},
                       {"slots_per_look", c.acquisition.slots_per_look},
                       {"pilot_streams", c.acquisition.pilot_streams},
                       {"statistic", c.acquisition.statistic == AcquisitionStatistic::Matched ? "matched" : "covariance"},
                       {"cycles", c.acquisition.cycles},
                       {"refine", c.acquisition.refine},
                       {"refine_iterations", c.acquisition.refine_options.max_iterations}};
  cfg["optimization"] = {{"crb_tolerance", c.crb.tolerance},
                         {"crb_max_iterations", c.crb.max_iterations},
                         {"factorize_tolerance", c.factorize.tolerance},
                         {"factorize_max_rounds", c.factorize.max_rounds}};
  cfg["harness"] = {{"trials", c.harness.trials},
                    {"p_max_dbm", c.harness.p_max_dbm},
                    {"mode", mode_name(c.harness.mode)},
                    {"record_timing", c.harness.record_timing}};
  cfg["source"] = c.source_text;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

void emit_outputs(const RunResult& result, const RunConfig& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  std::ostringstream records;
  write_records_csv(result.records, records);
  write_file(dir / "records.csv", records.str());
  write_file(dir / "summary.json", summary_json(result, config));

  std::ostringstream pe, rate, feas;
  pe << "p_max_dbm,mean_rmse_m,median_rmse_m,mean_peb_m,median_peb_m\n";
  rate << "p_max_dbm,mean_sum_rate_bpshz_true,mean_sum_rate_bpshz_est\n";
  feas << "p_max_dbm,feasible_fraction,completed,failed\n";
  for (const auto& p : result.summary.powers) {
    pe << fmt(p.p_max_dbm) << ',' << fmt(p.mean_rmse) << ',' << fmt(p.median_rmse) << ',' << fmt(p.mean_peb) << ','
       << fmt(p.median_peb) << '\n';
    rate << fmt(p.p_max_dbm) << ',' << fmt(p.mean_rate_true) << ',' << fmt(p.mean_rate_est) << '\n';
    feas << fmt(p.p_max_dbm) << ',' << fmt(p.feasible_fraction) << ',' << p.completed << ',' << p.failed << '\n';
  }
  write_file(dir / "plotdata_rmse_peb.csv", pe.str());
  write_file(dir / "plotdata_sum_rate.csv", rate.str());
  write_file(dir / "plotdata_feasibility.csv", feas.str());
}

}  // namespace xlisac
