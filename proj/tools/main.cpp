#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xlisac/config_io.hpp"
#include "xlisac/fim.hpp"
#include "xlisac/harness.hpp"
#include "xlisac/isac.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

double degrees(const nlohmann::json& j, const char* key) { return j.at(key).get<double>() * xlisac::kPi / 180.0; }

xlisac::Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw xlisac::ConfigError("cannot open scenario file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw xlisac::ConfigError("malformed scenario file: " + std::string(e.what()));
  }
  xlisac::Scenario s;
  try {
    for (const auto& t : j.at("targets")) {
      s.targets.push_back({t.at("r").get<double>(), degrees(t, "theta_deg"), degrees(t, "phi_deg")});
      const double phase = t.contains("beta_phase_deg") ? degrees(t, "beta_phase_deg") : 0.0;
      s.reflection_coeffs.push_back(std::polar(1.0, phase));
    }
    s.user_indices = j.at("users").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw xlisac::ConfigError("scenario file: " + std::string(e.what()));
  }
  try {
    s.validate();
  } catch (const xlisac::DomainError& e) {
    throw xlisac::ConfigError(e.what());
  }
  return s;
}

int cmd_validate(const std::string& config_path) {
  const xlisac::RunConfig cfg = xlisac::load_run_config(config_path);
  cfg.validate();
  const xlisac::RunConfig r = cfg.resolved();
  std::cout << "ok: N_RF=" << r.system.n_rf << " N_E=" << r.system.n_e << " K=" << r.scenario.n_targets
            << " U=" << r.scenario.n_users << " T=" << r.system.t_slots << " noise=" << r.system.noise_power
            << " W, search range [" << r.grid.r_min << ", " << r.grid.r_max << "] m\n";
  return kExitOk;
}

int cmd_peb(const std::string& config_path, const std::string& scenario_path) {
  const xlisac::RunConfig cfg = xlisac::load_run_config(config_path);
  cfg.validate();
  const xlisac::SystemConfig sys = cfg.resolved().system;
  const xlisac::Scenario scenario = load_scenario(scenario_path);
  if (scenario.n_users() > sys.n_rf) throw xlisac::ConfigError("scenario has more users than RF chains");

  const xlisac::ChannelSet channels = xlisac::synthesize_channels(scenario, sys);
  const auto cb = xlisac::LorentzianCodebook::make(sys.codebook_bits);
  xlisac::IsacOptions opts;
  opts.mode = cfg.harness.mode;
  opts.crb = cfg.crb;
  opts.factorize = cfg.factorize;
  const auto users = scenario.user_positions();
  const xlisac::IsacSolution sol = xlisac::algorithm1(users, channels, cb, sys, opts);
  const xlisac::Fim fim = xlisac::fim_for_targets(sol.bf, users, channels.p_tx, channels.p_rx, sys, scenario.user_coeffs());
  const xlisac::PebResult p = xlisac::peb(fim);
  const auto pos = xlisac::position_error_bound(fim, users);

  nlohmann::ordered_json out;
  out["identifiable"] = p.identifiable;
  out["peb_full"] = p.identifiable ? nlohmann::ordered_json(p.peb_full) : nlohmann::ordered_json(nullptr);
  out["peb_diag"] = p.peb_diag;
  out["trace_bound"] = p.trace_bound;
  out["position_bound_m"] = pos ? nlohmann::ordered_json(*pos) : nlohmann::ordered_json(nullptr);
  out["xi"] = sol.bf.xi;
  out["rho"] = sol.bf.rho;
  out["sum_rate_bpshz"] = sol.sum_rate;
  out["feasible"] = sol.feasible;
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_run(const std::string& config_path, int trials, const std::string& pmax, long long seed,
            const std::string& out_dir, const std::string& mode) {
  xlisac::RunConfig cfg = xlisac::load_run_config(config_path);
  if (trials > 0) cfg.harness.trials = trials;
  if (!pmax.empty()) cfg.harness.p_max_dbm = xlisac::parse_list(pmax);
  if (seed >= 0) cfg.system.rng_seed = static_cast<std::uint64_t>(seed);
  if (!mode.empty()) cfg.harness.mode = xlisac::parse_mode(mode);
  cfg.validate();

  const xlisac::RunResult result = xlisac::run_monte_carlo(cfg);
  xlisac::emit_outputs(result, cfg, out_dir);

  int feasible = 0, completed = 0;
  for (const auto& r : result.records) {
    completed += r.failed ? 0 : 1;
    feasible += r.feasible ? 1 : 0;
  }
  std::cout << "run " << result.summary.run_id << " (" << result.summary.mode << "), " << result.records.size()
            << " trials -> " << out_dir << "\n";
  for (const auto& p : result.summary.powers)
    std::cout << "  " << p.p_max_dbm << " dBm: rmse " << p.mean_rmse << " m, peb " << p.mean_peb << " m, rate "
              << p.mean_rate_true << " bps/Hz, feasible " << p.feasible_fraction << ", failed " << p.failed << "\n";
  if (completed > 0 && feasible == 0) {
    std::cerr << "no feasible configuration in any completed trial\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-duplex XL-MIMO ISAC simulator"};
  app.require_subcommand(1);

  std::string config, scenario, pmax, out_dir = "out", mode;
  int trials = 0;
  long long seed = -1;

  auto* run = app.add_subcommand("run", "Monte Carlo power sweep");
  run->add_option("--config", config, "INI configuration file")->required();
  run->add_option("--trials", trials, "trials per power point");
  run->add_option("--pmax-dbm", pmax, "comma separated transmit powers in dBm");
  run->add_option("--seed", seed, "master seed");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--mode", mode, "isac, sensing-only or comm-only");

  auto* validate = app.add_subcommand("validate", "check a configuration file");
  validate->add_option("--config", config, "INI configuration file")->required();

  auto* peb = app.add_subcommand("peb", "position error bound for one scenario");
  peb->add_option("--config", config, "INI configuration file")->required();
  peb->add_option("--scenario", scenario, "JSON scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, trials, pmax, seed, out_dir, mode);
    if (*validate) return cmd_validate(config);
    if (*peb) return cmd_peb(config, scenario);
  } catch (const xlisac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
