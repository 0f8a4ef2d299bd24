#include "xlisac/config_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace xlisac {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

double to_double(const std::string& s, const std::string& context) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse number in '" + context + "'");
  }
  if (used != s.size()) throw ConfigError("trailing characters in '" + context + "'");
  return v;
}

int to_int(const std::string& s, const std::string& context) {
  const double v = to_double(trim(s), context);
  if (v != std::floor(v)) throw ConfigError("expected an integer in '" + context + "'");
  return static_cast<int>(v);
}

bool to_bool(const std::string& s) {
  const std::string v = lower(trim(s));
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError("expected a boolean, got '" + s + "'");
}

}  // namespace

double parse_quantity(const std::string& text, Unit unit, double lambda) {
  const std::string t = trim(text);
  size_t split = 0;
  while (split < t.size() && (std::isdigit(static_cast<unsigned char>(t[split])) || t[split] == '.' ||
                              t[split] == '-' || t[split] == '+' ||
                              ((t[split] == 'e' || t[split] == 'E') && split > 0 &&
                               split + 1 < t.size() && (std::isdigit(static_cast<unsigned char>(t[split + 1])) ||
                                                        t[split + 1] == '-' || t[split + 1] == '+'))))
    ++split;
  const double value = to_double(t.substr(0, split), t);
  const std::string suffix = lower(trim(t.substr(split)));

  auto fail = [&]() -> double { throw ConfigError("unsupported unit '" + suffix + "' in '" + t + "'"); };
  switch (unit) {
    case Unit::None:
      return suffix.empty() ? value : fail();
    case Unit::Frequency:
      if (suffix.empty() || suffix == "hz") return value;
      if (suffix == "khz") return value * 1e3;
      if (suffix == "mhz") return value * 1e6;
      if (suffix == "ghz") return value * 1e9;
      if (suffix == "thz") return value * 1e12;
      return fail();
    case Unit::Power:
    case Unit::NoisePower:
      if (suffix.empty() || suffix == "w") return value;
      if (suffix == "mw") return value * 1e-3;
      if (suffix == "dbm") return dbm_to_watts(value);
      if (suffix == "dbw") return std::pow(10.0, value / 10.0);
      return fail();
    case Unit::Angle:
      if (suffix.empty() || suffix == "deg") return value * kPi / 180.0;
      if (suffix == "rad") return value;
      return fail();
    case Unit::Length:
      if (suffix.empty() || suffix == "m") return value;
      if (suffix == "cm") return value * 1e-2;
      if (suffix == "mm") return value * 1e-3;
      if (suffix == "lambda") {
        if (!(lambda > 0)) throw ConfigError("'lambda' unit needs a carrier frequency");
        return value * lambda;
      }
      return fail();
  }
  return value;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (lower(item.substr(std::max<size_t>(item.size(), 3) - 3)) == "dbm") item = trim(item.substr(0, item.size() - 3));
    out.push_back(to_double(item, text));
  }
  return out;
}

RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }

  RunConfig cfg;
  cfg.source_text = text;
  SystemConfig& s = cfg.system;

  double lambda = kSpeedOfLight / s.carrier_frequency;
  if (auto sys = tree.get_child_optional("system"))
    if (auto f = sys->get_optional<std::string>("carrier_frequency")) {
      s.carrier_frequency = parse_quantity(*f, Unit::Frequency);
      if (!(s.carrier_frequency > 0)) throw ConfigError("invalid configuration: carrier_frequency must be > 0");
      lambda = kSpeedOfLight / s.carrier_frequency;
    }

  using Setter = std::function<void(const std::string&)>;
  auto auto_or = [](const std::string& v, double auto_value, const std::function<double()>& parse) {
    return lower(trim(v)) == "auto" ? auto_value : parse();
  };

  const std::map<std::string, std::map<std::string, Setter>> table{
      {"system",
       {
           {"carrier_frequency", [](const std::string&) {}},
           {"bandwidth", [&](const std::string& v) { s.bandwidth = parse_quantity(v, Unit::Frequency); }},
           {"n_rf", [&](const std::string& v) { s.n_rf = to_int(v, "n_rf"); }},
           {"n_e", [&](const std::string& v) { s.n_e = to_int(v, "n_e"); }},
           {"d_e", [&](const std::string& v) { s.d_e = parse_quantity(v, Unit::Length, lambda); }},
           {"d_rf", [&](const std::string& v) { s.d_rf = parse_quantity(v, Unit::Length, lambda); }},
           {"d_p", [&](const std::string& v) { s.d_p = parse_quantity(v, Unit::Length, lambda); }},
           {"p_max", [&](const std::string& v) { s.p_max = parse_quantity(v, Unit::Power); }},
           {"t_slots", [&](const std::string& v) { s.t_slots = to_int(v, "t_slots"); }},
           {"noise_power",
            [&](const std::string& v) {
              s.noise_power = auto_or(v, 0.0, [&] { return parse_quantity(v, Unit::NoisePower); });
            }},
           {"codebook_bits", [&](const std::string& v) { s.codebook_bits = to_int(v, "codebook_bits"); }},
           {"absorption_coeff", [&](const std::string& v) { s.absorption_coeff = parse_quantity(v, Unit::None); }},
           {"waveguide_alpha", [&](const std::string& v) { s.waveguide_alpha = parse_quantity(v, Unit::None); }},
           {"waveguide_beta",
            [&](const std::string& v) {
              s.waveguide_beta = auto_or(v, -1.0, [&] { return parse_quantity(v, Unit::None); });
            }},
           {"gamma_si", [&](const std::string& v) { s.gamma_si = parse_quantity(v, Unit::Power); }},
           {"gamma_s", [&](const std::string& v) { s.gamma_s = parse_quantity(v, Unit::Length, lambda); }},
           {"si_gain", [&](const std::string& v) { s.si_gain = parse_quantity(v, Unit::None); }},
           {"rng_seed",
            [&](const std::string& v) {
              try {
                s.rng_seed = std::stoull(trim(v));
              } catch (const std::exception&) {
                throw ConfigError("rng_seed must be a non-negative integer");
              }
            }},
           {"grid_resolution_xi_rho",
            [&](const std::string& v) { s.grid_resolution_xi_rho = parse_quantity(v, Unit::None); }},
       }},
      {"scenario",
       {
           {"n_targets", [&](const std::string& v) { cfg.scenario.n_targets = to_int(v, "n_targets"); }},
           {"n_users", [&](const std::string& v) { cfg.scenario.n_users = to_int(v, "n_users"); }},
           {"theta", [&](const std::string& v) { cfg.scenario.theta = parse_quantity(v, Unit::Angle); }},
           {"phi_min", [&](const std::string& v) { cfg.scenario.phi_min = parse_quantity(v, Unit::Angle); }},
           {"phi_max", [&](const std::string& v) { cfg.scenario.phi_max = parse_quantity(v, Unit::Angle); }},
           {"r_min", [&](const std::string& v) { cfg.scenario.r_min = parse_quantity(v, Unit::Length, lambda); }},
           {"r_max", [&](const std::string& v) { cfg.scenario.r_max = parse_quantity(v, Unit::Length, lambda); }},
           {"clip_to_fresnel", [&](const std::string& v) { cfg.scenario.clip_to_fresnel = to_bool(v); }},
       }},
      {"estimation",
       {
           {"n_r", [&](const std::string& v) { cfg.grid.n_r = to_int(v, "n_r"); }},
           {"n_theta", [&](const std::string& v) { cfg.grid.n_theta = to_int(v, "n_theta"); }},
           {"n_phi", [&](const std::string& v) { cfg.grid.n_phi = to_int(v, "n_phi"); }},
           {"sweeps", [&](const std::string& v) { cfg.grid.sweeps = to_int(v, "sweeps"); }},
           {"r_min", [&](const std::string& v) { cfg.grid.r_min = parse_quantity(v, Unit::Length, lambda); }},
           {"r_max", [&](const std::string& v) { cfg.grid.r_max = parse_quantity(v, Unit::Length, lambda); }},
           {"theta_min", [&](const std::string& v) { cfg.grid.theta_min = parse_quantity(v, Unit::Angle); }},
           {"theta_max", [&](const std::string& v) { cfg.grid.theta_max = parse_quantity(v, Unit::Angle); }},
           {"phi_min", [&](const std::string& v) { cfg.grid.phi_min = parse_quantity(v, Unit::Angle); }},
           {"phi_max", [&](const std::string& v) { cfg.grid.phi_max = parse_quantity(v, Unit::Angle); }},
           {"looks", [&](const std::string& v) { cfg.acquisition.looks = to_int(v, "looks"); }},
           {"slots_per_look",
            [&](const std::string& v) { cfg.acquisition.slots_per_look = to_int(v, "slots_per_look"); }},
           {"refine", [&](const std::string& v) { cfg.acquisition.refine = to_bool(v); }},
           {"cycles", [&](const std::string& v) { cfg.acquisition.cycles = to_int(v, "cycles"); }},
           {"pilot_streams",
            [&](const std::string& v) { cfg.acquisition.pilot_streams = to_int(v, "pilot_streams"); }},
           {"statistic",
            [&](const std::string& v) {
              if (v == "matched")
                cfg.acquisition.statistic = AcquisitionStatistic::Matched;
              else if (v == "covariance")
                cfg.acquisition.statistic = AcquisitionStatistic::Covariance;
              else
                throw ConfigError("invalid configuration: statistic must be matched or covariance, got '" + v + "'");
            }},
           {"refine_iterations",
            [&](const std::string& v) {
              cfg.acquisition.refine_options.max_iterations = to_int(v, "refine_iterations");
            }},
       }},
      {"optimization",
       {
           {"crb_tolerance", [&](const std::string& v) { cfg.crb.tolerance = parse_quantity(v, Unit::None); }},
           {"crb_max_iterations",
            [&](const std::string& v) { cfg.crb.max_iterations = to_int(v, "crb_max_iterations"); }},
           {"factorize_tolerance",
            [&](const std::string& v) { cfg.factorize.tolerance = parse_quantity(v, Unit::None); }},
           {"factorize_max_rounds",
            [&](const std::string& v) { cfg.factorize.max_rounds = to_int(v, "factorize_max_rounds"); }},
       }},
      {"harness",
       {
           {"trials", [&](const std::string& v) { cfg.harness.trials = to_int(v, "trials"); }},
           {"p_max_dbm", [&](const std::string& v) { cfg.harness.p_max_dbm = parse_list(v); }},
           {"mode", [&](const std::string& v) { cfg.harness.mode = parse_mode(trim(v)); }},
           {"record_timing", [&](const std::string& v) { cfg.harness.record_timing = to_bool(v); }},
       }},
  };

  // Grid range defaults to the scenario range unless set explicitly.
  cfg.grid.r_min = 0.0;
  cfg.grid.r_max = 0.0;

  for (const auto& [section, body] : tree) {
    const auto sec = table.find(section);
    if (sec == table.end()) {
      if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside of a section");
      throw ConfigError("unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      const auto it = sec->second.find(key);
      if (it == sec->second.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      try {
        it->second(node.data());
      } catch (const ConfigError& e) {
        throw ConfigError("[" + section + "] " + key + ": " + e.what());
      }
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace xlisac
