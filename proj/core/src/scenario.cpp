#include "xlisac/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace xlisac {

double thermal_noise_watts(double bandwidth_hz) {
  return dbm_to_watts(-174.0 + 10.0 * std::log10(bandwidth_hz));
}

SystemConfig SystemConfig::resolved() const {
  SystemConfig c = *this;
  if (c.carrier_frequency <= 0) return c;
  const double lambda = kSpeedOfLight / c.carrier_frequency;
  if (c.d_e == 0.0) c.d_e = lambda / 2;
  if (c.d_rf == 0.0) c.d_rf = lambda / 2;
  if (c.noise_power == 0.0 && c.bandwidth > 0) c.noise_power = thermal_noise_watts(c.bandwidth);
  if (c.waveguide_beta < 0) c.waveguide_beta = 2 * kPi / lambda;
  return c;
}

void SystemConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid configuration: " + what);
  };
  require(carrier_frequency > 0, "carrier_frequency must be > 0");
  require(bandwidth > 0, "bandwidth must be > 0");
  require(n_rf >= 1, "n_rf must be >= 1");
  require(n_e >= 1, "n_e must be >= 1");
  require(d_e > 0, "d_e must be > 0");
  require(d_rf > 0, "d_rf must be > 0");
  require(d_p > 0, "d_p must be > 0");
  require(p_max > 0, "p_max must be > 0");
  require(noise_power > 0, "noise_power must be > 0");
  require(t_slots >= 1, "t_slots must be >= 1");
  require(codebook_bits >= 1 && codebook_bits <= 16, "codebook_bits must be in [1, 16]");
  require(absorption_coeff >= 0, "absorption_coeff must be >= 0");
  require(waveguide_alpha >= 0, "waveguide_alpha must be >= 0");
  require(gamma_si >= 0, "gamma_si must be >= 0");
  require(gamma_s > 0, "gamma_s must be > 0");
  require(si_gain >= 0, "si_gain must be >= 0");
  require(grid_resolution_xi_rho > 0 && grid_resolution_xi_rho <= 1,
          "grid_resolution_xi_rho must be in (0, 1]");
}

Eigen::Vector3d to_cartesian(const SphericalPosition& p) {
  return {p.r * std::sin(p.theta) * std::cos(p.phi), p.r * std::sin(p.theta) * std::sin(p.phi),
          p.r * std::cos(p.theta)};
}

std::vector<SphericalPosition> Scenario::user_positions() const {
  std::vector<SphericalPosition> out;
  for (int u : user_indices) out.push_back(targets.at(u));
  return out;
}

std::vector<cplx> Scenario::user_coeffs() const {
  std::vector<cplx> out;
  for (int u : user_indices) out.push_back(reflection_coeffs.at(u));
  return out;
}

void Scenario::validate() const {
  if (targets.empty()) throw DomainError("scenario needs at least one target");
  if (reflection_coeffs.size() != targets.size())
    throw DomainError("scenario: one reflection coefficient per target required");
  for (const auto& b : reflection_coeffs)
    if (std::abs(std::abs(b) - 1.0) > 1e-9) throw DomainError("scenario: |beta| must be 1");
  for (const auto& t : targets)
    if (!(t.r > 0) || t.theta < 0 || t.theta > kPi) throw DomainError("scenario: invalid target position");
  if (user_indices.empty()) throw DomainError("scenario: at least one user required");
  if (user_indices.size() > targets.size()) throw DomainError("scenario: more users than targets");
  std::set<int> seen;
  for (int u : user_indices) {
    if (u < 0 || u >= n_targets()) throw DomainError("scenario: user index out of range");
    if (!seen.insert(u).second) throw DomainError("scenario: duplicate user index");
  }
}

double wavelength(const SystemConfig& config) { return kSpeedOfLight / config.carrier_frequency; }

Eigen::Vector3d element_position(int i, int n, Side side, const SystemConfig& config) {
  const double offset = config.d_p / 2 + i * config.d_rf;
  const double x = side == Side::Tx ? -offset : offset;
  return {x, 0.0, n * config.d_e};
}

double element_distance(const SphericalPosition& pos, int i, int n, const SystemConfig& config, Side side) {
  const double st = std::sin(pos.theta);
  const double offset = config.d_p / 2 + i * config.d_rf;
  const double dx = pos.r * st * std::cos(pos.phi) + (side == Side::Tx ? offset : -offset);
  const double dy = pos.r * st * std::sin(pos.phi);
  const double dz = pos.r * std::cos(pos.theta) - n * config.d_e;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double fraunhofer_distance(double aperture, const SystemConfig& config) {
  return 2.0 * aperture * aperture / wavelength(config);
}

double array_aperture(const SystemConfig& config) {
  const double width = config.d_p + 2.0 * (config.n_rf - 1) * config.d_rf;
  const double height = (config.n_e - 1) * config.d_e;
  return std::hypot(width, height);
}

std::pair<double, double> fresnel_clip(double r_min, double r_max, const SystemConfig& config) {
  const double d = array_aperture(config);
  const double inner = 0.62 * std::sqrt(d * d * d / wavelength(config));
  const double outer = fraunhofer_distance(d, config);
  double lo = std::max(r_min, inner);
  double hi = std::min(r_max, outer);
  if (hi <= lo) hi = lo;
  return {lo, hi};
}

}  // namespace xlisac
