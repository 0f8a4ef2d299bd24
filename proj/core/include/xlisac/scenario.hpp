#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "xlisac/types.hpp"

namespace xlisac {

struct SystemConfig {
  double carrier_frequency = 120e9;  // Hz
  double bandwidth = 150e3;          // Hz
  int n_rf = 4;
  int n_e = 16;
  double d_e = 0.0;   // m, 0 selects lambda/2
  double d_rf = 0.0;  // m, 0 selects lambda/2
  double d_p = 0.1;   // m
  double p_max = 1.0;  // W
  int t_slots = 200;
  double noise_power = 0.0;  // W, 0 selects the thermal floor over the bandwidth
  int codebook_bits = 10;
  double absorption_coeff = 0.0033;  // 1/m
  double waveguide_alpha = 0.0;      // Np/m
  double waveguide_beta = -1.0;      // rad/m, negative selects 2 pi / lambda
  double gamma_si = 1e-12;
  double gamma_s = 1.0;
  double si_gain = 1.0;
  std::uint64_t rng_seed = 1;
  double grid_resolution_xi_rho = 0.1;

  int n() const { return n_rf * n_e; }

  // Fills the auto-valued fields (spacings, noise floor, waveguide wavenumber).
  SystemConfig resolved() const;

  // Throws ConfigError naming the first violated invariant.
  void validate() const;
};

double thermal_noise_watts(double bandwidth_hz);

struct SphericalPosition {
  double r = 1.0;
  double theta = 0.0;
  double phi = 0.0;
};

Eigen::Vector3d to_cartesian(const SphericalPosition& p);

struct Scenario {
  std::vector<SphericalPosition> targets;
  std::vector<cplx> reflection_coeffs;
  std::vector<int> user_indices;

  int n_targets() const { return static_cast<int>(targets.size()); }
  int n_users() const { return static_cast<int>(user_indices.size()); }
  std::vector<SphericalPosition> user_positions() const;
  std::vector<cplx> user_coeffs() const;

  void validate() const;
};

double wavelength(const SystemConfig& config);

// Coordinates of a panel element. Microstrip i and element n are zero-based.
// The TX panel sits at x = -(d_P/2 + i d_RF), the RX panel mirrors it at +x.
Eigen::Vector3d element_position(int i, int n, Side side, const SystemConfig& config);

// Distance between a target and element (i, n), zero-based indices.
double element_distance(const SphericalPosition& pos, int i, int n, const SystemConfig& config,
                         Side side = Side::Tx);

double fraunhofer_distance(double aperture, const SystemConfig& config);

// Largest element-to-element span over both panels.
double array_aperture(const SystemConfig& config);

// Range interval [r_min, r_max] intersected with the radiating near field of the array.
std::pair<double, double> fresnel_clip(double r_min, double r_max, const SystemConfig& config);

}  // namespace xlisac
