#pragma once

#include <optional>
#include <vector>

#include "xlisac/bf_configuration.hpp"
#include "xlisac/channel.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

struct Fim {
  RMat matrix;  // ordering (r_1, theta_1, phi_1, ..., r_U, theta_U, phi_U)
  int n_users = 0;
};

struct PebResult {
  bool identifiable = true;
  double peb_full = 0.0;
  double peb_diag = 0.0;
  double trace_bound = 0.0;
  RMat null_space;  // columns spanning the unidentifiable directions when !identifiable
};

// dH_R/dzeta_i for every parameter of every listed target (3 per target).
// Reflection coefficients default to 1, the reconstructed-channel convention.
std::vector<CMat> channel_partials(const std::vector<SphericalPosition>& zeta, const SystemConfig& config,
                                   const std::vector<cplx>& betas = {});

// Diagonal of sigma^2 (W^H P^H)(P W), returned as an N_RF x N_RF matrix.
RMat noise_covariance(const AnalogBfMatrix& w_rx, const PropagationMatrix& p_rx, const SystemConfig& config);

// Fisher information from dense partials. stream_power is the per-stream power of the
// symbols, so S S^H = T * stream_power * I.
Fim fim_assemble(const BfConfiguration& bf, const std::vector<CMat>& partials, const ChannelSet& channels,
                 const SystemConfig& config, double stream_power = 1.0);

// Same quantity without forming N x N partials: uses the rank-two structure of each derivative.
Fim fim_for_targets(const BfConfiguration& bf, const std::vector<SphericalPosition>& zeta,
                    const PropagationMatrix& p_tx, const PropagationMatrix& p_rx, const SystemConfig& config,
                    const std::vector<cplx>& betas = {}, double stream_power = 1.0);

PebResult peb(const Fim& fim);

// Cartesian position bound, RMS over targets: sqrt(mean_u tr(J_u C_u J_u^T)).
std::optional<double> position_error_bound(const Fim& fim, const std::vector<SphericalPosition>& zeta);

}  // namespace xlisac
