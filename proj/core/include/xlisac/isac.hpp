#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xlisac/bf_configuration.hpp"
#include "xlisac/channel.hpp"
#include "xlisac/codebook.hpp"
#include "xlisac/comm_opt.hpp"
#include "xlisac/crb_opt.hpp"

namespace xlisac {

struct CombinedDesign {
  AnalogBfMatrix w_tx{Side::Tx, {}};
  CMat v;
};

// Entrywise blend of the analog weights (projected back to the codebook) and of the
// digital precoders (rescaled to full power).
CombinedDesign combine_designs(const SensingDesign& sensing, const CommDesign& comm, double xi, double rho,
                               const LorentzianCodebook& codebook, const PropagationMatrix& p_tx, double p_max);

// D = -(W_RX^H P_RX^H H_SI P_TX W_TX).
CMat si_canceller(const BfConfiguration& bf, const ChannelSet& channels);

// Squared row norms of (effective SI + D) V.
std::vector<double> residual_si(const BfConfiguration& bf, const ChannelSet& channels);

// sigma_max(effective SI + D) * max_i ||V_(i,:)||^2.
double gamma_si_feasibility(const BfConfiguration& bf, const ChannelSet& channels);

enum class IsacMode { Isac, SensingOnly, CommOnly };

IsacMode parse_mode(const std::string& name);
std::string mode_name(IsacMode mode);

struct IsacOptions {
  IsacMode mode = IsacMode::Isac;
  std::optional<double> xi;   // forces the analog blend
  std::optional<double> rho;  // forces the digital blend
  CrbOptions crb{};
  FactorizeOptions factorize{};
};

struct GridPoint {
  double xi = 0.0;
  double rho = 0.0;
  double sum_rate = 0.0;
  double peb = 0.0;  // +inf when the FIM is singular
  bool peb_feasible = false;
};

struct TruncationStep {
  int kept_columns = 0;
  bool bd_feasible = true;
  double max_residual_si = 0.0;
  double peb = 0.0;
  std::string diagnostic;
};

struct IsacSolution {
  BfConfiguration bf;
  double sum_rate = 0.0;  // with the channels the design was computed for
  double peb = 0.0;       // at the estimated parameters
  std::vector<double> residual_si;
  bool feasible = false;
  int kept_columns = 0;
  std::vector<GridPoint> grid_trace;
  std::vector<TruncationStep> truncation_trace;
  SensingDesign sensing;
  CommDesign comm;
};

double peb_at(const BfConfiguration& bf, const std::vector<SphericalPosition>& zeta, const ChannelSet& channels,
              const SystemConfig& config);

// Full configuration procedure for the estimated user parameters `zeta_hat`. The SI channel and
// the propagation matrices are taken from `channels`; downlink channels are rebuilt from zeta_hat.
IsacSolution algorithm1(const std::vector<SphericalPosition>& zeta_hat, const ChannelSet& channels,
                        const LorentzianCodebook& codebook, const SystemConfig& config,
                        const IsacOptions& options = {});

// Independent re-check of the feasibility flag.
bool verify_feasibility(const IsacSolution& solution, const std::vector<SphericalPosition>& zeta_hat,
                        const ChannelSet& channels, const SystemConfig& config);

}  // namespace xlisac
