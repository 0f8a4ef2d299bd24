#pragma once

#include <vector>

#include "xlisac/channel.hpp"
#include "xlisac/codebook.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

struct KMatrices {
  std::vector<CMat> k;  // P_RX^H dH_R/dzeta_i P_TX
};

struct RxBlocks {
  std::vector<CMat> blocks;  // N_RF blocks of N_E x N_E, rank one
  bool degenerate = false;   // some block fell back to a fixed direction
};

struct TxGram {
  CMat f;
  bool degenerate = false;
};

struct CrbOptions {
  double tolerance = 1e-6;
  int max_iterations = 50;
};

struct FactorizeOptions {
  double tolerance = 1e-4;
  int max_rounds = 30;
};

struct Factorization {
  AnalogBfMatrix w{Side::Tx, {}};
  CMat v;
  std::vector<double> objective_history;  // relative Frobenius misfit per round
  bool converged = false;
};

struct SensingDesign {
  CMat f_tx;
  std::vector<CMat> f_rx_blocks;
  AnalogBfMatrix w_rx{Side::Rx, {}};
  AnalogBfMatrix w_tx_s{Side::Tx, {}};
  CMat v_s;
  std::vector<double> objective_history;
  std::vector<double> factorization_history;
  bool converged = false;
  bool degenerate = false;
};

KMatrices k_matrices(const std::vector<CMat>& partials, const PropagationMatrix& p_tx,
                     const PropagationMatrix& p_rx);

// Sum_i Re Tr(K_i F_TX K_i^H F_RX) with F_RX block diagonal.
double crb_objective(const CMat& f_tx, const std::vector<CMat>& f_rx_blocks, const KMatrices& k);

RxBlocks optimize_rx_blocks(const CMat& f_tx, const KMatrices& k, int n_rf, int n_e);

TxGram optimize_tx_gram(const std::vector<CMat>& f_rx_blocks, const KMatrices& k);

SensingDesign alternate_crb(const KMatrices& k, int n_rf, int n_e, const CrbOptions& options = {});

AnalogBfMatrix project_rx_to_codebook(const std::vector<CMat>& blocks, const LorentzianCodebook& codebook,
                                      const PropagationMatrix& p_rx, const SystemConfig& config);

// Scale-free misfit min_{c >= 0} ||F - c G G^H||_F / ||F||_F with G = W V.
double factorization_misfit(const CMat& f_tx, const AnalogBfMatrix& w, const CMat& v);

Factorization factorize_tx(const CMat& f_tx, const LorentzianCodebook& codebook, const PropagationMatrix& p_tx,
                           const SystemConfig& config, int n_users, const FactorizeOptions& options = {});

// Rescales v so that sum_u ||P W v_u||^2 equals p_max.
CMat normalize_power(const CMat& v, const AnalogBfMatrix& w, const PropagationMatrix& p, double p_max);

SensingDesign design_sensing(const KMatrices& k, const LorentzianCodebook& codebook, const PropagationMatrix& p_tx,
                             const PropagationMatrix& p_rx, const SystemConfig& config, int n_users,
                             const CrbOptions& crb = {}, const FactorizeOptions& fact = {});

}  // namespace xlisac
