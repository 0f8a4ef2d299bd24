#pragma once

#include <vector>

#include "xlisac/channel.hpp"
#include "xlisac/codebook.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

struct CommDesign {
  AnalogBfMatrix w_tx_c{Side::Tx, {}};
  CMat v_c;
  double sum_rate = 0.0;
};

double sum_rate(const AnalogBfMatrix& w_tx, const CMat& v, const std::vector<CRow>& h_dl,
                const PropagationMatrix& p_tx, const SystemConfig& config);

// U x N_RF matrix whose rows are h_u P W.
CMat effective_dl_channels(const AnalogBfMatrix& w_tx, const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx);

AnalogBfMatrix select_tx_codewords(const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx,
                                   const LorentzianCodebook& codebook, const SystemConfig& config);

// Zero-forcing block diagonalization on effective channels g (U x m). `radiate` (N x m) maps
// the m digital coordinates to the radiated element signals; every user gets p_max / U.
CMat block_diagonalize(const CMat& g, const CMat& radiate, double p_max);

CMat block_diagonalization(const AnalogBfMatrix& w_tx, const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx,
                           const SystemConfig& config);

CommDesign design_comm(const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx,
                       const LorentzianCodebook& codebook, const SystemConfig& config);

}  // namespace xlisac
