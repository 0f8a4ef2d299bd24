#pragma once

#include "xlisac/codebook.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

struct BfConfiguration {
  AnalogBfMatrix w_tx{Side::Tx, {}};
  AnalogBfMatrix w_rx{Side::Rx, {}};
  CMat v;        // N_RF x U digital precoder
  CMat d;        // N_RF x N_RF digital SI canceller
  CMat f_basis;  // N_RF x N_RF, trailing columns zeroed by truncation
  double xi = 0.0;
  double rho = 0.0;
};

}  // namespace xlisac
