#pragma once

#include <vector>

#include "xlisac/scenario.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

// Diagonal in-microstrip propagation model.
struct PropagationMatrix {
  Side side = Side::Tx;
  CVec diagonal;

  CMat dense() const { return diagonal.asDiagonal(); }
};

// Response vector together with its derivatives with respect to (r, theta, phi).
struct ResponsePartials {
  CVec value;
  CVec d_r;
  CVec d_theta;
  CVec d_phi;

  const CVec& d(int k) const { return k == 0 ? d_r : (k == 1 ? d_theta : d_phi); }
};

struct ChannelSet {
  CMat h_r;
  std::vector<CRow> h_dl;
  CMat h_si;
  PropagationMatrix p_tx;
  PropagationMatrix p_rx;
};

double attenuation(double r, const SystemConfig& config);

CVec response_vector(const SphericalPosition& pos, Side side, const SystemConfig& config);

ResponsePartials response_partials(const SphericalPosition& pos, Side side, const SystemConfig& config);

CMat reflection_channel(const Scenario& scenario, const SystemConfig& config);

CRow dl_channel(const SphericalPosition& pos, const SystemConfig& config);

CMat si_channel(const SystemConfig& config);

PropagationMatrix propagation_matrix(Side side, const SystemConfig& config);

ChannelSet synthesize_channels(const Scenario& scenario, const SystemConfig& config);

}  // namespace xlisac
