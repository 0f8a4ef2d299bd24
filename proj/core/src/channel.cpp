#include "xlisac/channel.hpp"

#include <cmath>

namespace xlisac {

double attenuation(double r, const SystemConfig& config) {
  if (!(r > 0)) throw DomainError("attenuation: range must be positive");
  const double lambda = wavelength(config);
  return lambda / (4 * kPi * r) * std::exp(-config.absorption_coeff * r / 2);
}

CVec response_vector(const SphericalPosition& pos, Side side, const SystemConfig& config) {
  const double lambda = wavelength(config);
  const double k = 2 * kPi / lambda;
  const double st = std::sin(pos.theta);
  const double px = pos.r * st * std::cos(pos.phi), py = pos.r * st * std::sin(pos.phi), pz = pos.r * std::cos(pos.theta);
  CVec a(config.n());
  for (int i = 0; i < config.n_rf; ++i) {
    const double offset = config.d_p / 2 + i * config.d_rf;
    const double dx = px + (side == Side::Tx ? offset : -offset);
    for (int n = 0; n < config.n_e; ++n) {
      const double dz = pz - n * config.d_e;
      const double d = std::sqrt(dx * dx + py * py + dz * dz);
      const double amp = lambda / (4 * kPi * d) * std::exp(-config.absorption_coeff * d / 2);
      a(i * config.n_e + n) = cplx(amp * std::cos(k * d), amp * std::sin(k * d));
    }
  }
  return a;
}

ResponsePartials response_partials(const SphericalPosition& pos, Side side, const SystemConfig& config) {
  const double k = 2 * kPi / wavelength(config);
  const int N = config.n();
  ResponsePartials out{CVec(N), CVec(N), CVec(N), CVec(N)};

  const double st = std::sin(pos.theta), ct = std::cos(pos.theta);
  const double sp = std::sin(pos.phi), cp = std::cos(pos.phi);
  const Eigen::Vector3d p = to_cartesian(pos);
  const Eigen::Vector3d dp_dr(st * cp, st * sp, ct);
  const Eigen::Vector3d dp_dtheta(pos.r * ct * cp, pos.r * ct * sp, -pos.r * st);
  const Eigen::Vector3d dp_dphi(-pos.r * st * sp, pos.r * st * cp, 0.0);

  for (int i = 0; i < config.n_rf; ++i) {
    for (int n = 0; n < config.n_e; ++n) {
      const Eigen::Vector3d delta = p - element_position(i, n, side, config);
      const double d = delta.norm();
      const double alpha = attenuation(d, config);
      const cplx value = alpha * std::polar(1.0, k * d);
      // d/dd of alpha(d) e^{jkd}
      const cplx slope = value * (-1.0 / d - config.absorption_coeff / 2 + kJ * k);
      const int idx = i * config.n_e + n;
      out.value(idx) = value;
      out.d_r(idx) = slope * (delta.dot(dp_dr) / d);
      out.d_theta(idx) = slope * (delta.dot(dp_dtheta) / d);
      out.d_phi(idx) = slope * (delta.dot(dp_dphi) / d);
    }
  }
  return out;
}

CMat reflection_channel(const Scenario& scenario, const SystemConfig& config) {
  const int N = config.n();
  CMat h = CMat::Zero(N, N);
  for (int k = 0; k < scenario.n_targets(); ++k) {
    const CVec a_rx = response_vector(scenario.targets[k], Side::Rx, config);
    const CVec a_tx = response_vector(scenario.targets[k], Side::Tx, config);
    h.noalias() += scenario.reflection_coeffs[k] * a_rx * a_tx.adjoint();
  }
  return h;
}

CRow dl_channel(const SphericalPosition& pos, const SystemConfig& config) {
  return response_vector(pos, Side::Tx, config).transpose();
}

CMat si_channel(const SystemConfig& config) {
  const int N = config.n();
  const double k = 2 * kPi / wavelength(config);
  CMat h = CMat::Zero(N, N);
  if (config.si_gain == 0.0) return h;
  for (int m = 0; m < N; ++m) {
    const Eigen::Vector3d rx = element_position(m / config.n_e, m % config.n_e, Side::Rx, config);
    for (int q = 0; q < N; ++q) {
      const Eigen::Vector3d tx = element_position(q / config.n_e, q % config.n_e, Side::Tx, config);
      const double d = (rx - tx).norm();
      h(m, q) = config.si_gain * attenuation(d, config) * std::polar(1.0, k * d);
    }
  }
  return h;
}

PropagationMatrix propagation_matrix(Side side, const SystemConfig& config) {
  PropagationMatrix p{side, CVec(config.n())};
  const cplx gamma(config.waveguide_alpha, config.waveguide_beta);
  for (int i = 0; i < config.n_rf; ++i)
    for (int n = 0; n < config.n_e; ++n) p.diagonal(i * config.n_e + n) = std::exp(-(n * config.d_e) * gamma);
  return p;
}

ChannelSet synthesize_channels(const Scenario& scenario, const SystemConfig& config) {
  ChannelSet c;
  c.h_r = reflection_channel(scenario, config);
  for (int u : scenario.user_indices) c.h_dl.push_back(dl_channel(scenario.targets[u], config));
  c.h_si = si_channel(config);
  c.p_tx = propagation_matrix(Side::Tx, config);
  c.p_rx = propagation_matrix(Side::Rx, config);
  return c;
}

}  // namespace xlisac
