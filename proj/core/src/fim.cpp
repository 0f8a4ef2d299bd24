#include "xlisac/fim.hpp"

#include <cmath>
#include <string>

namespace xlisac {

namespace {

cplx beta_or_one(const std::vector<cplx>& betas, size_t k) { return betas.empty() ? cplx(1.0) : betas.at(k); }

RMat symmetrize(const RMat& m) { return 0.5 * (m + m.transpose()); }

Fim assemble_from_effective(const std::vector<CMat>& d, const RVec& noise_diag, int n_users, double scale) {
  const int p = static_cast<int>(d.size());
  std::vector<CMat> whitened(p);
  const RVec inv = noise_diag.cwiseInverse();
  for (int i = 0; i < p; ++i) whitened[i] = inv.asDiagonal() * d[i];
  RMat f(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) {
      const double v = 2.0 * scale * (d[i].adjoint() * whitened[j]).trace().real();
      f(i, j) = v;
      f(j, i) = v;
    }
  return {symmetrize(f), n_users};
}

}  // namespace

std::vector<CMat> channel_partials(const std::vector<SphericalPosition>& zeta, const SystemConfig& config,
                                   const std::vector<cplx>& betas) {
  std::vector<CMat> out;
  out.reserve(3 * zeta.size());
  for (size_t k = 0; k < zeta.size(); ++k) {
    const ResponsePartials rx = response_partials(zeta[k], Side::Rx, config);
    const ResponsePartials tx = response_partials(zeta[k], Side::Tx, config);
    const cplx b = beta_or_one(betas, k);
    for (int q = 0; q < 3; ++q) out.push_back(b * (rx.d(q) * tx.value.adjoint() + rx.value * tx.d(q).adjoint()));
  }
  return out;
}

RMat noise_covariance(const AnalogBfMatrix& w_rx, const PropagationMatrix& p_rx, const SystemConfig& config) {
  const int nrf = w_rx.n_rf(), ne = w_rx.n_e();
  RMat r = RMat::Zero(nrf, nrf);
  for (int i = 0; i < nrf; ++i) {
    const CVec pw = p_rx.diagonal.segment(i * ne, ne).cwiseProduct(w_rx.weights.row(i).transpose());
    const double e = config.noise_power * pw.squaredNorm();
    if (!(e > 0)) throw SingularCovarianceError("noise_covariance: microstrip " + std::to_string(i) + " has zero weights");
    r(i, i) = e;
  }
  return r;
}

Fim fim_assemble(const BfConfiguration& bf, const std::vector<CMat>& partials, const ChannelSet& channels,
                 const SystemConfig& config, double stream_power) {
  const RMat rn = noise_covariance(bf.w_rx, channels.p_rx, config);
  const CMat left = bf.w_rx.materialized().adjoint() * channels.p_rx.diagonal.conjugate().asDiagonal();
  const CMat right = channels.p_tx.diagonal.asDiagonal() * bf.w_tx.materialized() * bf.v;
  std::vector<CMat> d;
  d.reserve(partials.size());
  for (const auto& p : partials) d.push_back(left * p * right);
  return assemble_from_effective(d, rn.diagonal(), static_cast<int>(partials.size() / 3),
                                 config.t_slots * stream_power);
}

Fim fim_for_targets(const BfConfiguration& bf, const std::vector<SphericalPosition>& zeta,
                    const PropagationMatrix& p_tx, const PropagationMatrix& p_rx, const SystemConfig& config,
                    const std::vector<cplx>& betas, double stream_power) {
  const RMat rn = noise_covariance(bf.w_rx, p_rx, config);
  const CMat left = bf.w_rx.materialized().adjoint() * p_rx.diagonal.conjugate().asDiagonal();
  const CMat right = p_tx.diagonal.asDiagonal() * bf.w_tx.materialized() * bf.v;
  std::vector<CMat> d;
  d.reserve(3 * zeta.size());
  for (size_t k = 0; k < zeta.size(); ++k) {
    const ResponsePartials rx = response_partials(zeta[k], Side::Rx, config);
    const ResponsePartials tx = response_partials(zeta[k], Side::Tx, config);
    const cplx b = beta_or_one(betas, k);
    const CVec rx_eff = left * rx.value;
    const CRow tx_eff = tx.value.adjoint() * right;
    for (int q = 0; q < 3; ++q) {
      const CVec drx = left * rx.d(q);
      const CRow dtx = tx.d(q).adjoint() * right;
      d.push_back(b * (drx * tx_eff + rx_eff * dtx));
    }
  }
  return assemble_from_effective(d, rn.diagonal(), static_cast<int>(zeta.size()), config.t_slots * stream_power);
}

PebResult peb(const Fim& fim) {
  PebResult out;
  const RMat& m = fim.matrix;
  const int p = static_cast<int>(m.rows());
  const double tr = m.trace();
  out.trace_bound = tr > 0 ? 9.0 * fim.n_users * fim.n_users / tr : INFINITY;

  Eigen::SelfAdjointEigenSolver<RMat> eig(m);
  const RVec& lam = eig.eigenvalues();
  const double lmax = lam.cwiseAbs().maxCoeff();
  if (!(lmax > 0) || lam(0) <= 1e-12 * lmax) {
    out.identifiable = false;
    out.peb_full = INFINITY;
    out.peb_diag = INFINITY;
    int count = 0;
    for (int i = 0; i < p; ++i)
      if (lam(i) <= 1e-12 * lmax || !(lmax > 0)) ++count;
    out.null_space = eig.eigenvectors().leftCols(count);
    return out;
  }
  const RMat inv = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.peb_full = std::sqrt(inv.trace());
  out.peb_diag = std::sqrt(m.diagonal().cwiseInverse().sum());
  return out;
}

std::optional<double> position_error_bound(const Fim& fim, const std::vector<SphericalPosition>& zeta) {
  const PebResult check = peb(fim);
  if (!check.identifiable) return std::nullopt;
  const RMat crb = fim.matrix.ldlt().solve(RMat::Identity(fim.matrix.rows(), fim.matrix.cols()));
  double total = 0.0;
  for (size_t u = 0; u < zeta.size(); ++u) {
    const auto& z = zeta[u];
    const double st = std::sin(z.theta), ct = std::cos(z.theta), sp = std::sin(z.phi), cp = std::cos(z.phi);
    Eigen::Matrix3d j;
    j << st * cp, z.r * ct * cp, -z.r * st * sp,
         st * sp, z.r * ct * sp, z.r * st * cp,
         ct, -z.r * st, 0.0;
    const Eigen::Matrix3d c = crb.block<3, 3>(3 * u, 3 * u);
    total += (j * c * j.transpose()).trace();
  }
  return std::sqrt(total / zeta.size());
}

}  // namespace xlisac
