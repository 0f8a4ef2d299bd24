#include "xlisac/comm_opt.hpp"

#include <cmath>
#include <string>

namespace xlisac {

double sum_rate(const AnalogBfMatrix& w_tx, const CMat& v, const std::vector<CRow>& h_dl,
                const PropagationMatrix& p_tx, const SystemConfig& config) {
  const CMat g = effective_dl_channels(w_tx, h_dl, p_tx);
  double rate = 0.0;
  for (Eigen::Index u = 0; u < g.rows(); ++u) rate += std::log2(1.0 + std::norm((g.row(u) * v.col(u))(0, 0)) / config.noise_power);
  return rate;
}

CMat effective_dl_channels(const AnalogBfMatrix& w_tx, const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx) {
  const CMat pw = p_tx.diagonal.asDiagonal() * w_tx.materialized();
  CMat g(h_dl.size(), pw.cols());
  for (size_t u = 0; u < h_dl.size(); ++u) g.row(u) = h_dl[u] * pw;
  return g;
}

AnalogBfMatrix select_tx_codewords(const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx,
                                   const LorentzianCodebook& codebook, const SystemConfig& config) {
  const int ne = config.n_e;
  AnalogBfMatrix out{Side::Tx, CMat(config.n_rf, ne)};
  for (int i = 0; i < config.n_rf; ++i) {
    const CVec p = p_tx.diagonal.segment(i * ne, ne);
    // Gain w^H M w over radiated power w^H D w for this microstrip.
    CMat m = CMat::Zero(ne, ne);
    for (const auto& h : h_dl) {
      const CVec g = h.segment(i * ne, ne).transpose().cwiseProduct(p);
      m.noalias() += g.conjugate() * g.transpose();
    }
    const RVec dd = p.cwiseAbs2();
    const RVec dinv_sqrt = dd.cwiseSqrt().cwiseInverse();
    const CMat whitened = dinv_sqrt.asDiagonal() * m * dinv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<CMat> eig(0.5 * (whitened + whitened.adjoint()));
    CVec dir = CVec::Zero(ne);
    if (eig.eigenvalues()(ne - 1) > 0) dir = dinv_sqrt.asDiagonal() * eig.eigenvectors().col(ne - 1);

    // Common-phase scan plus element-wise alignment toward the dominant direction.
    CVec w = fit_codeword_direction(dir, codebook);
    if (!(m.norm() > 0)) {
      out.weights.row(i) = w.transpose();
      continue;
    }

    // Element-wise coordinate ascent on the exact gain ratio.
    CVec mw = m * w;
    double num = w.dot(mw).real();
    double den = (dd.array() * w.cwiseAbs2().array()).sum();
    for (int sweep = 0; sweep < 3; ++sweep) {
      bool changed = false;
      for (int e = 0; e < ne; ++e) {
        const cplx old = w(e);
        double best = den > 0 ? num / den : 0.0;
        int pick = -1;
        for (int k = 0; k < codebook.size(); ++k) {
          const cplx delta = codebook.weights[k] - old;
          const double n2 = num + 2.0 * (std::conj(delta) * mw(e)).real() + std::norm(delta) * m(e, e).real();
          const double d2 = den + (std::norm(codebook.weights[k]) - std::norm(old)) * dd(e);
          const double r = d2 > 0 ? n2 / d2 : 0.0;
          if (r > best * (1 + 1e-14)) {
            best = r;
            pick = k;
          }
        }
        if (pick < 0) continue;
        const cplx delta = codebook.weights[pick] - old;
        num += 2.0 * (std::conj(delta) * mw(e)).real() + std::norm(delta) * m(e, e).real();
        den += (std::norm(codebook.weights[pick]) - std::norm(old)) * dd(e);
        mw += m.col(e) * delta;
        w(e) = codebook.weights[pick];
        changed = true;
      }
      if (!changed) break;
    }
    out.weights.row(i) = w.transpose();
  }
  return out;
}

CMat block_diagonalize(const CMat& g, const CMat& radiate, double p_max) {
  const Eigen::Index nu = g.rows(), m = g.cols();
  if (nu > m) throw InfeasibleBdError("block diagonalization: more users than digital dimensions");
  CMat v(m, nu);
  for (Eigen::Index u = 0; u < nu; ++u) {
    CMat others(nu - 1, m);
    for (Eigen::Index o = 0, r = 0; o < nu; ++o)
      if (o != u) others.row(r++) = g.row(o);
    CVec x = g.row(u).adjoint();
    if (nu > 1) {
      Eigen::JacobiSVD<CMat> svd(others, Eigen::ComputeFullV);
      const RVec& s = svd.singularValues();
      const double tol = 1e-12 * (s.size() ? s(0) : 0.0) * static_cast<double>(m);
      Eigen::Index rank = 0;
      for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++rank;
      const CMat null = svd.matrixV().rightCols(m - rank);
      x = null * (null.adjoint() * x);
    }
    const double norm = x.norm();
    if (!(norm > 1e-12 * std::max(g.row(u).norm(), 1e-300)))
      throw InfeasibleBdError("block diagonalization: user " + std::to_string(u) + " has no interference-free direction");
    x /= norm;
    const double radiated = (radiate * x).squaredNorm();
    if (!(radiated > 0)) throw InfeasibleBdError("block diagonalization: precoder radiates no power");
    v.col(u) = x * std::sqrt(p_max / nu / radiated);
  }
  return v;
}

CMat block_diagonalization(const AnalogBfMatrix& w_tx, const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx,
                           const SystemConfig& config) {
  if (static_cast<int>(h_dl.size()) > config.n_rf) throw InfeasibleBdError("block diagonalization: U > N_RF");
  const CMat radiate = p_tx.diagonal.asDiagonal() * w_tx.materialized();
  return block_diagonalize(effective_dl_channels(w_tx, h_dl, p_tx), radiate, config.p_max);
}

CommDesign design_comm(const std::vector<CRow>& h_dl, const PropagationMatrix& p_tx,
                       const LorentzianCodebook& codebook, const SystemConfig& config) {
  CommDesign d;
  d.w_tx_c = select_tx_codewords(h_dl, p_tx, codebook, config);
  d.v_c = block_diagonalization(d.w_tx_c, h_dl, p_tx, config);
  d.sum_rate = sum_rate(d.w_tx_c, d.v_c, h_dl, p_tx, config);
  return d;
}

}  // namespace xlisac
