#include "xlisac/crb_opt.hpp"

#include <cmath>

namespace xlisac {

namespace {

CMat hermitian_part(const CMat& m) { return 0.5 * (m + m.adjoint()); }

// Principal eigenvector; ties go to the first column of the decomposition, phase fixed
// so the largest-magnitude entry is real positive.
CVec principal_vector(const CMat& a, double* eigenvalue) {
  Eigen::SelfAdjointEigenSolver<CMat> eig(hermitian_part(a));
  const RVec& lam = eig.eigenvalues();
  const Eigen::Index n = lam.size();
  const double top = lam(n - 1);
  Eigen::Index pick = n - 1;
  for (Eigen::Index i = 0; i < n; ++i)
    if (lam(i) >= top - 1e-12 * std::abs(top)) {
      pick = i;
      break;
    }
  CVec v = eig.eigenvectors().col(pick);
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  v *= std::polar(1.0, -std::arg(v(imax)));
  if (eigenvalue) *eigenvalue = top;
  return v;
}

}  // namespace

KMatrices k_matrices(const std::vector<CMat>& partials, const PropagationMatrix& p_tx,
                     const PropagationMatrix& p_rx) {
  KMatrices out;
  out.k.reserve(partials.size());
  for (const auto& d : partials) {
    if (d.rows() != p_rx.diagonal.size() || d.cols() != p_tx.diagonal.size())
      throw DimensionError("k_matrices: partial shape does not match propagation matrices");
    out.k.push_back(p_rx.diagonal.conjugate().asDiagonal() * d * p_tx.diagonal.asDiagonal());
  }
  return out;
}

double crb_objective(const CMat& f_tx, const std::vector<CMat>& f_rx_blocks, const KMatrices& k) {
  double total = 0.0;
  for (const auto& ki : k.k) {
    Eigen::Index row = 0;
    for (const auto& b : f_rx_blocks) {
      const Eigen::Index ne = b.rows();
      const CMat r = ki.middleRows(row, ne);
      total += (r * f_tx * r.adjoint() * b).trace().real();
      row += ne;
    }
  }
  return total;
}

RxBlocks optimize_rx_blocks(const CMat& f_tx, const KMatrices& k, int n_rf, int n_e) {
  RxBlocks out;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_rf));
  for (int b = 0; b < n_rf; ++b) {
    CMat a = CMat::Zero(n_e, n_e);
    for (const auto& ki : k.k) {
      const CMat r = ki.middleRows(b * n_e, n_e);
      a.noalias() += r * f_tx * r.adjoint();
    }
    a = hermitian_part(a);
    double lam = 0.0;
    CVec v;
    if (a.norm() <= 1e-300) {
      v = CVec::Unit(n_e, 0);
      out.degenerate = true;
    } else {
      v = principal_vector(a, &lam);
    }
    out.blocks.push_back(scale * v * v.adjoint());
  }
  return out;
}

TxGram optimize_tx_gram(const std::vector<CMat>& f_rx_blocks, const KMatrices& k) {
  if (k.k.empty()) throw DimensionError("optimize_tx_gram: no K matrices");
  const Eigen::Index n = k.k.front().cols();
  CMat m = CMat::Zero(n, n);
  for (const auto& ki : k.k) {
    Eigen::Index row = 0;
    for (const auto& b : f_rx_blocks) {
      const Eigen::Index ne = b.rows();
      const CMat r = ki.middleRows(row, ne);
      m.noalias() += r.adjoint() * b * r;
      row += ne;
    }
  }
  Eigen::SelfAdjointEigenSolver<CMat> eig(hermitian_part(m));
  const RVec lam = eig.eigenvalues().cwiseMax(0.0);
  TxGram out;
  const double norm = lam.norm();
  if (!(norm > 0)) {
    out.f = CMat::Zero(n, n);
    out.degenerate = true;
    return out;
  }
  out.f = eig.eigenvectors() * (lam / norm).asDiagonal() * eig.eigenvectors().adjoint();
  out.f = hermitian_part(out.f);
  return out;
}

SensingDesign alternate_crb(const KMatrices& k, int n_rf, int n_e, const CrbOptions& options) {
  SensingDesign d;
  const int n = n_rf * n_e;
  d.f_tx = CMat::Identity(n, n) / std::sqrt(static_cast<double>(n));
  double previous = 0.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    RxBlocks rx = optimize_rx_blocks(d.f_tx, k, n_rf, n_e);
    d.f_rx_blocks = std::move(rx.blocks);
    d.degenerate = d.degenerate || rx.degenerate;
    TxGram tx = optimize_tx_gram(d.f_rx_blocks, k);
    if (tx.degenerate) {
      d.degenerate = true;
      break;
    }
    d.f_tx = std::move(tx.f);
    const double value = crb_objective(d.f_tx, d.f_rx_blocks, k);
    d.objective_history.push_back(value);
    if (it > 0 && std::abs(value - previous) <= options.tolerance * std::abs(previous)) {
      d.converged = true;
      break;
    }
    previous = value;
  }
  return d;
}

AnalogBfMatrix project_rx_to_codebook(const std::vector<CMat>& blocks, const LorentzianCodebook& codebook,
                                      const PropagationMatrix& /*p_rx*/, const SystemConfig& config) {
  CMat w(config.n_rf, config.n_e);
  for (int b = 0; b < config.n_rf; ++b) {
    const CMat& blk = blocks.at(b);
    CVec v;
    if (blk.norm() <= 1e-300) {
      v = CVec::Zero(config.n_e);
    } else {
      v = principal_vector(blk, nullptr);
    }
    w.row(b) = fit_codeword_direction(v, codebook).transpose();
  }
  return {Side::Rx, w};
}

double factorization_misfit(const CMat& f_tx, const AnalogBfMatrix& w, const CMat& v) {
  const double fn = f_tx.norm();
  const CMat g = w.materialized() * v;
  const double a = std::max(0.0, (g.adjoint() * f_tx * g).trace().real()) / fn;
  const double b = (g.adjoint() * g).squaredNorm();
  const double j = b > 0 ? 1.0 - a * a / b : 1.0;
  return std::sqrt(std::max(0.0, j));
}

CMat normalize_power(const CMat& v, const AnalogBfMatrix& w, const PropagationMatrix& p, double p_max) {
  const double power = (p.diagonal.asDiagonal() * w.materialized() * v).squaredNorm();
  if (!(power > 0)) return v;
  return v * std::sqrt(p_max / power);
}

Factorization factorize_tx(const CMat& f_tx, const LorentzianCodebook& codebook, const PropagationMatrix& p_tx,
                           const SystemConfig& config, int n_users, const FactorizeOptions& options) {
  const int nrf = config.n_rf, ne = config.n_e, n = config.n();
  if (n_users > nrf) throw DimensionError("factorize_tx: more users than RF chains");
  const double fn = f_tx.norm();
  const CMat f = fn > 0 ? CMat(hermitian_part(f_tx) / fn) : CMat(hermitian_part(f_tx));

  // Rank-U eigen-factor E with E E^H the best rank-U approximation of F.
  Eigen::SelfAdjointEigenSolver<CMat> eig(f);
  CMat e(n, n_users);
  for (int u = 0; u < n_users; ++u) {
    const double lam = std::max(0.0, eig.eigenvalues()(n - 1 - u));
    e.col(u) = eig.eigenvectors().col(n - 1 - u) * std::sqrt(lam);
  }

  Factorization out;
  out.w = AnalogBfMatrix{Side::Tx, CMat(nrf, ne)};
  for (int i = 0; i < nrf; ++i) {
    Eigen::JacobiSVD<CMat> svd(e.middleRows(i * ne, ne), Eigen::ComputeThinU);
    out.w.weights.row(i) = fit_codeword_direction(svd.matrixU().col(0), codebook).transpose();
  }

  auto least_squares_v = [&](const AnalogBfMatrix& w) {
    CMat v = CMat::Zero(nrf, n_users);
    for (int i = 0; i < nrf; ++i) {
      const CRow wi = w.weights.row(i);
      const double nn = wi.squaredNorm();
      if (nn > 0) v.row(i) = (wi.conjugate() * e.middleRows(i * ne, ne)) / nn;
    }
    return v;
  };
  auto misfit = [&](const CMat& g) {
    const double a = std::max(0.0, (g.adjoint() * f * g).trace().real());
    const double b = (g.adjoint() * g).squaredNorm();
    return b > 0 ? std::sqrt(std::max(0.0, 1.0 - a * a / b)) : 1.0;
  };

  out.v = least_squares_v(out.w);
  CMat g = out.w.materialized() * out.v;
  double current = misfit(g);
  out.objective_history.push_back(current);

  for (int round = 0; round < options.max_rounds; ++round) {
    // (a) element-wise codebook scan with closed-form updates of the scale-free misfit.
    CMat fg = f * g;
    CMat m = g.adjoint() * g;
    double a = (g.adjoint() * fg).trace().real();
    for (int i = 0; i < nrf; ++i) {
      const CRow q = out.v.row(i);
      const double qq = q.squaredNorm();
      if (!(qq > 0)) continue;
      const CMat qm = q.adjoint() * q;
      const double qm_sq = qm.squaredNorm();
      for (int el = 0; el < ne; ++el) {
        const int r = i * ne + el;
        const cplx w0 = out.w.weights(i, el);
        const double frr = f(r, r).real();
        // sum_{t != r} F_rt g_t q^H
        const cplx hh = (fg.row(r) * q.adjoint())(0, 0) - frr * (g.row(r) * q.adjoint())(0, 0);
        const double a_rest = a - (std::norm(w0) * frr * qq + 2.0 * (std::conj(w0) * hh).real());
        const CMat m0 = m - std::norm(w0) * qm;
        const double m0_sq = m0.squaredNorm();
        const double tr_m0q = (m0 * qm).trace().real();

        auto evaluate = [&](cplx c) {
          const double av = a_rest + std::norm(c) * frr * qq + 2.0 * (std::conj(c) * hh).real();
          const double bv = m0_sq + 2.0 * std::norm(c) * tr_m0q + std::norm(c) * std::norm(c) * qm_sq;
          const double ap = std::max(0.0, av);
          return bv > 0 ? 1.0 - ap * ap / bv : 1.0;
        };
        int pick = -1;
        double best = evaluate(w0);
        for (int c = 0; c < codebook.size(); ++c) {
          const double val = evaluate(codebook.weights[c]);
          if (val < best - 1e-15) {
            best = val;
            pick = c;
          }
        }
        if (pick < 0) continue;
        const cplx w1 = codebook.weights[pick];
        const CRow delta = (w1 - w0) * q;
        fg.noalias() += f.col(r) * delta;
        g.row(r) += delta;
        m = g.adjoint() * g;
        a = (g.adjoint() * fg).trace().real();
        out.w.weights(i, el) = w1;
      }
    }
    double after_w = misfit(g);

    // (b) least squares for V on the eigen-factor, kept only if it lowers the misfit.
    const CMat v_ls = least_squares_v(out.w);
    const CMat g_ls = out.w.materialized() * v_ls;
    const double after_v = misfit(g_ls);
    if (after_v < after_w) {
      out.v = v_ls;
      g = g_ls;
      after_w = after_v;
    }

    const double previous = current;
    current = std::min(after_w, previous);
    out.objective_history.push_back(current);
    if (previous - current <= options.tolerance * std::max(previous, 1e-300)) {
      out.converged = true;
      break;
    }
  }
  out.v = normalize_power(out.v, out.w, p_tx, config.p_max);
  return out;
}

SensingDesign design_sensing(const KMatrices& k, const LorentzianCodebook& codebook, const PropagationMatrix& p_tx,
                             const PropagationMatrix& p_rx, const SystemConfig& config, int n_users,
                             const CrbOptions& crb, const FactorizeOptions& fact) {
  SensingDesign d = alternate_crb(k, config.n_rf, config.n_e, crb);
  d.w_rx = project_rx_to_codebook(d.f_rx_blocks, codebook, p_rx, config);
  Factorization f = factorize_tx(d.f_tx, codebook, p_tx, config, n_users, fact);
  d.w_tx_s = f.w;
  d.v_s = f.v;
  d.factorization_history = f.objective_history;
  return d;
}

}  // namespace xlisac
