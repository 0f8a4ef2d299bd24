#include "xlisac/isac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xlisac/fim.hpp"
#include "xlisac/signal.hpp"

namespace xlisac {

CombinedDesign combine_designs(const SensingDesign& sensing, const CommDesign& comm, double xi, double rho,
                               const LorentzianCodebook& codebook, const PropagationMatrix& p_tx, double p_max) {
  if (xi < 0 || xi > 1 || rho < 0 || rho > 1) throw DomainError("combine_designs: weights must lie in [0, 1]");
  CombinedDesign out;
  const CMat blend = xi * comm.w_tx_c.weights + (1 - xi) * sensing.w_tx_s.weights;
  out.w_tx = project_analog(blend, Side::Tx, codebook);
  out.v = normalize_power(rho * comm.v_c + (1 - rho) * sensing.v_s, out.w_tx, p_tx, p_max);
  return out;
}

CMat si_canceller(const BfConfiguration& bf, const ChannelSet& channels) { return -effective_si(bf, channels); }

namespace {

CMat residual_matrix(const BfConfiguration& bf, const ChannelSet& channels) {
  CMat m = effective_si(bf, channels);
  if (bf.d.size() != 0) m += bf.d;
  return m;
}

}  // namespace

std::vector<double> residual_si(const BfConfiguration& bf, const ChannelSet& channels) {
  const CMat r = residual_matrix(bf, channels) * bf.v;
  std::vector<double> out(r.rows());
  for (Eigen::Index i = 0; i < r.rows(); ++i) out[i] = r.row(i).squaredNorm();
  return out;
}

double gamma_si_feasibility(const BfConfiguration& bf, const ChannelSet& channels) {
  const CMat m = residual_matrix(bf, channels);
  if (m.size() == 0 || bf.v.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMat> svd(m);
  const double smax = svd.singularValues()(0);
  return smax * bf.v.rowwise().squaredNorm().maxCoeff();
}

IsacMode parse_mode(const std::string& name) {
  if (name == "isac") return IsacMode::Isac;
  if (name == "sensing-only") return IsacMode::SensingOnly;
  if (name == "comm-only") return IsacMode::CommOnly;
  throw ConfigError("unknown mode '" + name + "' (expected isac, sensing-only or comm-only)");
}

std::string mode_name(IsacMode mode) {
  switch (mode) {
    case IsacMode::Isac: return "isac";
    case IsacMode::SensingOnly: return "sensing-only";
    case IsacMode::CommOnly: return "comm-only";
  }
  return "isac";
}

double peb_at(const BfConfiguration& bf, const std::vector<SphericalPosition>& zeta, const ChannelSet& channels,
              const SystemConfig& config) {
  const PebResult r = peb(fim_for_targets(bf, zeta, channels.p_tx, channels.p_rx, config));
  return r.identifiable ? r.peb_full : std::numeric_limits<double>::infinity();
}

IsacSolution algorithm1(const std::vector<SphericalPosition>& zeta_hat, const ChannelSet& channels,
                        const LorentzianCodebook& codebook, const SystemConfig& config, const IsacOptions& options) {
  const int n_users = static_cast<int>(zeta_hat.size());
  if (n_users < 1) throw DimensionError("algorithm1: need at least one user");
  if (n_users > config.n_rf) throw InfeasibleBdError("algorithm1: more users than RF chains");

  IsacSolution sol;
  std::vector<CRow> h_dl;
  for (const auto& z : zeta_hat) h_dl.push_back(dl_channel(z, config));

  const KMatrices k = k_matrices(channel_partials(zeta_hat, config), channels.p_tx, channels.p_rx);
  sol.sensing = design_sensing(k, codebook, channels.p_tx, channels.p_rx, config, n_users, options.crb,
                               options.factorize);
  sol.comm = design_comm(h_dl, channels.p_tx, codebook, config);

  // Blend grid.
  std::vector<double> xis, rhos;
  const int steps = static_cast<int>(std::lround(1.0 / config.grid_resolution_xi_rho));
  for (int s = 0; s <= steps; ++s) xis.push_back(std::min(1.0, s * config.grid_resolution_xi_rho));
  rhos = xis;
  if (options.mode == IsacMode::SensingOnly) xis = rhos = {0.0};
  if (options.mode == IsacMode::CommOnly) xis = rhos = {1.0};
  if (options.xi) xis = {*options.xi};
  if (options.rho) rhos = {*options.rho};

  int best = -1, fallback = -1;
  std::vector<CombinedDesign> designs;
  for (double xi : xis)
    for (double rho : rhos) {
      designs.push_back(combine_designs(sol.sensing, sol.comm, xi, rho, codebook, channels.p_tx, config.p_max));
      BfConfiguration bf{designs.back().w_tx, sol.sensing.w_rx, designs.back().v, {}, {}, xi, rho};
      GridPoint g{xi, rho, sum_rate(bf.w_tx, bf.v, h_dl, channels.p_tx, config), peb_at(bf, zeta_hat, channels, config),
                  false};
      g.peb_feasible = g.peb <= config.gamma_s;
      sol.grid_trace.push_back(g);
      const int idx = static_cast<int>(sol.grid_trace.size()) - 1;
      if (g.peb_feasible) {
        if (best < 0 || g.sum_rate > sol.grid_trace[best].sum_rate ||
            (g.sum_rate == sol.grid_trace[best].sum_rate && g.peb < sol.grid_trace[best].peb))
          best = idx;
      }
      if (fallback < 0 || g.peb < sol.grid_trace[fallback].peb) fallback = idx;
    }
  const int pick = best >= 0 ? best : fallback;

  BfConfiguration bf;
  bf.w_tx = designs[pick].w_tx;
  bf.w_rx = sol.sensing.w_rx;
  bf.v = designs[pick].v;
  bf.xi = sol.grid_trace[pick].xi;
  bf.rho = sol.grid_trace[pick].rho;
  bf.d = si_canceller(bf, channels);
  Eigen::JacobiSVD<CMat> svd(-bf.d, Eigen::ComputeFullV);
  const CMat basis = svd.matrixV();

  // Truncation: keep N_RF, N_RF - 1, ..., U leading basis columns.
  const CMat radiate_full = channels.p_tx.diagonal.asDiagonal() * bf.w_tx.materialized();
  const CMat g_full = effective_dl_channels(bf.w_tx, h_dl, channels.p_tx);
  bool emitted = false;
  BfConfiguration first_candidate;
  bool have_candidate = false;
  for (int kept = config.n_rf; kept >= n_users; --kept) {
    TruncationStep step;
    step.kept_columns = kept;
    BfConfiguration cand = bf;
    cand.f_basis = basis;
    cand.f_basis.rightCols(config.n_rf - kept).setZero();
    if (kept == config.n_rf) {
      cand.v = bf.v;
    } else {
      const CMat f = basis.leftCols(kept);
      try {
        cand.v = f * block_diagonalize(g_full * f, radiate_full * f, config.p_max);
      } catch (const InfeasibleBdError& e) {
        step.bd_feasible = false;
        step.diagnostic = e.what();
        sol.truncation_trace.push_back(step);
        continue;
      }
    }
    const std::vector<double> res = residual_si(cand, channels);
    step.max_residual_si = res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
    step.peb = peb_at(cand, zeta_hat, channels, config);
    sol.truncation_trace.push_back(step);
    if (!have_candidate) {
      first_candidate = cand;
      sol.kept_columns = kept;
      have_candidate = true;
    }
    if (step.max_residual_si <= config.gamma_si && step.peb <= config.gamma_s) {
      bf = cand;
      sol.kept_columns = kept;
      emitted = true;
      break;
    }
  }
  if (!emitted) {
    if (have_candidate) bf = first_candidate;
    else {
      bf.f_basis = basis;
      sol.kept_columns = config.n_rf;
    }
  }

  sol.bf = bf;
  sol.sum_rate = sum_rate(bf.w_tx, bf.v, h_dl, channels.p_tx, config);
  sol.peb = peb_at(bf, zeta_hat, channels, config);
  sol.residual_si = residual_si(bf, channels);
  sol.feasible = emitted;
  return sol;
}

bool verify_feasibility(const IsacSolution& solution, const std::vector<SphericalPosition>& zeta_hat,
                        const ChannelSet& channels, const SystemConfig& config) {
  for (double r : residual_si(solution.bf, channels))
    if (r > config.gamma_si) return false;
  return peb_at(solution.bf, zeta_hat, channels, config) <= config.gamma_s;
}

}  // namespace xlisac
