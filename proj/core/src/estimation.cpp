#include "xlisac/estimation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace xlisac {

namespace {

CMat receive_map(const AnalogBfMatrix& w_rx, const PropagationMatrix& p_rx) {
  return w_rx.materialized().adjoint() * p_rx.diagonal.conjugate().asDiagonal();
}

struct LookCache {
  CMat rx_map;   // W^H P^H, N_RF x N
  CMat tx_sig;   // N x U
  CMat rx_rows;  // row i holds conj(w_i o p_i), the nonzero part of row i of rx_map

  CVec receive(const CVec& a) const {
    const Eigen::Index ne = rx_rows.cols();
    CVec b(rx_rows.rows());
    for (Eigen::Index i = 0; i < rx_rows.rows(); ++i)
      b(i) = (rx_rows.row(i) * a.segment(i * ne, ne))(0, 0);
    return b;
  }
};

std::vector<LookCache> make_cache(const EstimationContext& context) {
  std::vector<LookCache> cache;
  for (const auto& look : context.looks) {
    const int nrf = look.w_rx.n_rf(), ne = look.w_rx.n_e();
    CMat rows(nrf, ne);
    for (int i = 0; i < nrf; ++i)
      rows.row(i) = look.w_rx.weights.row(i).conjugate().cwiseProduct(
          context.p_rx.diagonal.segment(i * ne, ne).conjugate().transpose());
    cache.push_back({receive_map(look.w_rx, context.p_rx), look.tx_signature, rows});
  }
  return cache;
}

// Tr{Q R} for the column set B, with ridge fallback for rank-deficient B.
double projector_trace(const CMat& b, const CMat& r, bool* regularized) {
  CMat gram = b.adjoint() * b;
  const double tr = gram.trace().real();
  if (!(tr > 0)) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMat> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues()(0) < 1e-10 * tr) {
    gram += CMat::Identity(gram.rows(), gram.cols()) * (1e-10 * tr);
    if (regularized) *regularized = true;
  }
  const CMat rb = r * b;
  return (gram.ldlt().solve(b.adjoint() * rb)).trace().real();
}

struct Searcher {
  const std::vector<SampleCovariance>& r;
  const EstimationContext& context;
  std::vector<LookCache> cache;
  std::vector<CMat> locked;  // per look, columns of already-locked targets

  double value(const SphericalPosition& pos) const {
    const CVec a = response_vector(pos, Side::Rx, context.config);
    double total = 0.0;
    for (size_t l = 0; l < cache.size(); ++l) {
      CMat b(cache[l].rx_map.rows(), locked[l].cols() + 1);
      if (locked[l].cols() > 0) b.leftCols(locked[l].cols()) = locked[l];
      b.col(locked[l].cols()) = cache[l].rx_map * a;
      total += projector_trace(b, r[l].matrix, nullptr);
    }
    return total;
  }

  void lock(const SphericalPosition& pos) {
    const CVec a = response_vector(pos, Side::Rx, context.config);
    for (size_t l = 0; l < cache.size(); ++l) {
      CMat b(cache[l].rx_map.rows(), locked[l].cols() + 1);
      if (locked[l].cols() > 0) b.leftCols(locked[l].cols()) = locked[l];
      b.col(locked[l].cols()) = cache[l].rx_map * a;
      locked[l] = b;
    }
  }
};

int nearest_index(double x, double lo, double hi, int n) {
  if (n == 1) return 0;
  const double t = (x - lo) / (hi - lo) * (n - 1);
  return std::clamp(static_cast<int>(std::lround(t)), 0, n - 1);
}

}  // namespace

SampleCovariance sample_covariance(const CMat& y) {
  if (y.cols() < 1) throw DimensionError("sample_covariance: need at least one snapshot");
  CMat r = y * y.adjoint() / static_cast<double>(y.cols());
  r = 0.5 * (r + r.adjoint());
  return {r, static_cast<int>(y.cols())};
}

void SearchGrid::validate() const {
  if (n_r < 2 || n_theta < 2 || n_phi < 2) throw ConfigError("search grid needs at least 2 points per axis");
  if (!(r_min > 0) || !(r_max > r_min)) throw ConfigError("search grid: invalid range interval");
  if (theta_min < 0 || theta_max > kPi || !(theta_max > theta_min)) throw ConfigError("search grid: invalid elevation interval");
  if (!(phi_max > phi_min)) throw ConfigError("search grid: invalid azimuth interval");
  if (sweeps < 1) throw ConfigError("search grid: sweeps must be >= 1");
}

EstimationContext EstimationContext::single(const BfConfiguration& bf, const ChannelSet& channels,
                                            const SystemConfig& config) {
  EstimationContext ctx{config, channels.p_rx, {}};
  ctx.looks.push_back({bf.w_rx, channels.p_tx.diagonal.asDiagonal() * bf.w_tx.materialized() * bf.v});
  return ctx;
}

CMat reconstruct_virtual_channel(const std::vector<SphericalPosition>& zeta, const BfConfiguration& bf,
                                 const ChannelSet& channels, const SystemConfig& config) {
  const int n = config.n();
  CMat h = CMat::Zero(n, n);
  for (const auto& z : zeta)
    h.noalias() += response_vector(z, Side::Rx, config) * response_vector(z, Side::Tx, config).adjoint();
  const CMat left = receive_map(bf.w_rx, channels.p_rx);
  const CMat right = channels.p_tx.diagonal.asDiagonal() * bf.w_tx.materialized() * bf.v;
  return left * h * right;
}

MleValue mle_objective(const std::vector<SphericalPosition>& zeta, const std::vector<SampleCovariance>& r,
                       const EstimationContext& context) {
  if (r.size() != context.looks.size()) throw DimensionError("mle_objective: one covariance per look required");
  MleValue out;
  std::vector<CVec> a;
  for (const auto& z : zeta) a.push_back(response_vector(z, Side::Rx, context.config));
  for (size_t l = 0; l < r.size(); ++l) {
    const CMat map = receive_map(context.looks[l].w_rx, context.p_rx);
    CMat b(map.rows(), static_cast<Eigen::Index>(zeta.size()));
    for (size_t k = 0; k < zeta.size(); ++k) b.col(k) = map * a[k];
    out.value += projector_trace(b, r[l].matrix, &out.regularized);
  }
  return out;
}

MleValue mle_objective(const std::vector<SphericalPosition>& zeta, const SampleCovariance& r,
                       const EstimationContext& context) {
  return mle_objective(zeta, std::vector<SampleCovariance>{r}, context);
}

EstimateSet estimate_targets(const std::vector<SampleCovariance>& r, const EstimationContext& context,
                             const SearchGrid& grid, int n_targets) {
  grid.validate();
  if (r.size() != context.looks.size()) throw DimensionError("estimate_targets: one covariance per look required");
  Searcher s{r, context, make_cache(context), std::vector<CMat>(r.size())};
  for (size_t l = 0; l < r.size(); ++l) s.locked[l] = CMat(s.cache[l].rx_map.rows(), 0);

  EstimateSet out;
  const double r0 = fraunhofer_distance(array_aperture(context.config), context.config);
  double value = 0.0;
  for (int k = 0; k < n_targets; ++k) {
    int ir = nearest_index(r0, grid.r_min, grid.r_max, grid.n_r);
    int it = 0, ip = 0;

    // Coarse angles at the Fraunhofer range: joint azimuth/elevation scan.
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < grid.n_phi; ++a)
      for (int b = 0; b < grid.n_theta; ++b) {
        const double v = s.value({grid.r_at(ir), grid.theta_at(b), grid.phi_at(a)});
        if (v > best) {
          best = v;
          ip = a;
          it = b;
        }
      }
    value = best;

    for (int sweep = 0; sweep < grid.sweeps; ++sweep) {
      for (int axis = 0; axis < 3; ++axis) {
        const int count = axis == 0 ? grid.n_phi : (axis == 1 ? grid.n_theta : grid.n_r);
        int pick = axis == 0 ? ip : (axis == 1 ? it : ir);
        double top = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < count; ++i) {
          const SphericalPosition pos{grid.r_at(axis == 2 ? i : ir), grid.theta_at(axis == 1 ? i : it),
                                      grid.phi_at(axis == 0 ? i : ip)};
          const double v = s.value(pos);
          if (v > top) {
            top = v;
            pick = i;
          }
        }
        (axis == 0 ? ip : (axis == 1 ? it : ir)) = pick;
        value = top;
      }
      out.sweep_objectives.push_back(value);
    }
    const SphericalPosition found{grid.r_at(ir), grid.theta_at(it), grid.phi_at(ip)};
    out.estimates.push_back(found);
    s.lock(found);
  }
  out.objective_trace = value;
  return out;
}

EstimateSet estimate_targets(const SampleCovariance& r, const EstimationContext& context, const SearchGrid& grid,
                             int n_targets) {
  return estimate_targets(std::vector<SampleCovariance>{r}, context, grid, n_targets);
}

std::vector<int> associate(const std::vector<SphericalPosition>& estimates,
                           const std::vector<SphericalPosition>& truth) {
  if (estimates.size() != truth.size()) throw DimensionError("associate: estimate and truth counts differ");
  const size_t k = truth.size();
  RMat cost(k, k);
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < k; ++j) cost(i, j) = (to_cartesian(truth[i]) - to_cartesian(estimates[j])).squaredNorm();

  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  if (k <= 4) {
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (size_t i = 0; i < k; ++i) c += cost(i, perm[i]);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  std::vector<bool> used_t(k, false), used_e(k, false);
  for (size_t step = 0; step < k; ++step) {
    double c = std::numeric_limits<double>::infinity();
    size_t bi = 0, bj = 0;
    for (size_t i = 0; i < k; ++i)
      for (size_t j = 0; j < k; ++j)
        if (!used_t[i] && !used_e[j] && cost(i, j) < c) {
          c = cost(i, j);
          bi = i;
          bj = j;
        }
    used_t[bi] = used_e[bj] = true;
    perm[bi] = static_cast<int>(bj);
  }
  return perm;
}

double rmse(const std::vector<SphericalPosition>& estimates, const std::vector<SphericalPosition>& truth,
            const std::vector<int>& subset) {
  const std::vector<int> match = associate(estimates, truth);
  std::vector<int> idx = subset;
  if (idx.empty()) {
    idx.resize(truth.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  double total = 0.0;
  for (int i : idx) total += (to_cartesian(truth.at(i)) - to_cartesian(estimates[match[i]])).squaredNorm();
  return std::sqrt(total / idx.size());
}

double rmse(const EstimateSet& estimates, const Scenario& truth) { return rmse(estimates.estimates, truth.targets); }

LookObservation matched_observation(const CMat& y, const SymbolBlock& symbols, const AnalogBfMatrix& w_rx,
                                    const PropagationMatrix& p_rx, const SystemConfig& config) {
  const CMat gram = symbols.s * symbols.s.adjoint();
  LookObservation obs;
  obs.z = gram.ldlt().solve(symbols.s * y.adjoint()).adjoint();
  const double t_ps = static_cast<double>(symbols.s.cols()) * symbols.stream_power;
  obs.weights = RVec(w_rx.n_rf());
  for (int i = 0; i < w_rx.n_rf(); ++i) {
    const double rn =
        config.noise_power * p_rx.diagonal.segment(i * w_rx.n_e(), w_rx.n_e()).cwiseProduct(w_rx.weights.row(i).transpose()).squaredNorm();
    obs.weights(i) = rn > 0 ? t_ps / rn : 0.0;
  }
  return obs;
}

namespace {

constexpr int kMatchedStarts = 2;

// Flat real-arithmetic evaluation of the known-symbol correlation; this is the inner loop of
// the acquisition grid search.
struct MatchedSearcher {
  int looks = 0, nrf = 0, ne = 0, n = 0, nu = 0;
  double lambda = 0.0, k = 0.0, kappa = 0.0, d_p = 0.0, d_rf = 0.0, d_e = 0.0;
  std::vector<double> rx_re, rx_im;  // [look][chain][element]
  std::vector<double> tx_re, tx_im;  // [look][stream][element]
  std::vector<double> w;             // [look][chain]
  std::vector<cplx> z;               // [look][chain][stream]
  mutable std::vector<double> arx_re, arx_im, atx_re, atx_im, b_re, b_im, c_re, c_im;

  MatchedSearcher(const std::vector<LookObservation>& observations, const EstimationContext& context) {
    const SystemConfig& cfg = context.config;
    looks = static_cast<int>(context.looks.size());
    nrf = cfg.n_rf;
    ne = cfg.n_e;
    n = cfg.n();
    nu = looks ? static_cast<int>(context.looks[0].tx_signature.cols()) : 0;
    lambda = wavelength(cfg);
    k = 2 * kPi / lambda;
    kappa = cfg.absorption_coeff;
    d_p = cfg.d_p;
    d_rf = cfg.d_rf;
    d_e = cfg.d_e;
    for (int l = 0; l < looks; ++l) {
      const auto& look = context.looks[l];
      for (int i = 0; i < nrf; ++i)
        for (int e = 0; e < ne; ++e) {
          const cplx v = std::conj(look.w_rx.weights(i, e) * context.p_rx.diagonal(i * ne + e));
          rx_re.push_back(v.real());
          rx_im.push_back(v.imag());
        }
      for (int u = 0; u < nu; ++u)
        for (int m = 0; m < n; ++m) {
          tx_re.push_back(look.tx_signature(m, u).real());
          tx_im.push_back(look.tx_signature(m, u).imag());
        }
      for (int i = 0; i < nrf; ++i) {
        w.push_back(observations[l].weights(i));
        for (int u = 0; u < nu; ++u) z.push_back(observations[l].z(i, u));
      }
    }
    arx_re.resize(n);
    arx_im.resize(n);
    atx_re.resize(n);
    atx_im.resize(n);
    b_re.resize(static_cast<size_t>(looks) * nrf);
    b_im.resize(b_re.size());
    c_re.resize(static_cast<size_t>(looks) * nu);
    c_im.resize(c_re.size());
  }

  void response(const SphericalPosition& pos, bool tx, std::vector<double>& re, std::vector<double>& im) const {
    const double st = std::sin(pos.theta);
    const double px = pos.r * st * std::cos(pos.phi), py = pos.r * st * std::sin(pos.phi);
    const double pz = pos.r * std::cos(pos.theta);
    for (int i = 0; i < nrf; ++i) {
      const double offset = d_p / 2 + i * d_rf;
      const double dx = px + (tx ? offset : -offset);
      for (int e = 0; e < ne; ++e) {
        const double dz = pz - e * d_e;
        const double d = std::sqrt(dx * dx + py * py + dz * dz);
        const double amp = lambda / (4 * kPi * d) * std::exp(-kappa * d / 2);
        re[i * ne + e] = amp * std::cos(k * d);
        im[i * ne + e] = amp * std::sin(k * d);
      }
    }
  }

  // Fills b (receive columns) and c (transmit rows, conj(a_tx)^T tx_signature) for every look.
  void project(const SphericalPosition& pos) const {
    response(pos, false, arx_re, arx_im);
    response(pos, true, atx_re, atx_im);
    for (int l = 0; l < looks; ++l) {
      for (int i = 0; i < nrf; ++i) {
        const size_t base = (static_cast<size_t>(l) * nrf + i) * ne;
        double sr = 0.0, si = 0.0;
        for (int e = 0; e < ne; ++e) {
          const double xr = rx_re[base + e], xi = rx_im[base + e];
          const double ar = arx_re[i * ne + e], ai = arx_im[i * ne + e];
          sr += xr * ar - xi * ai;
          si += xr * ai + xi * ar;
        }
        b_re[l * nrf + i] = sr;
        b_im[l * nrf + i] = si;
      }
      for (int u = 0; u < nu; ++u) {
        const size_t base = (static_cast<size_t>(l) * nu + u) * n;
        double sr = 0.0, si = 0.0;
        for (int m = 0; m < n; ++m) {
          const double tr = tx_re[base + m], ti = tx_im[base + m];
          const double ar = atx_re[m], ai = -atx_im[m];
          sr += tr * ar - ti * ai;
          si += tr * ai + ti * ar;
        }
        c_re[l * nu + u] = sr;
        c_im[l * nu + u] = si;
      }
    }
  }

  // Returns <G, Z>_W and ||G||_W^2 summed over looks, G = b c^T.
  std::pair<cplx, double> correlate(const SphericalPosition& pos) const {
    project(pos);
    double in_re = 0.0, in_im = 0.0, energy = 0.0;
    for (int l = 0; l < looks; ++l) {
      double eb = 0.0, ec = 0.0;
      for (int u = 0; u < nu; ++u) ec += c_re[l * nu + u] * c_re[l * nu + u] + c_im[l * nu + u] * c_im[l * nu + u];
      for (int i = 0; i < nrf; ++i) {
        const double wi = w[l * nrf + i];
        const double br = b_re[l * nrf + i], bi = b_im[l * nrf + i];
        eb += wi * (br * br + bi * bi);
        // t = sum_u Z(i,u) conj(c_u)
        double tr = 0.0, ti = 0.0;
        for (int u = 0; u < nu; ++u) {
          const cplx zz = z[(static_cast<size_t>(l) * nrf + i) * nu + u];
          const double cr = c_re[l * nu + u], ci = -c_im[l * nu + u];
          tr += zz.real() * cr - zz.imag() * ci;
          ti += zz.real() * ci + zz.imag() * cr;
        }
        // conj(b) t
        in_re += wi * (br * tr + bi * ti);
        in_im += wi * (br * ti - bi * tr);
      }
      energy += eb * ec;
    }
    return {cplx(in_re, in_im), energy};
  }

  double likelihood(const SphericalPosition& pos) const {
    const auto [inner, energy] = correlate(pos);
    return 2.0 * std::abs(inner) - energy;
  }

  double normalized(const SphericalPosition& pos) const {
    const auto [inner, energy] = correlate(pos);
    return energy > 0 ? std::norm(inner) / energy : 0.0;
  }

  void subtract(const SphericalPosition& pos) {
    const cplx phase = std::polar(1.0, std::arg(correlate(pos).first));
    for (int l = 0; l < looks; ++l)
      for (int i = 0; i < nrf; ++i)
        for (int u = 0; u < nu; ++u)
          z[(static_cast<size_t>(l) * nrf + i) * nu + u] -=
              phase * cplx(b_re[l * nrf + i], b_im[l * nrf + i]) * cplx(c_re[l * nu + u], c_im[l * nu + u]);
  }
};

}  // namespace

namespace {

// Cyclic searches started from the strongest angle-scan peaks, one candidate per start.
std::vector<MatchedCandidate> search_candidates(const MatchedSearcher& s, const EstimationContext& context,
                                                const SearchGrid& grid, int n_peaks) {
  const double r0 = fraunhofer_distance(array_aperture(context.config), context.config);
  const int ir0 = nearest_index(r0, grid.r_min, grid.r_max, grid.n_r);

  // The angle scan runs on every other grid point; the cyclic searches work at full resolution.
  const int np = (grid.n_phi + 1) / 2, nt = (grid.n_theta + 1) / 2;
  RMat scan(np, nt);
  for (int a = 0; a < np; ++a)
    for (int b = 0; b < nt; ++b) scan(a, b) = s.normalized({grid.r_at(ir0), grid.theta_at(2 * b), grid.phi_at(2 * a)});

  // Starting points: the strongest local maxima of the scan and their mirror images
  // phi -> pi - phi, which the two mirrored panels make nearly indistinguishable.
  std::vector<std::pair<double, std::array<int, 2>>> peaks;
  for (int a = 0; a < np; ++a)
    for (int b = 0; b < nt; ++b) {
      bool peak = true;
      for (int da = -1; da <= 1 && peak; ++da)
        for (int db = -1; db <= 1 && peak; ++db) {
          const int na = a + da, nb = b + db;
          if ((da || db) && na >= 0 && na < np && nb >= 0 && nb < nt && scan(na, nb) > scan(a, b)) peak = false;
        }
      if (peak) peaks.push_back({scan(a, b), {2 * a, 2 * b}});
    }
  std::stable_sort(peaks.begin(), peaks.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  if (peaks.size() > static_cast<size_t>(n_peaks)) peaks.resize(n_peaks);
  std::vector<std::array<int, 2>> starts;
  for (const auto& p : peaks) {
    starts.push_back(p.second);
    starts.push_back(
        {nearest_index(kPi - grid.phi_at(p.second[0]), grid.phi_min, grid.phi_max, grid.n_phi), p.second[1]});
  }

  std::vector<MatchedCandidate> out;
  for (const auto& start : starts) {
    int ir = ir0, ip = start[0], it = start[1];
    MatchedCandidate c;
    for (int sweep = 0; sweep < grid.sweeps; ++sweep) {
      for (int axis : {2, 0, 1}) {
        const int count = axis == 0 ? grid.n_phi : (axis == 1 ? grid.n_theta : grid.n_r);
        int pick = axis == 0 ? ip : (axis == 1 ? it : ir);
        double top = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < count; ++i) {
          const SphericalPosition pos{grid.r_at(axis == 2 ? i : ir), grid.theta_at(axis == 1 ? i : it),
                                      grid.phi_at(axis == 0 ? i : ip)};
          const double v = s.likelihood(pos);
          if (v > top) {
            top = v;
            pick = i;
          }
        }
        (axis == 0 ? ip : (axis == 1 ? it : ir)) = pick;
        c.value = top;
      }
      c.trace.push_back(c.value);
    }
    c.position = {grid.r_at(ir), grid.theta_at(it), grid.phi_at(ip)};
    const bool seen = std::any_of(out.begin(), out.end(), [&](const MatchedCandidate& o) {
      return o.position.r == c.position.r && o.position.theta == c.position.theta && o.position.phi == c.position.phi;
    });
    if (!seen) out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.value > y.value; });
  return out;
}

}  // namespace

std::vector<MatchedCandidate> matched_candidates(const std::vector<LookObservation>& observations,
                                                 const EstimationContext& context, const SearchGrid& grid,
                                                 int n_peaks) {
  grid.validate();
  if (observations.size() != context.looks.size())
    throw DimensionError("matched_candidates: one observation per look required");
  if (n_peaks < 1) throw DimensionError("matched_candidates: n_peaks must be >= 1");
  return search_candidates(MatchedSearcher(observations, context), context, grid, n_peaks);
}

EstimateSet estimate_targets_matched(const std::vector<LookObservation>& observations,
                                     const EstimationContext& context, const SearchGrid& grid, int n_targets) {
  grid.validate();
  if (observations.size() != context.looks.size())
    throw DimensionError("estimate_targets_matched: one observation per look required");
  MatchedSearcher s(observations, context);

  EstimateSet out;
  double value = 0.0;
  for (int k = 0; k < n_targets; ++k) {
    const MatchedCandidate best = search_candidates(s, context, grid, kMatchedStarts).front();
    out.sweep_objectives.insert(out.sweep_objectives.end(), best.trace.begin(), best.trace.end());
    value = best.value;
    out.estimates.push_back(best.position);
    s.subtract(best.position);
  }
  out.objective_trace = value;
  return out;
}

CMat model_observation(const std::vector<SphericalPosition>& positions, const std::vector<double>& phases,
                       const EstimationContext& context, size_t look) {
  const SensingLook& l = context.looks.at(look);
  const CMat map = receive_map(l.w_rx, context.p_rx);
  CMat m = CMat::Zero(map.rows(), l.tx_signature.cols());
  for (size_t k = 0; k < positions.size(); ++k) {
    const CVec b = map * response_vector(positions[k], Side::Rx, context.config);
    const CRow c = response_vector(positions[k], Side::Tx, context.config).adjoint() * l.tx_signature;
    m.noalias() += std::polar(1.0, phases.at(k)) * b * c;
  }
  return m;
}

std::vector<double> fit_phases(const std::vector<SphericalPosition>& positions, const EstimationContext& context,
                               const std::vector<LookObservation>& observations) {
  const auto cache = make_cache(context);
  const size_t k = positions.size();
  std::vector<CVec> arx, atx;
  for (const auto& p : positions) {
    arx.push_back(response_vector(p, Side::Rx, context.config));
    atx.push_back(response_vector(p, Side::Tx, context.config));
  }
  Eigen::Index rows = 0;
  for (const auto& o : observations) rows += o.z.size();
  CMat a(rows, static_cast<Eigen::Index>(k));
  CVec y(rows);
  Eigen::Index off = 0;
  for (size_t l = 0; l < observations.size(); ++l) {
    const auto& o = observations[l];
    const RVec sw = o.weights.cwiseSqrt();
    for (size_t t = 0; t < k; ++t) {
      const CMat m = sw.asDiagonal() * ((cache[l].rx_map * arx[t]) * (atx[t].adjoint() * cache[l].tx_sig));
      a.block(off, t, o.z.size(), 1) = m.reshaped();
    }
    y.segment(off, o.z.size()) = (sw.asDiagonal() * o.z).reshaped();
    off += o.z.size();
  }
  const CVec beta = a.completeOrthogonalDecomposition().solve(y);
  std::vector<double> phases(k);
  for (size_t t = 0; t < k; ++t) phases[t] = std::arg(beta(t));
  return phases;
}

RefinedEstimate refine_targets(const std::vector<SphericalPosition>& initial, const std::vector<double>& phases,
                               const EstimationContext& context, const std::vector<LookObservation>& observations,
                               const RefineOptions& options) {
  const auto cache = make_cache(context);
  const int k = static_cast<int>(initial.size());
  const int np = 4 * k;
  Eigen::Index rows = 0;
  for (const auto& o : observations) rows += 2 * o.z.size();

  RVec x(np);
  for (int t = 0; t < k; ++t) {
    x(4 * t) = initial[t].r;
    x(4 * t + 1) = initial[t].theta;
    x(4 * t + 2) = initial[t].phi;
    x(4 * t + 3) = phases.empty() ? 0.0 : phases.at(t);
  }

  auto position = [](const RVec& p, int t) { return SphericalPosition{p(4 * t), p(4 * t + 1), p(4 * t + 2)}; };

  auto evaluate = [&](const RVec& p, RVec& res, RMat* jac) {
    res.resize(rows);
    if (jac) jac->setZero(rows, np);
    std::vector<ResponsePartials> rx(k), tx(k);
    for (int t = 0; t < k; ++t) {
      rx[t] = response_partials(position(p, t), Side::Rx, context.config);
      tx[t] = response_partials(position(p, t), Side::Tx, context.config);
    }
    Eigen::Index off = 0;
    for (size_t l = 0; l < observations.size(); ++l) {
      const auto& o = observations[l];
      const RVec sw = o.weights.cwiseSqrt();
      const Eigen::Index m = o.z.size();
      CMat model = CMat::Zero(o.z.rows(), o.z.cols());
      for (int t = 0; t < k; ++t) {
        const cplx e = std::polar(1.0, p(4 * t + 3));
        const CVec b = cache[l].rx_map * rx[t].value;
        const CRow c = tx[t].value.adjoint() * cache[l].tx_sig;
        model.noalias() += e * b * c;
        if (jac) {
          for (int q = 0; q < 3; ++q) {
            const CMat d = e * ((cache[l].rx_map * rx[t].d(q)) * c + b * (tx[t].d(q).adjoint() * cache[l].tx_sig));
            const CVec v = -(sw.asDiagonal() * d).reshaped();
            jac->block(off, 4 * t + q, m, 1) = v.real();
            jac->block(off + m, 4 * t + q, m, 1) = v.imag();
          }
          const CVec v = -(sw.asDiagonal() * (kJ * e * b * c)).reshaped();
          jac->block(off, 4 * t + 3, m, 1) = v.real();
          jac->block(off + m, 4 * t + 3, m, 1) = v.imag();
        }
      }
      const CVec r = (sw.asDiagonal() * (o.z - model)).reshaped();
      res.segment(off, m) = r.real();
      res.segment(off + m, m) = r.imag();
      off += 2 * m;
    }
  };

  auto clamp_params = [&](RVec& p) {
    for (int t = 0; t < k; ++t) {
      p(4 * t) = std::max(p(4 * t), 0.05);
      p(4 * t + 1) = std::clamp(p(4 * t + 1), 1e-6, kPi - 1e-6);
    }
  };

  RVec res;
  RMat jac;
  evaluate(x, res, &jac);
  double cost = res.squaredNorm();
  double lambda = 1e-3;
  RefinedEstimate out;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    out.iterations = iter + 1;
    const RMat jtj = jac.transpose() * jac;
    const RVec g = jac.transpose() * res;
    bool accepted = false;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      RMat a = jtj;
      for (int i = 0; i < np; ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-30);
      const RVec step = a.ldlt().solve(-g);
      RVec trial = x + step;
      clamp_params(trial);
      RVec trial_res;
      evaluate(trial, trial_res, nullptr);
      const double trial_cost = trial_res.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double gain = cost - trial_cost;
        x = trial;
        evaluate(x, res, &jac);
        const double previous = cost;
        cost = trial_cost;
        lambda = std::max(lambda / 3, 1e-12);
        accepted = true;
        if (gain <= options.tolerance * previous) out.converged = true;
      } else {
        lambda *= 4;
      }
    }
    if (!accepted || out.converged) {
      out.converged = true;
      break;
    }
  }
  for (int t = 0; t < k; ++t) {
    out.positions.push_back(position(x, t));
    out.phases.push_back(std::remainder(x(4 * t + 3), 2 * kPi));
  }
  out.cost = cost;
  return out;
}

}  // namespace xlisac
