#include "xlisac/codebook.hpp"

#include <algorithm>
#include <cmath>

namespace xlisac {

LorentzianCodebook LorentzianCodebook::make(int bits) {
  if (bits < 1 || bits > 16) throw DomainError("codebook: bits must be in [1, 16]");
  const int m = 1 << bits;
  LorentzianCodebook cb;
  cb.phases.resize(m);
  cb.weights.resize(m);
  const double step = kPi / m;
  for (int k = 0; k < m; ++k) {
    cb.phases[k] = -kPi / 2 + k * step;
    cb.weights[k] = lorentzian_weight(cb.phases[k]);
  }
  return cb;
}

cplx lorentzian_weight(double phi) {
  if (phi < -kPi / 2 - 1e-12 || phi > kPi / 2 + 1e-12)
    throw DomainError("lorentzian_weight: phase outside [-pi/2, pi/2]");
  return 0.5 * (kJ + std::polar(1.0, phi));
}

cplx compose_dma_weight(cplx tilde_w, int /*i*/, int n, const SystemConfig& config) {
  if (std::abs(std::abs(tilde_w) - 1.0) > 1e-9) throw DomainError("compose_dma_weight: tilde_w must be unit modulus");
  return 0.5 * (kJ + tilde_w * std::polar(1.0, n * config.d_e * config.waveguide_beta));
}

CMat AnalogBfMatrix::materialized() const {
  const int nrf = n_rf(), ne = n_e();
  CMat m = CMat::Zero(nrf * ne, nrf);
  for (int i = 0; i < nrf; ++i) m.block(i * ne, i, ne, 1) = weights.row(i).transpose();
  return m;
}

CVec AnalogBfMatrix::stacked() const {
  CVec v(n_rf() * n_e());
  for (int i = 0; i < n_rf(); ++i) v.segment(i * n_e(), n_e()) = weights.row(i).transpose();
  return v;
}

AnalogBfMatrix assemble_analog_matrix(const CMat& weights, Side side, const SystemConfig& config) {
  if (weights.rows() != config.n_rf || weights.cols() != config.n_e)
    throw DimensionError("assemble_analog_matrix: weights must be n_rf x n_e");
  return {side, weights};
}

CMat extract_weights(const CMat& materialized, int n_rf, int n_e) {
  if (materialized.rows() != n_rf * n_e || materialized.cols() != n_rf)
    throw DimensionError("extract_weights: shape mismatch");
  CMat w(n_rf, n_e);
  for (int i = 0; i < n_rf; ++i) w.row(i) = materialized.block(i * n_e, i, n_e, 1).transpose();
  return w;
}

int nearest_codeword(cplx w, const LorentzianCodebook& codebook) {
  const int m = codebook.size();
  const cplx offset = w - 0.5 * kJ;
  if (std::abs(offset) < 1e-15) return 0;

  // Every codeword lies on the circle |c - j/2| = 1/2, so the nearest one is the
  // closest in angle; only a handful of candidates need an explicit distance.
  const double target = std::arg(offset);
  int candidates[6] = {0, m - 1, 0, 0, 0, 0};
  int count = 2;
  if (target >= -kPi / 2 && target <= kPi / 2) {
    const double step = kPi / m;
    const int k0 = static_cast<int>(std::floor((target + kPi / 2) / step));
    for (int d = -1; d <= 2; ++d) candidates[count++] = std::clamp(k0 + d, 0, m - 1);
  }
  int best = -1;
  double best_d = 0.0;
  std::sort(candidates, candidates + count);
  for (int c = 0; c < count; ++c) {
    const int k = candidates[c];
    const double d = std::norm(w - codebook.weights[k]);
    if (best < 0 || d < best_d) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

CodewordProjection project_to_codebook(const CVec& w, const LorentzianCodebook& codebook) {
  if (codebook.size() == 0) throw DomainError("project_to_codebook: empty codebook");
  CodewordProjection out{CVec(w.size()), std::vector<int>(w.size())};
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    out.indices[i] = nearest_codeword(w(i), codebook);
    out.values(i) = codebook.weights[out.indices[i]];
  }
  return out;
}

AnalogBfMatrix project_analog(const CMat& weights, Side side, const LorentzianCodebook& codebook) {
  AnalogBfMatrix out{side, CMat(weights.rows(), weights.cols())};
  for (Eigen::Index i = 0; i < weights.rows(); ++i)
    for (Eigen::Index n = 0; n < weights.cols(); ++n)
      out.weights(i, n) = codebook.weights[nearest_codeword(weights(i, n), codebook)];
  return out;
}

int zero_phase_index(const LorentzianCodebook& codebook) { return codebook.size() / 2; }

CVec fit_codeword_direction(const CVec& v, const LorentzianCodebook& codebook) {
  const Eigen::Index n = v.size();
  const double vmax = v.cwiseAbs().maxCoeff();
  if (!(vmax > 1e-300)) return CVec::Constant(n, codebook.weights[zero_phase_index(codebook)]);
  const CVec vn = v / vmax;

  auto score = [&](const CVec& w) {
    const double b = w.squaredNorm();
    return b > 0 ? std::norm(vn.dot(w)) / b : 0.0;
  };

  constexpr int kPhases = 64;
  constexpr double kScales[] = {0.35, 0.5, 0.7, 1.0, 1.4};
  constexpr size_t kStarts = 8;
  std::vector<std::pair<double, CVec>> starts;
  const CVec fallback = CVec::Constant(n, codebook.weights[zero_phase_index(codebook)]);
  starts.emplace_back(score(fallback), fallback);
  for (int p = 0; p < kPhases; ++p) {
    const cplx rot = std::polar(1.0, 2 * kPi * p / kPhases);
    for (double s : kScales) {
      CVec w = project_to_codebook(s * rot * vn, codebook).values;
      const double sc = score(w);
      bool seen = false;
      for (const auto& st : starts) seen = seen || st.second == w;
      if (!seen) starts.emplace_back(sc, std::move(w));
    }
  }
  std::sort(starts.begin(), starts.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  if (starts.size() > kStarts) starts.resize(kStarts);

  // Element-wise coordinate ascent on |v^H w|^2 / ||w||^2 from each start.
  CVec best = starts.front().second;
  double best_score = starts.front().first;
  for (auto& [start_score, w] : starts) {
    cplx a = vn.dot(w);
    double b = w.squaredNorm();
    for (int sweep = 0; sweep < 20; ++sweep) {
      bool changed = false;
      for (Eigen::Index e = 0; e < n; ++e) {
        const cplx old = w(e);
        int pick = -1;
        double pick_score = b > 0 ? std::norm(a) / b : 0.0;
        for (int k = 0; k < codebook.size(); ++k) {
          const cplx c = codebook.weights[k];
          const cplx a2 = a + std::conj(vn(e)) * (c - old);
          const double b2 = b - std::norm(old) + std::norm(c);
          const double sc = b2 > 0 ? std::norm(a2) / b2 : 0.0;
          if (sc > pick_score * (1 + 1e-14)) {
            pick = k;
            pick_score = sc;
          }
        }
        if (pick >= 0) {
          const cplx c = codebook.weights[pick];
          a += std::conj(vn(e)) * (c - old);
          b += std::norm(c) - std::norm(old);
          w(e) = c;
          changed = true;
        }
      }
      if (!changed) break;
    }
    const double sc = score(w);
    if (sc > best_score) {
      best_score = sc;
      best = w;
    }
  }
  return best;
}

AnalogBfMatrix random_analog_matrix(std::mt19937_64& rng, Side side, const LorentzianCodebook& codebook,
                                    const SystemConfig& config) {
  std::uniform_int_distribution<int> pick(0, codebook.size() - 1);
  AnalogBfMatrix out{side, CMat(config.n_rf, config.n_e)};
  for (int i = 0; i < config.n_rf; ++i)
    for (int n = 0; n < config.n_e; ++n) out.weights(i, n) = codebook.weights[pick(rng)];
  return out;
}

}  // namespace xlisac
