#include "xlisac/signal.hpp"

#include <cmath>

namespace xlisac {

CMat complex_gaussian(Eigen::Index rows, Eigen::Index cols, double variance, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(variance / 2));
  CMat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      m(r, c) = cplx(re, im);
    }
  return m;
}

SymbolBlock make_symbols(int n_users, int t_slots, std::mt19937_64& rng, double stream_power) {
  if (n_users > t_slots) throw DimensionError("make_symbols: need at least as many slots as streams");
  const CMat g = complex_gaussian(t_slots, n_users, 1.0, rng);
  Eigen::HouseholderQR<CMat> qr(g);
  const CMat q = qr.householderQ() * CMat::Identity(t_slots, n_users);
  return {std::sqrt(stream_power * t_slots) * q.transpose(), stream_power};
}

CMat effective_echo(const BfConfiguration& bf, const ChannelSet& channels) {
  const CMat left = bf.w_rx.materialized().adjoint() * channels.p_rx.diagonal.conjugate().asDiagonal();
  const CMat right = channels.p_tx.diagonal.asDiagonal() * bf.w_tx.materialized() * bf.v;
  return left * channels.h_r * right;
}

CMat effective_si(const BfConfiguration& bf, const ChannelSet& channels) {
  const CMat left = bf.w_rx.materialized().adjoint() * channels.p_rx.diagonal.conjugate().asDiagonal();
  const CMat right = channels.p_tx.diagonal.asDiagonal() * bf.w_tx.materialized();
  return left * channels.h_si * right;
}

CMat synthesize_received(const BfConfiguration& bf, const ChannelSet& channels, const SymbolBlock& symbols,
                         std::mt19937_64& rng, const SystemConfig& config) {
  const Eigen::Index t = symbols.s.cols();
  CMat si = effective_si(bf, channels);
  if (bf.d.size() != 0) si += bf.d;
  CMat y = (effective_echo(bf, channels) + si * bf.v) * symbols.s;
  if (config.noise_power > 0) {
    const CMat left = bf.w_rx.materialized().adjoint() * channels.p_rx.diagonal.conjugate().asDiagonal();
    y += left * complex_gaussian(config.n(), t, config.noise_power, rng);
  }
  return y;
}

}  // namespace xlisac
