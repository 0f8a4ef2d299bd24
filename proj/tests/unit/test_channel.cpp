#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "xlisac/channel.hpp"

using namespace xlisac;

namespace {

SystemConfig small_config() {
  SystemConfig c;
  c.n_rf = 2;
  c.n_e = 4;
  return c.resolved();
}

cplx response_oracle(const SphericalPosition& p, int i, int n, Side side, const SystemConfig& c) {
  const double lam = wavelength(c);
  const double x = c.d_p / 2 + i * c.d_rf;
  const Eigen::Vector3d e(side == Side::Tx ? -x : x, 0.0, n * c.d_e);
  const double d = (to_cartesian(p) - e).norm();
  return lam / (4 * kPi * d) * std::exp(-c.absorption_coeff * d / 2) * std::exp(kJ * (2 * kPi * d / lam));
}

Scenario three_targets() {
  Scenario s;
  s.targets = {{2.0, 0.5, 0.7}, {4.5, 1.0, 2.1}, {7.0, 0.3, 1.4}};
  s.reflection_coeffs = {std::polar(1.0, 0.4), std::polar(1.0, 2.5), std::polar(1.0, -1.2)};
  s.user_indices = {0, 1};
  return s;
}

}  // namespace

TEST(Attenuation, Examples) {
  SystemConfig c = SystemConfig{}.resolved();
  c.absorption_coeff = 0.0;
  const double lam = wavelength(c);
  EXPECT_NEAR(attenuation(lam / (4 * kPi), c), 1.0, 1e-12);
  EXPECT_NEAR(attenuation(6.0, c) / attenuation(3.0, c), 0.5, 1e-12);
  c.absorption_coeff = 0.0033;
  EXPECT_NEAR(attenuation(10.0, c), 1.9557e-5, 1e-8);
  EXPECT_THROW(attenuation(0.0, c), DomainError);
}

TEST(ResponseVector, SingleElementDegenerateArray) {
  SystemConfig c;
  c.n_rf = 1;
  c.n_e = 1;
  c.d_p = 0.0;
  c = c.resolved();
  const SphericalPosition p{3.0, 0.4, 1.0};
  const CVec a = response_vector(p, Side::Tx, c);
  ASSERT_EQ(a.size(), 1);
  const cplx expect = attenuation(3.0, c) * std::exp(kJ * (2 * kPi * 3.0 / wavelength(c)));
  EXPECT_NEAR(std::abs(a(0) - expect), 0.0, 1e-12 * std::abs(expect));
}

TEST(ResponseVector, MatchesPerElementOracle) {
  const SystemConfig c = small_config();
  const SphericalPosition p{2.7, 0.8, 1.3};
  for (Side side : {Side::Tx, Side::Rx}) {
    const CVec a = response_vector(p, side, c);
    for (int i = 0; i < c.n_rf; ++i)
      for (int n = 0; n < c.n_e; ++n)
        EXPECT_NEAR(std::abs(a(i * c.n_e + n) - response_oracle(p, i, n, side, c)), 0.0, 1e-15);
  }
}

TEST(ReflectionChannel, NaiveTripleLoop) {
  const SystemConfig c = small_config();
  const Scenario s = three_targets();
  const CMat h = reflection_channel(s, c);
  const int n = c.n();
  for (int m = 0; m < n; ++m)
    for (int q = 0; q < n; ++q) {
      cplx acc = 0;
      for (int k = 0; k < 3; ++k)
        acc += s.reflection_coeffs[k] * response_oracle(s.targets[k], m / c.n_e, m % c.n_e, Side::Rx, c) *
               std::conj(response_oracle(s.targets[k], q / c.n_e, q % c.n_e, Side::Tx, c));
      EXPECT_LT(std::abs(h(m, q) - acc), 1e-12);
    }
}

TEST(ReflectionChannel, RankFollowsTargetCount) {
  const SystemConfig c = small_config();
  Scenario s = three_targets();
  auto rank = [](const CMat& m) {
    Eigen::JacobiSVD<CMat> svd(m);
    const auto sv = svd.singularValues();
    return static_cast<int>((sv.array() > 1e-10 * sv(0)).count());
  };
  EXPECT_EQ(rank(reflection_channel(s, c)), 3);
  s.targets.resize(1);
  s.reflection_coeffs.resize(1);
  s.user_indices = {0};
  EXPECT_EQ(rank(reflection_channel(s, c)), 1);
}

TEST(ReflectionChannel, LinearInCoefficients) {
  const SystemConfig c = small_config();
  const Scenario s = three_targets();
  Scenario flipped = s;
  flipped.reflection_coeffs[0] = -s.reflection_coeffs[0];
  const CMat outer = response_vector(s.targets[0], Side::Rx, c) * response_vector(s.targets[0], Side::Tx, c).adjoint();
  const CMat lhs = reflection_channel(flipped, c) + 2.0 * s.reflection_coeffs[0] * outer;
  EXPECT_LT((lhs - reflection_channel(s, c)).norm(), 1e-12 * reflection_channel(s, c).norm());
}

TEST(DlChannel, EqualsTxResponse) {
  const SystemConfig c = small_config();
  const SphericalPosition p{3.3, 0.6, 2.0};
  EXPECT_EQ((dl_channel(p, c).transpose() - response_vector(p, Side::Tx, c)).norm(), 0.0);
  EXPECT_GT(dl_channel(p, c).norm(), dl_channel({6.6, 0.6, 2.0}, c).norm());
}

TEST(SiChannel, ZeroGainAndSymmetry) {
  SystemConfig c = small_config();
  const CMat h = si_channel(c);
  EXPECT_LT((h - h.transpose()).norm(), 1e-12 * h.norm());
  const int n = c.n();
  for (int m = 0; m < n; ++m)
    for (int q = 0; q < n; ++q) {
      const double x_rx = c.d_p / 2 + (m / c.n_e) * c.d_rf, x_tx = -(c.d_p / 2 + (q / c.n_e) * c.d_rf);
      const double dz = (m % c.n_e - q % c.n_e) * c.d_e;
      const double d = std::hypot(x_rx - x_tx, dz);
      const cplx expect = attenuation(d, c) * std::exp(kJ * (2 * kPi * d / wavelength(c)));
      EXPECT_LT(std::abs(h(m, q) - expect), 1e-12 * std::abs(expect));
    }
  c.si_gain = 0.0;
  EXPECT_EQ(si_channel(c).norm(), 0.0);
}

TEST(PropagationMatrix, Examples) {
  SystemConfig c = small_config();
  c.waveguide_alpha = 0.0;
  c.waveguide_beta = 0.0;
  EXPECT_LT((propagation_matrix(Side::Tx, c).dense() - CMat::Identity(c.n(), c.n())).norm(), 1e-15);
  c = small_config();
  const PropagationMatrix p = propagation_matrix(Side::Rx, c);
  for (int i = 0; i < c.n_rf; ++i) EXPECT_EQ(p.diagonal(i * c.n_e), cplx(1.0, 0.0));
  // Third element sits two half-wavelengths into the guide: phase 2 pi.
  EXPECT_NEAR(std::abs(p.diagonal(2) - cplx(1.0, 0.0)), 0.0, 1e-12);
}

TEST(SynthesizeChannels, Deterministic) {
  const SystemConfig c = small_config();
  const ChannelSet a = synthesize_channels(three_targets(), c), b = synthesize_channels(three_targets(), c);
  EXPECT_EQ(a.h_r, b.h_r);
  EXPECT_EQ(a.h_si, b.h_si);
  ASSERT_EQ(a.h_dl.size(), 2u);
  EXPECT_EQ(a.h_dl[1], b.h_dl[1]);
}

TEST(ResponsePartials, OneElementRangeDerivative) {
  SystemConfig c;
  c.n_rf = 1;
  c.n_e = 1;
  c.d_p = 0.0;
  c.absorption_coeff = 0.0;
  c = c.resolved();
  const SphericalPosition p{2.5, 0.9, 0.4};
  const ResponsePartials rp = response_partials(p, Side::Tx, c);
  const cplx value = attenuation(p.r, c) * std::exp(kJ * (2 * kPi * p.r / wavelength(c)));
  const cplx expect = (-1.0 / p.r + kJ * (2 * kPi / wavelength(c))) * value;
  EXPECT_LT(std::abs(rp.d_r(0) - expect), 1e-9 * std::abs(expect));
}
