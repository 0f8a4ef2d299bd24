#include <gtest/gtest.h>

#include <cmath>

#include "xlisac/scenario.hpp"

using namespace xlisac;

namespace {

SystemConfig desk() { return SystemConfig{}.resolved(); }

// Element coordinates written out independently of element_position.
Eigen::Vector3d element_oracle(int i, int n, Side side, const SystemConfig& c) {
  const double x = c.d_p / 2 + i * c.d_rf;
  return {side == Side::Tx ? -x : x, 0.0, n * c.d_e};
}

}  // namespace

TEST(Wavelength, CarrierExamples) {
  SystemConfig c;
  c.carrier_frequency = 120e9;
  EXPECT_NEAR(wavelength(c), 2.49827e-3, 1e-8);
  c.carrier_frequency = kSpeedOfLight;
  EXPECT_DOUBLE_EQ(wavelength(c), 1.0);
  c.carrier_frequency = 150e9;
  EXPECT_NEAR(wavelength(c), 1.99862e-3, 1e-8);
}

TEST(ElementDistance, PoleCollapsesAngles) {
  SystemConfig c = desk();
  const SphericalPosition p{5.0, 0.0, 1.234};
  EXPECT_NEAR(element_distance(p, 0, 0, c), std::sqrt(0.05 * 0.05 + 25.0), 1e-12);
  EXPECT_NEAR(element_distance(p, 0, 0, c), 5.000250, 1e-6);
}

TEST(ElementDistance, BroadsideAndEndfire) {
  SystemConfig c = desk();
  EXPECT_NEAR(element_distance({5.0, kPi / 2, kPi / 2}, 0, 0, c), 5.000250, 1e-6);
  // phi = 0 points away from the TX panel, so the second microstrip is d_P/2 + d_RF further.
  const double expect = 2.0 + 0.05 + wavelength(c) / 2;
  EXPECT_NEAR(element_distance({2.0, kPi / 2, 0.0}, 1, 0, c), expect, 1e-9);
  EXPECT_NEAR(expect, 2.0512491, 1e-6);
}

TEST(ElementDistance, MatchesCartesianOracle) {
  SystemConfig c = desk();
  for (double r : {1.0, 3.7, 9.0})
    for (double th : {0.3, 1.1})
      for (double ph : {0.2, 1.9, 2.8}) {
        const SphericalPosition p{r, th, ph};
        for (int i = 0; i < c.n_rf; ++i)
          for (int n : {0, 5, c.n_e - 1}) {
            EXPECT_NEAR(element_distance(p, i, n, c, Side::Tx), (to_cartesian(p) - element_oracle(i, n, Side::Tx, c)).norm(), 1e-12);
            EXPECT_NEAR(element_distance(p, i, n, c, Side::Rx), (to_cartesian(p) - element_oracle(i, n, Side::Rx, c)).norm(), 1e-12);
          }
      }
}

TEST(ElementDistance, AzimuthMirrorSwapsPanels) {
  SystemConfig c = desk();
  const SphericalPosition p{4.0, 0.7, 0.5}, m{4.0, 0.7, kPi - 0.5};
  for (int i = 0; i < c.n_rf; ++i)
    for (int n = 0; n < c.n_e; n += 5)
      EXPECT_NEAR(element_distance(p, i, n, c, Side::Tx), element_distance(m, i, n, c, Side::Rx), 1e-12);
}

TEST(ElementDistance, PointArrayLimit) {
  SystemConfig c;
  c.d_p = 1e-15;
  c.d_rf = 1e-15;
  c.d_e = 1e-15;
  c = c.resolved();
  const SphericalPosition p{6.5, 0.9, 2.2};
  EXPECT_NEAR(element_distance(p, c.n_rf - 1, c.n_e - 1, c) / p.r, 1.0, 1e-12);
}

TEST(Fraunhofer, Examples) {
  SystemConfig c = desk();
  const double lam = wavelength(c);
  EXPECT_NEAR(fraunhofer_distance(lam, c), 2 * lam, 1e-15);
  EXPECT_NEAR(fraunhofer_distance(127 * lam / 2, c), 127.0 * 127.0 * 299792458.0 / 120e9 / 2, 1e-12);
  EXPECT_NEAR(fraunhofer_distance(127 * lam / 2, c), 20.147, 1e-3);
  EXPECT_NEAR(fraunhofer_distance(1.0, c), 800.55, 1e-2);
}

TEST(FresnelClip, StaysInsideRadiatingNearField) {
  SystemConfig c = desk();
  const auto [lo, hi] = fresnel_clip(1.0, 15.0, c);
  EXPECT_GE(lo, 1.0);
  EXPECT_LE(hi, fraunhofer_distance(array_aperture(c), c) + 1e-12);
  EXPECT_LT(lo, hi);
}

TEST(ConfigValidate, RejectsBadValues) {
  SystemConfig c = desk();
  EXPECT_NO_THROW(c.validate());
  SystemConfig bad = c;
  bad.n_rf = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.carrier_frequency = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ScenarioValidate, UnitModulusAndDistinctUsers) {
  Scenario s;
  s.targets = {{2.0, 0.5, 1.0}, {3.0, 0.5, 2.0}};
  s.reflection_coeffs = {std::polar(1.0, 0.3), std::polar(1.0, -2.0)};
  s.user_indices = {1};
  EXPECT_NO_THROW(s.validate());
  Scenario bad = s;
  bad.reflection_coeffs[0] = 0.5;
  EXPECT_ANY_THROW(bad.validate());
  bad = s;
  bad.user_indices = {0, 0};
  EXPECT_ANY_THROW(bad.validate());
  bad = s;
  bad.user_indices = {2};
  EXPECT_ANY_THROW(bad.validate());
  EXPECT_EQ(s.user_positions()[0].r, 3.0);
}

TEST(Conversions, DbmRoundTrip) {
  EXPECT_DOUBLE_EQ(dbm_to_watts(30.0), 1.0);
  EXPECT_NEAR(watts_to_dbm(dbm_to_watts(47.3)), 47.3, 1e-12);
  EXPECT_NEAR(watts_to_dbm(thermal_noise_watts(150e3)), -174 + 10 * std::log10(150e3), 1e-9);
}
