#pragma once

#include <vector>

#include "xlisac/bf_configuration.hpp"
#include "xlisac/channel.hpp"
#include "xlisac/scenario.hpp"
#include "xlisac/signal.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

struct SampleCovariance {
  CMat matrix;
  int t_slots = 0;
};

SampleCovariance sample_covariance(const CMat& y);

struct SearchGrid {
  double r_min = 1.0, r_max = 15.0;
  int n_r = 60;
  double theta_min = 0.0, theta_max = kPi / 2;
  int n_theta = 60;
  double phi_min = 0.0, phi_max = kPi;
  int n_phi = 180;
  int sweeps = 3;

  double r_at(int i) const { return axis(r_min, r_max, n_r, i); }
  double theta_at(int i) const { return axis(theta_min, theta_max, n_theta, i); }
  double phi_at(int i) const { return axis(phi_min, phi_max, n_phi, i); }
  void validate() const;

 private:
  static double axis(double lo, double hi, int n, int i) { return n == 1 ? lo : lo + (hi - lo) * i / (n - 1); }
};

// One receive configuration of a sensing frame and the transmit signature that illuminated it.
struct SensingLook {
  AnalogBfMatrix w_rx{Side::Rx, {}};
  CMat tx_signature;  // P_TX W_TX V, N x U
};

struct EstimationContext {
  SystemConfig config;
  PropagationMatrix p_rx;
  std::vector<SensingLook> looks;

  static EstimationContext single(const BfConfiguration& bf, const ChannelSet& channels, const SystemConfig& config);
};

struct MleValue {
  double value = 0.0;
  bool regularized = false;
};

struct EstimateSet {
  std::vector<SphericalPosition> estimates;
  double objective_trace = 0.0;
  std::vector<double> sweep_objectives;  // objective after each coordinate sweep, all targets
};

// W_RX^H P_RX^H H_hat P_TX W_TX V with unit reflection coefficients.
CMat reconstruct_virtual_channel(const std::vector<SphericalPosition>& zeta, const BfConfiguration& bf,
                                 const ChannelSet& channels, const SystemConfig& config);

// Tr{Q R} summed over looks; Q projects onto the per-target receive columns W^H P^H a_RX(zeta_k).
MleValue mle_objective(const std::vector<SphericalPosition>& zeta, const std::vector<SampleCovariance>& r,
                       const EstimationContext& context);
MleValue mle_objective(const std::vector<SphericalPosition>& zeta, const SampleCovariance& r,
                       const EstimationContext& context);

EstimateSet estimate_targets(const std::vector<SampleCovariance>& r, const EstimationContext& context,
                             const SearchGrid& grid, int n_targets);
EstimateSet estimate_targets(const SampleCovariance& r, const EstimationContext& context, const SearchGrid& grid,
                             int n_targets = 1);

// For each truth index, the matched estimate index (exhaustive for K <= 4, greedy above).
std::vector<int> associate(const std::vector<SphericalPosition>& estimates,
                           const std::vector<SphericalPosition>& truth);

// Cartesian RMSE after association; `subset` restricts the average to those truth indices.
double rmse(const std::vector<SphericalPosition>& estimates, const std::vector<SphericalPosition>& truth,
            const std::vector<int>& subset = {});
double rmse(const EstimateSet& estimates, const Scenario& truth);

// Matched-filter statistic of a look with known symbols: Z = Y S^H (S S^H)^{-1}, with
// per-row weights T p_s / [R_n]_ii that whiten Z - H.
struct LookObservation {
  CMat z;
  RVec weights;
};

LookObservation matched_observation(const CMat& y, const SymbolBlock& symbols, const AnalogBfMatrix& w_rx,
                                    const PropagationMatrix& p_rx, const SystemConfig& config);

struct RefineOptions {
  int max_iterations = 100;
  double tolerance = 1e-12;
};

struct RefinedEstimate {
  std::vector<SphericalPosition> positions;
  std::vector<double> phases;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Grid search on the known-symbol statistics of every look, with unit-modulus reflection
// coefficients: per target, a joint angle scan at the Fraunhofer range on the normalized
// correlation, then cyclic 1D searches over (phi, theta, r) on the log-likelihood
// 2|<G, Z>| - ||G||^2. Found targets are subtracted before the next one is searched.
struct MatchedCandidate {
  SphericalPosition position;
  double value = 0.0;  // single-target log-likelihood
  std::vector<double> trace;
};

// Distinct single-target optima of the known-symbol likelihood, best first. Each comes from a cyclic
// search started at one of the n_peaks strongest angle-scan maxima or its azimuth mirror.
std::vector<MatchedCandidate> matched_candidates(const std::vector<LookObservation>& observations,
                                                 const EstimationContext& context, const SearchGrid& grid,
                                                 int n_peaks);

EstimateSet estimate_targets_matched(const std::vector<LookObservation>& observations,
                                     const EstimationContext& context, const SearchGrid& grid, int n_targets);

// Noiseless statistic of look `look` for the given targets: sum_k e^{j psi_k} b_k c_k^T.
CMat model_observation(const std::vector<SphericalPosition>& positions, const std::vector<double>& phases,
                       const EstimationContext& context, size_t look);

// Least-squares reflection phases for fixed positions.
std::vector<double> fit_phases(const std::vector<SphericalPosition>& positions, const EstimationContext& context,
                               const std::vector<LookObservation>& observations);

// Maximum-likelihood refinement with known symbols and unit-modulus reflection coefficients:
// Levenberg-Marquardt over (r, theta, phi, arg beta) of every target.
RefinedEstimate refine_targets(const std::vector<SphericalPosition>& initial, const std::vector<double>& phases,
                               const EstimationContext& context, const std::vector<LookObservation>& observations,
                               const RefineOptions& options = {});

}  // namespace xlisac
