#include "xlisac/acquisition.hpp"

#include <algorithm>
#include <cmath>

#include "xlisac/crb_opt.hpp"
#include "xlisac/signal.hpp"

namespace xlisac {

namespace {

// Keeps the range inside the searched interval and wraps the azimuth. Angles are not clamped: a target
// just outside the searched sector is still a valid position and clamping would stall the refinement.
void clamp_to_grid(std::vector<SphericalPosition>& positions, const SearchGrid& grid) {
  for (auto& p : positions) {
    p.r = std::clamp(p.r, grid.r_min, grid.r_max);
    p.phi = std::remainder(p.phi, 2 * kPi);
  }
}

double fit_cost(const std::vector<SphericalPosition>& positions, const std::vector<double>& phases,
                const EstimationContext& ctx, const std::vector<LookObservation>& observations) {
  double cost = 0.0;
  for (size_t l = 0; l < observations.size(); ++l)
    cost += (observations[l].weights.cwiseSqrt().asDiagonal() *
             (observations[l].z - model_observation(positions, phases, ctx, l)))
                .squaredNorm();
  return cost;
}

struct Fit {
  std::vector<SphericalPosition> positions;
  std::vector<double> phases;
  double cost = 0.0;
};

constexpr double kGoodnessFactor = 2.0;  // accepted cost relative to the number of observed entries
constexpr int kRestartPeaks = 4;

// Cyclic re-acquisition: each target is searched again against the others' fitted echoes and the
// joint fit is kept when its cost drops. With several peaks every distinct single-target optimum of the
// residual is tried as a replacement.
void reacquire(Fit& fit, const std::vector<LookObservation>& observations, const EstimationContext& ctx,
               const SearchGrid& grid, const AcquisitionSettings& settings, int cycles, int peaks) {
  const int n = static_cast<int>(fit.positions.size());
  for (int cycle = 0; cycle < cycles && n > 1; ++cycle) {
    bool improved = false;
    for (int k = 0; k < n; ++k) {
      std::vector<SphericalPosition> others;
      std::vector<double> other_phases;
      for (int j = 0; j < n; ++j)
        if (j != k) {
          others.push_back(fit.positions[j]);
          other_phases.push_back(fit.phases[j]);
        }
      std::vector<LookObservation> residual = observations;
      for (size_t l = 0; l < residual.size(); ++l) residual[l].z -= model_observation(others, other_phases, ctx, l);
      std::vector<SphericalPosition> replacements;
      if (peaks <= 1)
        replacements.push_back(estimate_targets_matched(residual, ctx, grid, 1).estimates[0]);
      else
        for (const auto& c : matched_candidates(residual, ctx, grid, peaks)) replacements.push_back(c.position);
      for (const auto& replacement : replacements) {
        std::vector<SphericalPosition> trial = fit.positions;
        trial[k] = replacement;
        RefinedEstimate r =
            refine_targets(trial, fit_phases(trial, ctx, observations), ctx, observations, settings.refine_options);
        clamp_to_grid(r.positions, grid);
        const double c = fit_cost(r.positions, r.phases, ctx, observations);
        if (c < fit.cost * (1 - 1e-9)) {
          fit = {r.positions, r.phases, c};
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
}

// Split moves for a fit in which one estimate sits between two close echoes: another estimate is
// dropped and the ghost is replaced by a pair straddling it in azimuth and range.
void split_ghosts(Fit& fit, const std::vector<LookObservation>& observations, const EstimationContext& ctx,
                  const SearchGrid& grid, const AcquisitionSettings& settings) {
  const int n = static_cast<int>(fit.positions.size());
  const Fit start = fit;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) {
      if (j == k) continue;
      for (double dphi : {0.1, 0.25})
        for (double scale : {1.25, 1.0 / 1.25}) {
          std::vector<SphericalPosition> trial = start.positions;
          const SphericalPosition g = start.positions[k];
          trial[k] = {g.r * scale, g.theta, g.phi - dphi};
          trial[j] = {g.r / scale, g.theta, g.phi + dphi};
          clamp_to_grid(trial, grid);
          RefinedEstimate r =
              refine_targets(trial, fit_phases(trial, ctx, observations), ctx, observations, settings.refine_options);
          clamp_to_grid(r.positions, grid);
          const double c = fit_cost(r.positions, r.phases, ctx, observations);
          if (c < fit.cost * (1 - 1e-9)) fit = {r.positions, r.phases, c};
        }
    }
}

// Greedy acquisition: search one target on the residual, then polish all found targets jointly and
// recompute the residual from the polished model, then run the cyclic re-acquisition.
Fit greedy_fit(const std::vector<LookObservation>& observations, const EstimationContext& ctx, const SearchGrid& grid,
               const AcquisitionSettings& settings, int n_targets, const SphericalPosition* first, EstimateSet& coarse) {
  std::vector<SphericalPosition> found;
  std::vector<double> phases;
  std::vector<LookObservation> residual = observations;
  for (int k = 0; k < n_targets; ++k) {
    SphericalPosition next;
    if (k == 0 && first) {
      next = *first;
    } else {
      const EstimateSet one = estimate_targets_matched(residual, ctx, grid, 1);
      coarse.sweep_objectives.insert(coarse.sweep_objectives.end(), one.sweep_objectives.begin(),
                                     one.sweep_objectives.end());
      next = one.estimates[0];
    }
    coarse.estimates.push_back(next);
    found.push_back(next);
    phases = fit_phases(found, ctx, observations);
    RefinedEstimate r = refine_targets(found, phases, ctx, observations, settings.refine_options);
    clamp_to_grid(r.positions, grid);
    found = r.positions;
    phases = r.phases;
    residual = observations;
    for (size_t l = 0; l < residual.size(); ++l) residual[l].z -= model_observation(found, phases, ctx, l);
  }
  Fit fit{found, phases, fit_cost(found, phases, ctx, observations)};
  reacquire(fit, observations, ctx, grid, settings, settings.cycles, 1);
  return fit;
}

}  // namespace

CMat random_precoder(const AnalogBfMatrix& w_tx, const PropagationMatrix& p_tx, int n_users, double p_max,
                     std::mt19937_64& rng) {
  const CMat g = complex_gaussian(w_tx.n_rf(), n_users, 1.0, rng);
  Eigen::HouseholderQR<CMat> qr(g);
  const CMat q = qr.householderQ() * CMat::Identity(w_tx.n_rf(), n_users);
  return normalize_power(q, w_tx, p_tx, p_max);
}

AcquisitionResult estimate_from_looks(const std::vector<LookObservation>& observations,
                                      const std::vector<SampleCovariance>& covariances,
                                      const EstimationContext& ctx, const SearchGrid& grid,
                                      const AcquisitionSettings& settings, int n_targets) {
  AcquisitionResult out;
  if (settings.statistic == AcquisitionStatistic::Matched && settings.refine) {
    const Fit first = greedy_fit(observations, ctx, grid, settings, n_targets, nullptr, out.coarse);
    Fit best = first;
    // A fit far above the noise floor means the greedy search locked onto a ghost of several
    // coupled echoes. Restart it from the other single-target optima.
    Eigen::Index entries = 0;
    for (const auto& o : observations) entries += o.z.size();
    const double threshold = kGoodnessFactor * static_cast<double>(entries);
    if (best.cost > threshold && n_targets > 1) split_ghosts(best, observations, ctx, grid, settings);
    if (best.cost > threshold && n_targets > 1) reacquire(best, observations, ctx, grid, settings, 2, kRestartPeaks);
    if (best.cost > threshold && n_targets > 1) {
      const std::vector<MatchedCandidate> candidates = matched_candidates(observations, ctx, grid, kRestartPeaks);
      EstimateSet unused;
      for (size_t m = 1; m < candidates.size() && best.cost > threshold; ++m) {
        Fit f = greedy_fit(observations, ctx, grid, settings, n_targets, &candidates[m].position, unused);
        if (f.cost > threshold) reacquire(f, observations, ctx, grid, settings, 2, kRestartPeaks);
        if (f.cost < best.cost) best = f;
      }
    }
    out.estimates = best.positions;
    out.phases = best.phases;
    out.refined = true;
    return out;
  }
  out.coarse = settings.statistic == AcquisitionStatistic::Matched
                   ? estimate_targets_matched(observations, ctx, grid, n_targets)
                   : estimate_targets(covariances, ctx, grid, n_targets);
  out.estimates = out.coarse.estimates;
  if (settings.refine) {
    const std::vector<double> phases = fit_phases(out.estimates, ctx, observations);
    RefinedEstimate r = refine_targets(out.estimates, phases, ctx, observations, settings.refine_options);
    clamp_to_grid(r.positions, grid);
    out.estimates = r.positions;
    out.phases = r.phases;
    out.refined = true;
  }
  return out;
}

AcquisitionResult acquire_targets(const ChannelSet& channels, int n_targets, const SystemConfig& config,
                                  const SearchGrid& grid, const AcquisitionSettings& settings,
                                  const LorentzianCodebook& codebook, std::mt19937_64& rng) {
  if (settings.looks < 1) throw ConfigError("acquisition needs at least one look");
  const int streams = settings.pilot_streams > 0 ? settings.pilot_streams : config.n_rf;
  if (streams > config.n_rf) throw ConfigError("acquisition: more pilot streams than RF chains");
  SystemConfig look_cfg = config;
  if (settings.slots_per_look > 0) look_cfg.t_slots = settings.slots_per_look;

  EstimationContext ctx{config, channels.p_rx, {}};
  std::vector<SampleCovariance> covariances;
  std::vector<LookObservation> observations;
  for (int l = 0; l < settings.looks; ++l) {
    BfConfiguration bf;
    bf.w_rx = random_analog_matrix(rng, Side::Rx, codebook, config);
    bf.w_tx = random_analog_matrix(rng, Side::Tx, codebook, config);
    bf.v = random_precoder(bf.w_tx, channels.p_tx, streams, config.p_max, rng);
    bf.d = -effective_si(bf, channels);
    const SymbolBlock symbols = make_symbols(streams, look_cfg.t_slots, rng);
    const CMat y = synthesize_received(bf, channels, symbols, rng, look_cfg);
    covariances.push_back(sample_covariance(y));
    observations.push_back(matched_observation(y, symbols, bf.w_rx, channels.p_rx, config));
    ctx.looks.push_back({bf.w_rx, channels.p_tx.diagonal.asDiagonal() * bf.w_tx.materialized() * bf.v});
  }

  return estimate_from_looks(observations, covariances, ctx, grid, settings, n_targets);
}

RefinedEstimate refine_from_block(const std::vector<SphericalPosition>& initial, const BfConfiguration& bf,
                                  const ChannelSet& channels, const CMat& y, const SymbolBlock& symbols,
                                  const SystemConfig& config, const SearchGrid& grid, const RefineOptions& options) {
  const EstimationContext ctx = EstimationContext::single(bf, channels, config);
  const std::vector<LookObservation> obs{matched_observation(y, symbols, bf.w_rx, channels.p_rx, config)};
  const std::vector<double> phases = fit_phases(initial, ctx, obs);
  RefinedEstimate r = refine_targets(initial, phases, ctx, obs, options);
  clamp_to_grid(r.positions, grid);
  return r;
}

}  // namespace xlisac
