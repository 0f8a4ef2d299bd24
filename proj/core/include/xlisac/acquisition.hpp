#pragma once

#include <random>
#include <vector>

#include "xlisac/channel.hpp"
#include "xlisac/codebook.hpp"
#include "xlisac/estimation.hpp"

namespace xlisac {

// Sensing frame used to obtain the initial parameter estimates: several looks, each with
// its own random analog configuration, followed by the grid search and an optional refinement.
enum class AcquisitionStatistic { Matched, Covariance };

struct AcquisitionSettings {
  AcquisitionStatistic statistic = AcquisitionStatistic::Matched;
  int looks = 16;
  int slots_per_look = 0;  // 0 uses t_slots
  int pilot_streams = 0;   // 0 uses one stream per RF chain
  bool refine = true;
  int cycles = 2;  // re-acquisition passes over all targets
  RefineOptions refine_options{};
};

struct AcquisitionResult {
  EstimateSet coarse;
  std::vector<SphericalPosition> estimates;
  std::vector<double> phases;
  bool refined = false;
};

// Random orthonormal N_RF x U precoder scaled so that sum_u ||P W v_u||^2 = p_max.
CMat random_precoder(const AnalogBfMatrix& w_tx, const PropagationMatrix& p_tx, int n_users, double p_max,
                     std::mt19937_64& rng);

// Estimation stage of the acquisition on looks that were already observed. `covariances` is only
// read by the covariance statistic.
AcquisitionResult estimate_from_looks(const std::vector<LookObservation>& observations,
                                      const std::vector<SampleCovariance>& covariances,
                                      const EstimationContext& context, const SearchGrid& grid,
                                      const AcquisitionSettings& settings, int n_targets);

AcquisitionResult acquire_targets(const ChannelSet& channels, int n_targets, const SystemConfig& config,
                                  const SearchGrid& grid, const AcquisitionSettings& settings,
                                  const LorentzianCodebook& codebook, std::mt19937_64& rng);

// Refines `initial` using a single block observed with `bf`.
RefinedEstimate refine_from_block(const std::vector<SphericalPosition>& initial, const BfConfiguration& bf,
                                  const ChannelSet& channels, const CMat& y, const SymbolBlock& symbols,
                                  const SystemConfig& config, const SearchGrid& grid,
                                  const RefineOptions& options = {});

}  // namespace xlisac
