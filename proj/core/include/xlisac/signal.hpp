#pragma once

#include <random>

#include "xlisac/bf_configuration.hpp"
#include "xlisac/channel.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

// Known data symbols of one coherent block. Rows are orthogonal with (1/T) S S^H = stream_power * I.
struct SymbolBlock {
  CMat s;
  double stream_power = 1.0;
};

SymbolBlock make_symbols(int n_users, int t_slots, std::mt19937_64& rng, double stream_power = 1.0);

CMat complex_gaussian(Eigen::Index rows, Eigen::Index cols, double variance, std::mt19937_64& rng);

// Noiseless echo W_RX^H P_RX^H H_R P_TX W_TX V (N_RF x U).
CMat effective_echo(const BfConfiguration& bf, const ChannelSet& channels);

// Effective SI W_RX^H P_RX^H H_SI P_TX W_TX (N_RF x N_RF), before the digital canceller.
CMat effective_si(const BfConfiguration& bf, const ChannelSet& channels);

// Received RX-DMA samples: echo + (effective SI + D) V S + W_RX^H P_RX^H n.
CMat synthesize_received(const BfConfiguration& bf, const ChannelSet& channels, const SymbolBlock& symbols,
                         std::mt19937_64& rng, const SystemConfig& config);

}  // namespace xlisac
