#pragma once

#include <random>
#include <vector>

#include "xlisac/scenario.hpp"
#include "xlisac/types.hpp"

namespace xlisac {

// Quantized Lorentzian weight set: 0.5(j + e^{j phi}) with phi_k = -pi/2 + k pi / 2^bits.
struct LorentzianCodebook {
  std::vector<double> phases;
  std::vector<cplx> weights;

  static LorentzianCodebook make(int bits);
  int size() const { return static_cast<int>(weights.size()); }
};

// Analog beamformer: one weight per metamaterial, stored as N_RF x N_E.
struct AnalogBfMatrix {
  Side side = Side::Tx;
  CMat weights;

  int n_rf() const { return static_cast<int>(weights.rows()); }
  int n_e() const { return static_cast<int>(weights.cols()); }
  // N x N_RF block matrix, column i holds microstrip i's weights in rows i*N_E .. i*N_E+N_E-1.
  CMat materialized() const;
  // Element-wise weights as a length-N vector in the same row order as materialized().
  CVec stacked() const;
};

cplx lorentzian_weight(double phi);

cplx compose_dma_weight(cplx tilde_w, int i, int n, const SystemConfig& config);

AnalogBfMatrix assemble_analog_matrix(const CMat& weights, Side side, const SystemConfig& config);

CMat extract_weights(const CMat& materialized, int n_rf, int n_e);

struct CodewordProjection {
  CVec values;
  std::vector<int> indices;
};

// Nearest codeword index for one complex value; ties go to the lowest index.
int nearest_codeword(cplx w, const LorentzianCodebook& codebook);

CodewordProjection project_to_codebook(const CVec& w, const LorentzianCodebook& codebook);

AnalogBfMatrix project_analog(const CMat& weights, Side side, const LorentzianCodebook& codebook);

// Codeword vector whose direction best matches v: maximizes |v^H w|^2 / ||w||^2 over
// common phase/scale candidates followed by element-wise coordinate ascent.
CVec fit_codeword_direction(const CVec& v, const LorentzianCodebook& codebook);

// Index of the phi = 0 codeword (0.5 + 0.5j).
int zero_phase_index(const LorentzianCodebook& codebook);

AnalogBfMatrix random_analog_matrix(std::mt19937_64& rng, Side side, const LorentzianCodebook& codebook,
                                    const SystemConfig& config);

}  // namespace xlisac
