// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

// Squeeze-and-excitation style channel attention:
//   m = mean over positions, s = sigmoid(relu(m w1) w2), out[:,k] = s[k] x[:,k]

#ifndef LINATT_CHANNEL_ATTENTION_H_
#define LINATT_CHANNEL_ATTENTION_H_

#include <cstddef>
#include <vector>

#include "linatt/matrix.h"
#include "linatt/projections.h"

namespace linatt {

struct CAWeights {
  Matrix w1;  // C x C/rho
  Matrix w2;  // C/rho x C
  std::size_t rho = 16;

  std::size_t channels() const { return w1.rows(); }
  void Validate() const;
};

CAWeights InitCAWeights(std::size_t channels, std::size_t rho, Rng& rng);

std::vector<double> GlobalAveragePool(const FeatureMap& x);

struct CAResult {
  std::vector<double> scores;  // s_c, each in (0, 1)
  FeatureMap out;
};

CAResult CaForward(const FeatureMap& x, const CAWeights& w);

struct ChannelMechanismComparison {
  double alpha = 1.0;
  std::vector<double> sa_weights;         // fitted c_i at x
  std::vector<double> sa_weights_scaled;  // fitted c_i at alpha x
  std::vector<double> ca_scores;          // s_c at x
  std::vector<double> ca_scores_scaled;   // s_c at alpha x
  // max_i |c_i(alpha x) - alpha^2 c_i(x)| / max_i |alpha^2 c_i(x)|
  double sa_weight_scaling_error = 0.0;
  // max-abs relative deviation of out(alpha x) from alpha^3 out(x)
  double sa_output_homogeneity_error = 0.0;
  // max_k |s_k(alpha x) - s_k(x)|
  double ca_score_shift = 0.0;
  // max-abs relative deviation of out(alpha x) from alpha out(x)
  double ca_output_homogeneity_error = 0.0;
};

// Runs the linear self-attention module (with rank-one projections, reduction
// 1) and the channel attention module on x and alpha * x. The SA channel
// weights scale as alpha^2 and its output as alpha^3; the CA scores change.
ChannelMechanismComparison CompareChannelMechanisms(const FeatureMap& x,
                                                    const ProjectionSet& p_rank1,
                                                    const CAWeights& w, double alpha);

}  // namespace linatt

#endif  // LINATT_CHANNEL_ATTENTION_H_
