// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "linatt/channel_attention.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "linatt/attention.h"

namespace linatt {
namespace {

double Sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::vector<double> Unwrap(const std::vector<std::optional<double>>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(e.value_or(std::nan("")));
  return out;
}

}  // namespace

void CAWeights::Validate() const {
  const std::size_t c = w1.rows();
  if (rho == 0 || c == 0 || c % rho != 0) {
    throw ContractViolation("bottleneck reduction " + std::to_string(rho) +
                            " must divide C=" + std::to_string(c));
  }
  if (w1.cols() != c / rho || w2.rows() != c / rho || w2.cols() != c) {
    throw ContractViolation("channel attention weights have shapes " + w1.ShapeString() +
                            " and " + w2.ShapeString() + " for C=" + std::to_string(c) +
                            ", rho=" + std::to_string(rho));
  }
}

CAWeights InitCAWeights(std::size_t channels, std::size_t rho, Rng& rng) {
  if (rho == 0 || channels == 0 || channels % rho != 0) {
    throw ContractViolation("bottleneck reduction " + std::to_string(rho) +
                            " must divide C=" + std::to_string(channels));
  }
  const std::size_t hidden = channels / rho;
  CAWeights w;
  w.rho = rho;
  w.w1 = RandomUniform(channels, hidden, -1.0 / std::sqrt(double(channels)),
                       1.0 / std::sqrt(double(channels)), rng);
  w.w2 = RandomUniform(hidden, channels, -1.0 / std::sqrt(double(hidden)),
                       1.0 / std::sqrt(double(hidden)), rng);
  return w;
}

std::vector<double> GlobalAveragePool(const FeatureMap& x) {
  const Matrix& v = x.values();
  std::vector<double> m(v.cols(), 0.0);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    for (std::size_t k = 0; k < v.cols(); ++k) m[k] += v(i, k);
  }
  for (double& e : m) e /= static_cast<double>(v.rows());
  return m;
}

CAResult CaForward(const FeatureMap& x, const CAWeights& w) {
  w.Validate();
  if (x.n_channels() != w.channels()) {
    throw ContractViolation("feature map has " + std::to_string(x.n_channels()) +
                            " channels, channel attention expects " +
                            std::to_string(w.channels()));
  }
  const std::size_t c = x.n_channels();
  Matrix pooled(1, c, GlobalAveragePool(x));
  Matrix hidden = MatMul(pooled, w.w1);
  for (double& v : hidden.data()) v = std::max(v, 0.0);
  Matrix logits = MatMul(hidden, w.w2);

  std::vector<double> scores(c);
  for (std::size_t k = 0; k < c; ++k) scores[k] = Sigmoid(logits(0, k));

  Matrix out = x.values();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t k = 0; k < c; ++k) row[k] *= scores[k];
  }
  return {std::move(scores), FeatureMap(std::move(out))};
}

ChannelMechanismComparison CompareChannelMechanisms(const FeatureMap& x,
                                                    const ProjectionSet& p_rank1,
                                                    const CAWeights& w, double alpha) {
  const FeatureMap scaled(Scale(x.values(), alpha));
  ChannelMechanismComparison r;
  r.alpha = alpha;

  const ChannelWeightReport base = ComputeChannelWeightReport(x, p_rank1);
  const ChannelWeightReport moved = ComputeChannelWeightReport(scaled, p_rank1);
  r.sa_weights = Unwrap(base.weights);
  r.sa_weights_scaled = Unwrap(moved.weights);
  const double a2 = alpha * alpha;
  double diff = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < r.sa_weights.size(); ++i) {
    if (base.undefined[i] || moved.undefined[i]) continue;
    diff = std::max(diff, std::abs(r.sa_weights_scaled[i] - a2 * r.sa_weights[i]));
    peak = std::max(peak, std::abs(a2 * r.sa_weights[i]));
  }
  r.sa_weight_scaling_error = peak > 0.0 ? diff / peak : diff;

  const Matrix out = LinearSaForwardLinear(x, p_rank1).output;
  const Matrix out_scaled = LinearSaForwardLinear(scaled, p_rank1).output;
  r.sa_output_homogeneity_error =
      MaxAbsRelativeDiff(out_scaled, Scale(out, alpha * a2));

  const CAResult ca = CaForward(x, w);
  const CAResult ca_scaled = CaForward(scaled, w);
  r.ca_scores = ca.scores;
  r.ca_scores_scaled = ca_scaled.scores;
  for (std::size_t k = 0; k < r.ca_scores.size(); ++k) {
    r.ca_score_shift = std::max(r.ca_score_shift,
                                std::abs(r.ca_scores_scaled[k] - r.ca_scores[k]));
  }
  r.ca_output_homogeneity_error =
      MaxAbsRelativeDiff(ca_scaled.out.values(), Scale(ca.out.values(), alpha));
  return r;
}

}  // namespace linatt
