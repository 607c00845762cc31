// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

// Self-attention forward passes over an N x C feature map.
//
//   vanilla:          out = softmax_rows(z y^T) phi
//   linear, N^2 order: out = ((z y^T) phi) / N
//   linear, N order:   out = z ((y^T phi) / N)
//
// The last two are the same product evaluated in different orders; the
// second never forms an N x N matrix.

#ifndef LINATT_ATTENTION_H_
#define LINATT_ATTENTION_H_

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "linatt/matrix.h"
#include "linatt/projections.h"

namespace linatt {

enum class AttentionVariant { kVanillaSoftmax, kLinearQuadraticOrder, kLinearLinearOrder };

std::string_view VariantName(AttentionVariant v);
std::optional<AttentionVariant> ParseVariant(std::string_view name);

struct AttentionArtifacts {
  AttentionVariant variant;
  // A (N x N) for vanilla, z y^T / N (N x N) for the quadratic order,
  // B = y^T phi / N ((C/r) x C) for the linear order.
  Matrix map;
  Matrix output;  // N x C
};

AttentionArtifacts VanillaSaForward(const FeatureMap& x, const ProjectionSet& p);
AttentionArtifacts LinearSaForwardQuadratic(const FeatureMap& x, const ProjectionSet& p);
AttentionArtifacts LinearSaForwardLinear(const FeatureMap& x, const ProjectionSet& p);

AttentionArtifacts Forward(AttentionVariant v, const FeatureMap& x, const ProjectionSet& p);

// x + gamma * out; SAGAN-style skip connection, kept outside the forwards.
Matrix ResidualCombine(const FeatureMap& x, const Matrix& out, double gamma = 1.0);

// Scalar-loop references. Neither calls into the matrix kernels.
inline constexpr std::size_t kOracleMaxPositions = 64;

// out_ij = sum_k A_ik phi_kj with A = softmax_rows(z y^T).
Matrix ElementwiseOracleQuadratic(const FeatureMap& x, const ProjectionSet& p);
// out_ij = sum_k t_kj z_ik with t_kj = (y'_k . phi'_j) / N.
Matrix ElementwiseOracleLinear(const FeatureMap& x, const ProjectionSet& p);
// out_ij = sum_k weights_ik values_kj over raw matrices, N <= 64.
Matrix ElementwiseWeightedSum(const Matrix& weights, const Matrix& values);
// out_ij = sum_k t_kj z_ik over raw matrices, N <= 64.
Matrix ElementwiseChannelSum(const Matrix& z, const Matrix& t);

struct ChannelWeightReport {
  // Least-squares c_i with out'_i ~ c_i z'_i; empty when z'_i == 0.
  std::vector<std::optional<double>> weights;
  // sum_k (scale_k / scale_i) t_ki, derived from the scalar-multiple
  // structure of z; empty when scale_i == 0.
  std::vector<std::optional<double>> closed_form_weights;
  std::vector<bool> undefined;
  Matrix t;  // (C/r) x C, t_ij = y'_i . phi'_j / N
  // max_i max|out'_i - c_i z'_i|.
  double residual = 0.0;
  // Per-channel residual divided by max|out'_i|, maximized over channels.
  double relative_residual = 0.0;
};

// Requires reduction 1 (out and z share channel indices) and a w_z whose
// columns are scalar multiples of one direction, as built by
// RankOneProjections.
ChannelWeightReport ComputeChannelWeightReport(const FeatureMap& x, const ProjectionSet& p);

// Column scales of a rank-one w_z relative to its first nonzero column, or
// nullopt if w_z is not rank-one to within `tolerance` (relative).
std::optional<std::vector<double>> RankOneChannelScales(const Matrix& w_z,
                                                        double tolerance = 1e-12);

}  // namespace linatt

#endif  // LINATT_ATTENTION_H_
