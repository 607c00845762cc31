// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "linatt/attention.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace linatt {
namespace {

void RequireOracleSize(std::size_t n) {
  if (n > kOracleMaxPositions) {
    throw ContractViolation("elementwise oracle refuses N=" + std::to_string(n) +
                            " (limit " + std::to_string(kOracleMaxPositions) + ")");
  }
}

// Scalar-loop x * w, used only by the oracles.
std::vector<double> LoopProject(const Matrix& x, const Matrix& w) {
  const std::size_t n = x.rows(), c = x.cols(), k = w.cols();
  std::vector<double> out(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double sum = 0.0;
      for (std::size_t q = 0; q < c; ++q) sum += x(i, q) * w(q, j);
      out[i * k + j] = sum;
    }
  }
  return out;
}

void CheckInputs(const FeatureMap& x, const ProjectionSet& p) {
  p.Validate();
  if (x.n_channels() != p.channels()) {
    throw ContractViolation("feature map has " + std::to_string(x.n_channels()) +
                            " channels, projections expect " +
                            std::to_string(p.channels()));
  }
}

}  // namespace

std::string_view VariantName(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kVanillaSoftmax:
      return "vanilla";
    case AttentionVariant::kLinearQuadraticOrder:
      return "linear_quadratic";
    case AttentionVariant::kLinearLinearOrder:
      return "linear";
  }
  return "unknown";
}

std::optional<AttentionVariant> ParseVariant(std::string_view name) {
  for (auto v : {AttentionVariant::kVanillaSoftmax, AttentionVariant::kLinearQuadraticOrder,
                 AttentionVariant::kLinearLinearOrder}) {
    if (VariantName(v) == name) return v;
  }
  return std::nullopt;
}

AttentionArtifacts VanillaSaForward(const FeatureMap& x, const ProjectionSet& p) {
  Embeddings e = Embed(x, p);
  // Logits are normalized in place: one N x N allocation.
  Matrix attention = MatMulNT(e.z, e.y);
  RowSoftmaxInPlace(attention);
  Matrix out = MatMul(attention, e.phi);
  return {AttentionVariant::kVanillaSoftmax, std::move(attention), std::move(out)};
}

AttentionArtifacts LinearSaForwardQuadratic(const FeatureMap& x, const ProjectionSet& p) {
  Embeddings e = Embed(x, p);
  Matrix map = MatMulNT(e.z, e.y);
  ScaleInPlace(map, 1.0 / static_cast<double>(x.n_positions()));
  Matrix out = MatMul(map, e.phi);
  return {AttentionVariant::kLinearQuadraticOrder, std::move(map), std::move(out)};
}

AttentionArtifacts LinearSaForwardLinear(const FeatureMap& x, const ProjectionSet& p) {
  Embeddings e = Embed(x, p);
  Matrix compact = MatMulTN(e.y, e.phi);
  ScaleInPlace(compact, 1.0 / static_cast<double>(x.n_positions()));
  Matrix out = MatMul(e.z, compact);
  return {AttentionVariant::kLinearLinearOrder, std::move(compact), std::move(out)};
}

AttentionArtifacts Forward(AttentionVariant v, const FeatureMap& x, const ProjectionSet& p) {
  switch (v) {
    case AttentionVariant::kVanillaSoftmax:
      return VanillaSaForward(x, p);
    case AttentionVariant::kLinearQuadraticOrder:
      return LinearSaForwardQuadratic(x, p);
    case AttentionVariant::kLinearLinearOrder:
      return LinearSaForwardLinear(x, p);
  }
  throw ContractViolation("unknown attention variant");
}

Matrix ResidualCombine(const FeatureMap& x, const Matrix& out, double gamma) {
  RequireSameShape(x.values(), out, "residual_combine");
  Matrix result = x.values();
  auto r = result.data();
  auto o = out.data();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += gamma * o[i];
  return result;
}

Matrix ElementwiseWeightedSum(const Matrix& weights, const Matrix& values) {
  RequireOracleSize(weights.rows());
  if (weights.cols() != values.rows()) {
    throw ContractViolation("weighted sum mismatch: " + weights.ShapeString() + " vs " +
                            values.ShapeString());
  }
  std::vector<double> out(weights.rows() * values.cols(), 0.0);
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < weights.cols(); ++k) sum += weights(i, k) * values(k, j);
      out[i * values.cols() + j] = sum;
    }
  }
  return Matrix(weights.rows(), values.cols(), std::move(out));
}

Matrix ElementwiseChannelSum(const Matrix& z, const Matrix& t) {
  RequireOracleSize(z.rows());
  if (z.cols() != t.rows()) {
    throw ContractViolation("channel sum mismatch: " + z.ShapeString() + " vs " +
                            t.ShapeString());
  }
  std::vector<double> out(z.rows() * t.cols(), 0.0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < z.cols(); ++k) sum += t(k, j) * z(i, k);
      out[i * t.cols() + j] = sum;
    }
  }
  return Matrix(z.rows(), t.cols(), std::move(out));
}

Matrix ElementwiseOracleQuadratic(const FeatureMap& x, const ProjectionSet& p) {
  CheckInputs(x, p);
  const std::size_t n = x.n_positions();
  RequireOracleSize(n);
  const std::size_t c = p.channels(), d = p.reduced_channels();
  const auto z = LoopProject(x.values(), p.w_z);
  const auto y = LoopProject(x.values(), p.w_y);
  const auto phi = LoopProject(x.values(), p.w_phi);

  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -HUGE_VAL;
    for (std::size_t k = 0; k < n; ++k) {
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) s += z[i * d + q] * y[k * d + q];
      a[i * n + k] = s;
      mx = std::max(mx, s);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      a[i * n + k] = std::exp(a[i * n + k] - mx);
      total += a[i * n + k];
    }
    for (std::size_t k = 0; k < n; ++k) a[i * n + k] /= total;
  }

  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += a[i * n + k] * phi[k * c + j];
      out[i * c + j] = sum;
    }
  }
  return Matrix(n, c, std::move(out));
}

Matrix ElementwiseOracleLinear(const FeatureMap& x, const ProjectionSet& p) {
  CheckInputs(x, p);
  const std::size_t n = x.n_positions();
  RequireOracleSize(n);
  const std::size_t c = p.channels(), d = p.reduced_channels();
  const auto z = LoopProject(x.values(), p.w_z);
  const auto y = LoopProject(x.values(), p.w_y);
  const auto phi = LoopProject(x.values(), p.w_phi);

  std::vector<double> t(d * c, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t j = 0; j < c; ++j) {
      double sum = 0.0;
      for (std::size_t m = 0; m < n; ++m) sum += y[m * d + k] * phi[m * c + j];
      t[k * c + j] = sum / static_cast<double>(n);
    }
  }
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < d; ++k) sum += t[k * c + j] * z[i * d + k];
      out[i * c + j] = sum;
    }
  }
  return Matrix(n, c, std::move(out));
}

std::optional<std::vector<double>> RankOneChannelScales(const Matrix& w_z, double tolerance) {
  const std::size_t rows = w_z.rows(), cols = w_z.cols();
  std::size_t ref = 0;
  double ref_norm = -1.0;
  for (std::size_t k = 0; k < cols; ++k) {
    double norm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm += w_z(i, k) * w_z(i, k);
    if (norm > ref_norm) {
      ref_norm = norm;
      ref = k;
    }
  }
  if (ref_norm <= 0.0) return std::nullopt;
  const double peak = MaxAbs(w_z);
  std::vector<double> scales(cols);
  for (std::size_t k = 0; k < cols; ++k) {
    double dot = 0.0;
    for (std::size_t i = 0; i < rows; ++i) dot += w_z(i, k) * w_z(i, ref);
    scales[k] = dot / ref_norm;
    for (std::size_t i = 0; i < rows; ++i) {
      if (std::abs(w_z(i, k) - scales[k] * w_z(i, ref)) > tolerance * peak) {
        return std::nullopt;
      }
    }
  }
  return scales;
}

ChannelWeightReport ComputeChannelWeightReport(const FeatureMap& x, const ProjectionSet& p) {
  CheckInputs(x, p);
  if (p.reduction != 1) {
    throw ContractViolation("channel weight report pairs out'_i with z'_i and needs "
                            "reduction 1, got " + std::to_string(p.reduction));
  }
  auto scales = RankOneChannelScales(p.w_z);
  if (!scales) {
    throw ContractViolation("w_z is not rank-one; channel weights are only defined "
                            "when every z channel is a multiple of one direction");
  }

  AttentionArtifacts art = LinearSaForwardLinear(x, p);
  Matrix z = MatMul(x.values(), p.w_z);
  const std::size_t n = x.n_positions(), c = p.channels();

  ChannelWeightReport report;
  report.t = art.map;
  report.weights.assign(c, std::nullopt);
  report.closed_form_weights.assign(c, std::nullopt);
  report.undefined.assign(c, false);

  for (std::size_t i = 0; i < c; ++i) {
    double zz = 0.0, oz = 0.0, out_peak = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      zz += z(m, i) * z(m, i);
      oz += art.output(m, i) * z(m, i);
      out_peak = std::max(out_peak, std::abs(art.output(m, i)));
    }
    if ((*scales)[i] != 0.0) {
      double closed = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        closed += ((*scales)[k] / (*scales)[i]) * art.map(k, i);
      }
      report.closed_form_weights[i] = closed;
    }
    if (zz == 0.0) {
      report.undefined[i] = true;
      continue;
    }
    const double weight = oz / zz;
    report.weights[i] = weight;
    double worst = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      worst = std::max(worst, std::abs(art.output(m, i) - weight * z(m, i)));
    }
    report.residual = std::max(report.residual, worst);
    if (out_peak > 0.0) {
      report.relative_residual = std::max(report.relative_residual, worst / out_peak);
    }
  }
  return report;
}

}  // namespace linatt
