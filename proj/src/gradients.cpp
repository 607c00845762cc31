// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "linatt/gradients.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace linatt {
namespace {

void CheckUpstream(const FeatureMap& x, const Matrix& upstream) {
  if (upstream.rows() != x.n_positions() || upstream.cols() != x.n_channels()) {
    throw ContractViolation("upstream gradient has shape " + upstream.ShapeString() +
                            ", expected " + x.values().ShapeString());
  }
}

// Shared tail of every attention backward: maps d_z, d_y, d_phi onto the
// projection weights and the input. All five results are fresh allocations.
GradientBundle FinishBundle(const FeatureMap& x, const ProjectionSet& p, const Matrix& d_z,
                            const Matrix& d_y, const Matrix& d_phi, double loss) {
  const Matrix& xv = x.values();
  Matrix d_wz = MatMulTN(xv, d_z);
  Matrix d_wy = MatMulTN(xv, d_y);
  Matrix d_wphi = MatMulTN(xv, d_phi);
  Matrix d_x = MatMulNT(d_z, p.w_z);
  Gemm(d_y, Transpose::kNo, p.w_y, Transpose::kYes, d_x, true);
  Gemm(d_phi, Transpose::kNo, p.w_phi, Transpose::kYes, d_x, true);
  return {std::move(d_x), std::move(d_wz), std::move(d_wy), std::move(d_wphi), loss};
}

// Perturbs one matrix held inside `owner` and evaluates `loss`.
template <typename Owner>
Matrix NumericGradient(Owner owner, Matrix Owner::*field,
                       const std::function<double(const Owner&)>& loss, double h) {
  const Matrix theta = owner.*field;
  return FiniteDifferenceOracle(
      [&](const Matrix& m) {
        owner.*field = m;
        return loss(owner);
      },
      theta, h);
}

}  // namespace

GradientBundle BackwardVanilla(const FeatureMap& x, const ProjectionSet& p,
                               const Matrix& upstream) {
  CheckUpstream(x, upstream);
  Embeddings e = Embed(x, p);
  Matrix attention = MatMulNT(e.z, e.y);
  RowSoftmaxInPlace(attention);
  Matrix out = MatMul(attention, e.phi);
  const double loss = FrobeniusDot(out, upstream);

  // d_scores starts as dL/dA and is turned into dL/d(z y^T) row by row.
  Matrix d_scores = MatMulNT(upstream, e.phi);
  for (std::size_t i = 0; i < attention.rows(); ++i) {
    auto a = attention.row(i);
    auto g = d_scores.row(i);
    double dot = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * g[k];
    for (std::size_t k = 0; k < a.size(); ++k) g[k] = a[k] * (g[k] - dot);
  }
  Matrix d_phi = MatMulTN(attention, upstream);
  Matrix d_z = MatMul(d_scores, e.y);
  Matrix d_y = MatMulTN(d_scores, e.z);
  return FinishBundle(x, p, d_z, d_y, d_phi, loss);
}

GradientBundle BackwardLinear(const FeatureMap& x, const ProjectionSet& p,
                              const Matrix& upstream) {
  CheckUpstream(x, upstream);
  const double inv_n = 1.0 / static_cast<double>(x.n_positions());
  Embeddings e = Embed(x, p);
  Matrix compact = MatMulTN(e.y, e.phi);
  ScaleInPlace(compact, inv_n);
  Matrix out = MatMul(e.z, compact);
  const double loss = FrobeniusDot(out, upstream);

  Matrix d_z = MatMulNT(upstream, compact);
  Matrix d_compact = MatMulTN(e.z, upstream);
  Matrix d_y = MatMulNT(e.phi, d_compact);
  ScaleInPlace(d_y, inv_n);
  Matrix d_phi = MatMul(e.y, d_compact);
  ScaleInPlace(d_phi, inv_n);
  return FinishBundle(x, p, d_z, d_y, d_phi, loss);
}

GradientBundle BackwardLinearQuadratic(const FeatureMap& x, const ProjectionSet& p,
                                       const Matrix& upstream) {
  CheckUpstream(x, upstream);
  const double inv_n = 1.0 / static_cast<double>(x.n_positions());
  Embeddings e = Embed(x, p);
  Matrix map = MatMulNT(e.z, e.y);
  ScaleInPlace(map, inv_n);
  Matrix out = MatMul(map, e.phi);
  const double loss = FrobeniusDot(out, upstream);

  // dL/d(z y^T) = (upstream phi^T) / N
  Matrix d_map = MatMulNT(upstream, e.phi);
  ScaleInPlace(d_map, inv_n);
  Matrix d_phi = MatMulTN(map, upstream);
  Matrix d_z = MatMul(d_map, e.y);
  Matrix d_y = MatMulTN(d_map, e.z);
  return FinishBundle(x, p, d_z, d_y, d_phi, loss);
}

GradientBundle Backward(AttentionVariant v, const FeatureMap& x, const ProjectionSet& p,
                        const Matrix& upstream) {
  switch (v) {
    case AttentionVariant::kVanillaSoftmax:
      return BackwardVanilla(x, p, upstream);
    case AttentionVariant::kLinearQuadraticOrder:
      return BackwardLinearQuadratic(x, p, upstream);
    case AttentionVariant::kLinearLinearOrder:
      return BackwardLinear(x, p, upstream);
  }
  throw ContractViolation("unknown attention variant");
}

CAGradients BackwardCa(const FeatureMap& x, const CAWeights& w, const Matrix& upstream) {
  w.Validate();
  CheckUpstream(x, upstream);
  if (x.n_channels() != w.channels()) {
    throw ContractViolation("feature map has " + std::to_string(x.n_channels()) +
                            " channels, channel attention expects " +
                            std::to_string(w.channels()));
  }
  const Matrix& xv = x.values();
  const std::size_t n = xv.rows(), c = xv.cols();

  Matrix pooled(1, c, GlobalAveragePool(x));
  Matrix pre = MatMul(pooled, w.w1);
  Matrix hidden = pre;
  for (double& v : hidden.data()) v = std::max(v, 0.0);
  Matrix logits = MatMul(hidden, w.w2);
  std::vector<double> s(c);
  for (std::size_t k = 0; k < c; ++k) s[k] = 1.0 / (1.0 + std::exp(-logits(0, k)));

  double loss = 0.0;
  Matrix d_logits(1, c);
  for (std::size_t k = 0; k < c; ++k) {
    double d_score = 0.0;
    for (std::size_t i = 0; i < n; ++i) d_score += upstream(i, k) * xv(i, k);
    loss += s[k] * d_score;
    d_logits(0, k) = d_score * s[k] * (1.0 - s[k]);
  }
  Matrix d_w2 = MatMulTN(hidden, d_logits);
  Matrix d_pre = MatMulNT(d_logits, w.w2);
  for (std::size_t j = 0; j < d_pre.cols(); ++j) {
    if (pre(0, j) <= 0.0) d_pre(0, j) = 0.0;
  }
  Matrix d_w1 = MatMulTN(pooled, d_pre);
  Matrix d_pooled = MatMulNT(d_pre, w.w1);

  Matrix d_x(n, c);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      d_x(i, k) = upstream(i, k) * s[k] + d_pooled(0, k) * inv_n;
    }
  }
  return {std::move(d_x), std::move(d_w1), std::move(d_w2), loss};
}

Matrix FiniteDifferenceOracle(const std::function<double(const Matrix&)>& f,
                              const Matrix& theta, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw ContractViolation("finite difference step must lie in [1e-7, 1e-3], got " +
                            std::to_string(h));
  }
  Matrix probe = theta;
  Matrix grad(theta.rows(), theta.cols());
  auto pd = probe.data();
  auto gd = grad.data();
  for (std::size_t k = 0; k < pd.size(); ++k) {
    const double original = pd[k];
    pd[k] = original + h;
    const double up = f(probe);
    pd[k] = original - h;
    const double down = f(probe);
    pd[k] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("non-finite function value at coordinate " + std::to_string(k));
    }
    gd[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double MaxRelativeError(const Matrix& analytic, const Matrix& numeric) {
  RequireSameShape(analytic, numeric, "relative error");
  double worst = 0.0;
  auto a = analytic.data();
  auto n = numeric.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(n[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
  }
  return worst;
}

double GradientCheck::worst() const {
  return std::max({d_x, d_w_first, d_w_second, d_w_third});
}

GradientCheck CheckAttentionGradients(AttentionVariant v, const FeatureMap& x,
                                      const ProjectionSet& p, const Matrix& upstream,
                                      double h) {
  const GradientBundle g = Backward(v, x, p, upstream);
  const std::function<double(const ProjectionSet&)> loss_of_p = [&](const ProjectionSet& q) {
    return FrobeniusDot(Forward(v, x, q).output, upstream);
  };
  const auto loss_of_x = [&](const Matrix& m) {
    return FrobeniusDot(Forward(v, FeatureMap(m), p).output, upstream);
  };
  GradientCheck r;
  r.d_x = MaxRelativeError(g.d_x, FiniteDifferenceOracle(loss_of_x, x.values(), h));
  r.d_w_first = MaxRelativeError(g.d_wz, NumericGradient(p, &ProjectionSet::w_z, loss_of_p, h));
  r.d_w_second = MaxRelativeError(g.d_wy, NumericGradient(p, &ProjectionSet::w_y, loss_of_p, h));
  r.d_w_third =
      MaxRelativeError(g.d_wphi, NumericGradient(p, &ProjectionSet::w_phi, loss_of_p, h));
  return r;
}

GradientCheck CheckCaGradients(const FeatureMap& x, const CAWeights& w,
                               const Matrix& upstream, double h) {
  const CAGradients g = BackwardCa(x, w, upstream);
  const std::function<double(const CAWeights&)> loss_of_w = [&](const CAWeights& q) {
    return FrobeniusDot(CaForward(x, q).out.values(), upstream);
  };
  const auto loss_of_x = [&](const Matrix& m) {
    return FrobeniusDot(CaForward(FeatureMap(m), w).out.values(), upstream);
  };
  GradientCheck r;
  r.d_x = MaxRelativeError(g.d_x, FiniteDifferenceOracle(loss_of_x, x.values(), h));
  r.d_w_first = MaxRelativeError(g.d_w1, NumericGradient(w, &CAWeights::w1, loss_of_w, h));
  r.d_w_second = MaxRelativeError(g.d_w2, NumericGradient(w, &CAWeights::w2, loss_of_w, h));
  return r;
}

}  // namespace linatt
