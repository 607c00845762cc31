// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

// Hand-written backward passes. Every routine differentiates the scalar loss
// L = <output, upstream> (Frobenius inner product) and recomputes its forward.

#ifndef LINATT_GRADIENTS_H_
#define LINATT_GRADIENTS_H_

#include <functional>
#include <stdexcept>

#include "linatt/attention.h"
#include "linatt/channel_attention.h"
#include "linatt/matrix.h"
#include "linatt/projections.h"

namespace linatt {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradientBundle {
  Matrix d_x;     // N x C
  Matrix d_wz;    // C x C/r
  Matrix d_wy;    // C x C/r
  Matrix d_wphi;  // C x C
  double loss = 0.0;
};

struct CAGradients {
  Matrix d_x;   // N x C
  Matrix d_w1;  // C x C/rho
  Matrix d_w2;  // C/rho x C
  double loss = 0.0;
};

// The softmax Jacobian is applied row by row as diag(a) - a a^T.
GradientBundle BackwardVanilla(const FeatureMap& x, const ProjectionSet& p,
                               const Matrix& upstream);
// Linear order; no N x N intermediate is formed.
GradientBundle BackwardLinear(const FeatureMap& x, const ProjectionSet& p,
                              const Matrix& upstream);
// Same function as BackwardLinear, differentiated through z y^T.
GradientBundle BackwardLinearQuadratic(const FeatureMap& x, const ProjectionSet& p,
                                       const Matrix& upstream);

GradientBundle Backward(AttentionVariant v, const FeatureMap& x, const ProjectionSet& p,
                        const Matrix& upstream);

CAGradients BackwardCa(const FeatureMap& x, const CAWeights& w, const Matrix& upstream);

inline constexpr double kDefaultFiniteDifferenceStep = 1e-5;

// Central differences (f(theta + h e_k) - f(theta - h e_k)) / 2h for every
// coordinate k. h must lie in [1e-7, 1e-3]; throws NumericalError if f
// returns a non-finite value.
Matrix FiniteDifferenceOracle(const std::function<double(const Matrix&)>& f,
                              const Matrix& theta, double h = kDefaultFiniteDifferenceStep);

// |a - n| / max(|a|, |n|, 1e-8), maximized over entries.
double MaxRelativeError(const Matrix& analytic, const Matrix& numeric);

struct GradientCheck {
  double d_x = 0.0;
  double d_w_first = 0.0;   // w_z or w1
  double d_w_second = 0.0;  // w_y or w2
  double d_w_third = 0.0;   // w_phi; unused for channel attention
  double worst() const;
};

// Compares the analytic gradients against FiniteDifferenceOracle.
GradientCheck CheckAttentionGradients(AttentionVariant v, const FeatureMap& x,
                                      const ProjectionSet& p, const Matrix& upstream,
                                      double h = kDefaultFiniteDifferenceStep);
GradientCheck CheckCaGradients(const FeatureMap& x, const CAWeights& w,
                               const Matrix& upstream,
                               double h = kDefaultFiniteDifferenceStep);

}  // namespace linatt

#endif  // LINATT_GRADIENTS_H_
