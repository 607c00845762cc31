// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef LINATT_PROJECTIONS_H_
#define LINATT_PROJECTIONS_H_

#include <cstddef>
#include <span>

#include "linatt/matrix.h"

namespace linatt {

// N x C activations, one row per flattened spatial position.
class FeatureMap {
 public:
  explicit FeatureMap(Matrix values);

  std::size_t n_positions() const { return values_.rows(); }
  std::size_t n_channels() const { return values_.cols(); }
  const Matrix& values() const { return values_; }

  static FeatureMap Random(std::size_t n, std::size_t c, Rng& rng);

 private:
  Matrix values_;
};

// Weights of the three 1x1 convolutions. With positions as rows, a 1x1
// convolution is right-multiplication by a C x C' matrix.
struct ProjectionSet {
  Matrix w_z;    // C x C/r
  Matrix w_y;    // C x C/r
  Matrix w_phi;  // C x C
  std::size_t reduction = 8;

  std::size_t channels() const { return w_phi.rows(); }
  std::size_t reduced_channels() const { return w_z.cols(); }

  // Throws ContractViolation if the shapes are inconsistent.
  void Validate() const;
};

struct Embeddings {
  Matrix z;    // N x C/r
  Matrix y;    // N x C/r
  Matrix phi;  // N x C
};

Embeddings Embed(const FeatureMap& x, const ProjectionSet& p);

// Entries i.i.d. uniform in [-1/sqrt(C), 1/sqrt(C)].
ProjectionSet InitProjections(std::size_t channels, std::size_t reduction, Rng& rng);

// Builds w_z whose column k is channel_scales[k] * base_direction, so every
// channel of z is a scalar multiple of x * base_direction. w_y and w_phi are
// drawn as in InitProjections. The reduction is channels / channel_scales.size().
ProjectionSet RankOneProjections(std::size_t channels,
                                 std::span<const double> base_direction,
                                 std::span<const double> channel_scales, Rng& rng);

}  // namespace linatt

#endif  // LINATT_PROJECTIONS_H_
