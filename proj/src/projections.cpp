// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "linatt/projections.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace linatt {

FeatureMap::FeatureMap(Matrix values) : values_(std::move(values)) {
  if (values_.empty()) throw ContractViolation("feature map must be non-empty");
}

FeatureMap FeatureMap::Random(std::size_t n, std::size_t c, Rng& rng) {
  return FeatureMap(RandomUniform(n, c, -1.0, 1.0, rng));
}

void ProjectionSet::Validate() const {
  const std::size_t c = w_phi.rows();
  if (w_phi.empty() || w_phi.cols() != c) {
    throw ContractViolation("w_phi must be square C x C, got " + w_phi.ShapeString());
  }
  if (w_z.rows() != w_y.rows() || w_z.cols() != w_y.cols()) {
    throw ContractViolation("w_z and w_y shapes differ: " + w_z.ShapeString() +
                            " vs " + w_y.ShapeString());
  }
  if (reduction == 0 || c % reduction != 0) {
    throw ContractViolation("reduction " + std::to_string(reduction) +
                            " does not divide C=" + std::to_string(c));
  }
  if (w_z.rows() != c || w_z.cols() != c / reduction) {
    throw ContractViolation("w_z has shape " + w_z.ShapeString() + ", expected " +
                            std::to_string(c) + "x" + std::to_string(c / reduction));
  }
}

Embeddings Embed(const FeatureMap& x, const ProjectionSet& p) {
  p.Validate();
  if (x.n_channels() != p.channels()) {
    throw ContractViolation("feature map has " + std::to_string(x.n_channels()) +
                            " channels, projections expect " +
                            std::to_string(p.channels()));
  }
  Matrix z = MatMul(x.values(), p.w_z);
  Matrix y = MatMul(x.values(), p.w_y);
  Matrix phi = MatMul(x.values(), p.w_phi);
  return {std::move(z), std::move(y), std::move(phi)};
}

ProjectionSet InitProjections(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (channels == 0 || reduction == 0 || channels % reduction != 0) {
    throw ContractViolation("reduction " + std::to_string(reduction) +
                            " must divide channel count " + std::to_string(channels));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  const std::size_t reduced = channels / reduction;
  ProjectionSet p;
  p.reduction = reduction;
  p.w_z = RandomUniform(channels, reduced, -bound, bound, rng);
  p.w_y = RandomUniform(channels, reduced, -bound, bound, rng);
  p.w_phi = RandomUniform(channels, channels, -bound, bound, rng);
  return p;
}

ProjectionSet RankOneProjections(std::size_t channels,
                                 std::span<const double> base_direction,
                                 std::span<const double> channel_scales, Rng& rng) {
  if (base_direction.size() != channels) {
    throw ContractViolation("base direction has length " +
                            std::to_string(base_direction.size()) + ", expected " +
                            std::to_string(channels));
  }
  if (std::all_of(base_direction.begin(), base_direction.end(),
                  [](double v) { return v == 0.0; })) {
    throw ContractViolation("base direction must be nonzero");
  }
  const std::size_t reduced = channel_scales.size();
  if (reduced == 0 || channels % reduced != 0) {
    throw ContractViolation(std::to_string(reduced) +
                            " channel scales cannot form an output of a " +
                            std::to_string(channels) + "-channel input");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  ProjectionSet p;
  p.reduction = channels / reduced;
  p.w_z = Matrix(channels, reduced);
  for (std::size_t i = 0; i < channels; ++i) {
    for (std::size_t k = 0; k < reduced; ++k) {
      p.w_z(i, k) = channel_scales[k] * base_direction[i];
    }
  }
  p.w_y = RandomUniform(channels, reduced, -bound, bound, rng);
  p.w_phi = RandomUniform(channels, channels, -bound, bound, rng);
  return p;
}

}  // namespace linatt
