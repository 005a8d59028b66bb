// Copyright 2026 The mamba-icl Authors. Apache 2.0 License.

#include "mamba_icl/common.hpp"

namespace mamba_icl {

Vec NormalSampler::vector(Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist_(rng_);
  return v;
}

// Column-major fill so a matrix equals its columns drawn as vectors in order.
Mat NormalSampler::matrix(Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist_(rng_);
  return m;
}

}  // namespace mamba_icl
