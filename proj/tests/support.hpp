#pragma once

// Shared helpers for the unit and acceptance tests: synthetic data and a
// central finite-difference oracle.

#include "tricrlad/common.hpp"
#include "tricrlad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace tricrlad::testing {

// Normals cluster around 0.5 per dimension (sd 0.08); anomalies are spread
// uniformly over [0, 1]. Ids are 0..n-1 with normals first.
inline Dataset synthetic_dataset(std::size_t n_normal, std::size_t n_anomaly, std::size_t dim,
                                 std::uint64_t seed, const std::string& name = "synthetic") {
  Rng rng(seed);
  Dataset data;
  data.name = name;
  data.dim = dim;
  for (std::size_t i = 0; i < n_normal + n_anomaly; ++i) {
    DataPoint p;
    p.id = static_cast<std::int64_t>(i);
    p.features.resize(static_cast<Eigen::Index>(dim));
    const bool anomaly = i >= n_normal;
    for (std::size_t j = 0; j < dim; ++j) {
      p.features[static_cast<Eigen::Index>(j)] =
          anomaly ? uniform01(rng) : std::clamp(0.5 + 0.08 * standard_normal(rng), 0.0, 1.0);
    }
    p.label = anomaly ? 1 : 0;
    data.points.push_back(std::move(p));
  }
  return data;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * (2.0 * uniform01(rng) - 1.0);
  }
  return m;
}

// Central differences of `loss` w.r.t. every entry of `param`.
inline Matrix numeric_gradient(Matrix& param, const std::function<double()>& loss, double h = 1e-6) {
  Matrix g(param.rows(), param.cols());
  for (Eigen::Index c = 0; c < param.cols(); ++c) {
    for (Eigen::Index r = 0; r < param.rows(); ++r) {
      const double saved = param(r, c);
      param(r, c) = saved + h;
      const double up = loss();
      param(r, c) = saved - h;
      const double down = loss();
      param(r, c) = saved;
      g(r, c) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// |a - b| / max(|a|, |b|) in the Frobenius norm; 0 when both are ~0.
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale < 1e-10) return (analytic - numeric).norm();
  return (analytic - numeric).norm() / scale;
}

}  // namespace tricrlad::testing
