#pragma once

#include "tricrlad/common.hpp"

#include <cstdint>
#include <vector>

namespace tricrlad {

// Average path length of an unsuccessful BST search over n points:
// c(n) = 2 H(n-1) - 2 (n-1)/n with H(i) = ln(i) + Euler's constant,
// c(1) = 0, c(2) = 1.
double average_path_length(std::size_t n);

class IsolationTree {
 public:
  struct Node {
    // Leaf when left < 0.
    int left = -1;
    int right = -1;
    int split_dim = -1;
    double split_value = 0.0;
    std::size_t size = 0;  // subsample points reaching the node
    int depth = 0;
  };

  static IsolationTree build(const Matrix& data, std::vector<Eigen::Index> sample,
                             std::size_t height_limit, std::uint64_t seed);

  // Edges from the root to the leaf plus c(leaf size).
  double path_length(const Vector& x) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t height_limit() const { return height_limit_; }

 private:
  int grow(const Matrix& data, std::vector<Eigen::Index>& sample, std::size_t begin, std::size_t end,
           int depth, Rng& rng);

  std::vector<Node> nodes_;
  std::size_t height_limit_ = 0;
};

struct IsolationForestConfig {
  std::size_t n_trees = 100;
  std::size_t subsample = 256;
};

class IsolationForest {
 public:
  // Rows of `data` are points. Trees draw their own seeds from `seed`, so
  // they can be built in any order.
  static IsolationForest fit(const Matrix& data, const IsolationForestConfig& config,
                             std::uint64_t seed);

  // 2^(-E[h(x)] / c(psi)); higher = more anomalous, strictly inside (0, 1).
  double score(const Vector& x) const;
  Vector score_all(const Matrix& data) const;
  double mean_path_length(const Vector& x) const;

  std::size_t subsample() const { return subsample_; }
  double normalizer() const { return normalizer_; }
  const std::vector<IsolationTree>& trees() const { return trees_; }

 private:
  std::vector<IsolationTree> trees_;
  std::size_t dim_ = 0;
  std::size_t subsample_ = 0;
  double normalizer_ = 0.0;
};

}  // namespace tricrlad
