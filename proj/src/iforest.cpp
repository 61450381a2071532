#include "tricrlad/iforest.hpp"

#include <algorithm>
#include <cmath>

namespace tricrlad {

namespace {
constexpr double kEulerGamma = 0.5772156649;
}

double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + kEulerGamma) - 2.0 * m / static_cast<double>(n);
}

IsolationTree IsolationTree::build(const Matrix& data, std::vector<Eigen::Index> sample,
                                   std::size_t height_limit, std::uint64_t seed) {
  IsolationTree tree;
  tree.height_limit_ = height_limit;
  Rng rng(seed);
  tree.grow(data, sample, 0, sample.size(), 0, rng);
  return tree;
}

int IsolationTree::grow(const Matrix& data, std::vector<Eigen::Index>& sample, std::size_t begin,
                        std::size_t end, int depth, Rng& rng) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{.size = end - begin, .depth = depth});
  if (end - begin <= 1 || static_cast<std::size_t>(depth) >= height_limit_) return index;

  // Only dimensions that still vary inside this node can isolate anything.
  std::vector<int> candidates;
  std::vector<double> lo;
  std::vector<double> hi;
  for (Eigen::Index dim = 0; dim < data.cols(); ++dim) {
    double mn = data(sample[begin], dim);
    double mx = mn;
    for (std::size_t i = begin + 1; i < end; ++i) {
      mn = std::min(mn, data(sample[i], dim));
      mx = std::max(mx, data(sample[i], dim));
    }
    if (mx > mn) {
      candidates.push_back(static_cast<int>(dim));
      lo.push_back(mn);
      hi.push_back(mx);
    }
  }
  if (candidates.empty()) return index;

  const std::size_t pick = uniform_index(rng, candidates.size());
  const int dim = candidates[pick];
  double value = lo[pick];
  while (!(value > lo[pick] && value < hi[pick])) {
    value = lo[pick] + uniform01(rng) * (hi[pick] - lo[pick]);
  }

  const auto mid_it = std::partition(sample.begin() + static_cast<std::ptrdiff_t>(begin),
                                     sample.begin() + static_cast<std::ptrdiff_t>(end),
                                     [&](Eigen::Index row) { return data(row, dim) < value; });
  const auto mid = static_cast<std::size_t>(mid_it - sample.begin());

  nodes_[static_cast<std::size_t>(index)].split_dim = dim;
  nodes_[static_cast<std::size_t>(index)].split_value = value;
  const int left = grow(data, sample, begin, mid, depth + 1, rng);
  const int right = grow(data, sample, mid, end, depth + 1, rng);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

double IsolationTree::path_length(const Vector& x) const {
  const Node* node = &nodes_.front();
  while (node->left >= 0) {
    node = &nodes_[static_cast<std::size_t>(x[node->split_dim] < node->split_value ? node->left : node->right)];
  }
  return static_cast<double>(node->depth) + average_path_length(node->size);
}

IsolationForest IsolationForest::fit(const Matrix& data, const IsolationForestConfig& config,
                                     std::uint64_t seed) {
  if (data.rows() < 2) throw DataError("iforest: need at least 2 points");
  if (config.subsample < 2) throw UsageError("iforest: subsample must be >= 2");
  if (config.n_trees < 1) throw UsageError("iforest: n_trees must be >= 1");

  IsolationForest forest;
  forest.dim_ = static_cast<std::size_t>(data.cols());
  forest.subsample_ = std::min<std::size_t>(config.subsample, static_cast<std::size_t>(data.rows()));
  forest.normalizer_ = average_path_length(forest.subsample_);
  const auto height = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(forest.subsample_))));

  std::vector<Eigen::Index> all(static_cast<std::size_t>(data.rows()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);

  forest.trees_.reserve(config.n_trees);
  for (std::size_t t = 0; t < config.n_trees; ++t) {
    Rng rng(derive_seed(seed, 2 * t));
    // Partial Fisher-Yates: the first `subsample_` entries form the sample.
    std::vector<Eigen::Index> pool = all;
    for (std::size_t i = 0; i < forest.subsample_; ++i) {
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    }
    pool.resize(forest.subsample_);
    forest.trees_.push_back(IsolationTree::build(data, std::move(pool), height, derive_seed(seed, 2 * t + 1)));
  }
  return forest;
}

double IsolationForest::mean_path_length(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim_) {
    throw UsageError("iforest: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(dim_) + ")");
  }
  double total = 0.0;
  for (const auto& tree : trees_) total += tree.path_length(x);
  return total / static_cast<double>(trees_.size());
}

double IsolationForest::score(const Vector& x) const {
  return std::exp2(-mean_path_length(x) / normalizer_);
}

Vector IsolationForest::score_all(const Matrix& data) const {
  Vector out(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i) out[i] = score(data.row(i).transpose());
  return out;
}

}  // namespace tricrlad
