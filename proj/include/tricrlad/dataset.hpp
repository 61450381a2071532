#pragma once

#include "tricrlad/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tricrlad {

struct DataPoint {
  std::int64_t id = 0;
  Vector features;
  // 1 = anomaly. Hidden from the agent; only regime construction and
  // evaluation read it.
  std::optional<int> label;
};

struct Dataset {
  std::string name;
  std::size_t dim = 0;
  std::vector<DataPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::size_t count_label(int label) const;
  // Rows = points, in order.
  Matrix feature_matrix() const;
  std::vector<int> labels() const;
};

struct LoadOptions {
  char delimiter = ',';
  std::string label_column = "label";
};

// Reads a delimited text table with a header row. Every column except the
// label column is a numeric feature; the label column must hold 0/1.
// Point ids are the zero-based data row numbers.
Dataset load_table(const std::filesystem::path& path, const LoadOptions& options = {});

// Per-dimension min/max statistics. Constant dimensions map to 0 and values
// outside the fitted range are clamped into [0, 1].
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  MinMaxScaler(Vector min, Vector max);
  static MinMaxScaler fit(const Dataset& train);

  Vector transform(const Vector& x) const;
  Dataset transform(const Dataset& data) const;

  const Vector& min() const { return min_; }
  const Vector& max() const { return max_; }

 private:
  Vector min_;
  Vector max_;
};

Dataset minmax_fit_transform(const Dataset& train, const Dataset& apply_to);

// Stratified split: each class contributes round(test_fraction * n_class)
// points to the test part.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

enum class ContaminationBase { Unlabeled, Train };

// What to do when too few anomalies remain to reach the contamination target.
enum class ShortfallPolicy { Error, DownsampleNormals };

struct RegimeOptions {
  ContaminationBase base = ContaminationBase::Unlabeled;
  ShortfallPolicy shortfall = ShortfallPolicy::DownsampleNormals;
  bool allow_empty_labeled = false;
};

struct RegimeSplit {
  Dataset d_a;
  Dataset d_u;
  Dataset test;
  std::vector<std::int64_t> discarded;
  double anomalies_ratio = 0.0;
  double contamination_ratio = 0.0;
  std::uint64_t seed = 0;
};

RegimeSplit build_regime(const Dataset& train, double anomalies_ratio,
                         double contamination_ratio, std::uint64_t seed,
                         const RegimeOptions& options = {});

ContaminationBase parse_contamination_base(const std::string& text);
ShortfallPolicy parse_shortfall_policy(const std::string& text);

}  // namespace tricrlad
