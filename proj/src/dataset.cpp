#include "tricrlad/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tricrlad {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, delimiter)) cells.push_back(cell);
  // A trailing delimiter means an empty last cell.
  if (!line.empty() && line.back() == delimiter) cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return errno == 0 && end == text.c_str() + text.size() && std::isfinite(out);
}

Dataset subset(const Dataset& source, const std::vector<std::size_t>& indices,
               const std::string& suffix) {
  Dataset out;
  out.name = source.name + suffix;
  out.dim = source.dim;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(source.points[i]);
  return out;
}

std::vector<std::size_t> indices_with_label(const Dataset& data, int label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    if (data.points[i].label.value_or(0) == label) out.push_back(i);
  }
  return out;
}

}  // namespace

std::size_t Dataset::count_label(int label) const {
  return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [&](const DataPoint& p) {
    return p.label.has_value() && *p.label == label;
  }));
}

Matrix Dataset::feature_matrix() const {
  Matrix out(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = points[i].features.transpose();
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.label.value_or(0));
  return out;
}

Dataset load_table(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "': missing header row");
  std::vector<std::string> header = split_line(line, options.delimiter);
  for (auto& h : header) h = trim(h);

  const auto label_it = std::find(header.begin(), header.end(), options.label_column);
  if (label_it == header.end()) {
    throw DataError("'" + path.string() + "': missing label column '" + options.label_column + "'");
  }
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  if (header.size() < 2) throw DataError("'" + path.string() + "': no feature columns");

  Dataset data;
  data.name = path.stem().string();
  data.dim = header.size() - 1;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_line(line, options.delimiter);
    if (cells.size() != header.size()) {
      std::ostringstream msg;
      msg << path.string() << ": row " << row << " has " << cells.size() << " columns, expected "
          << header.size();
      throw DataError(msg.str());
    }
    DataPoint point;
    point.id = static_cast<std::int64_t>(row - 1);
    point.features.resize(static_cast<Eigen::Index>(data.dim));
    Eigen::Index f = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double value = 0.0;
      const std::string cell = trim(cells[c]);
      if (!parse_double(cell, value)) {
        std::ostringstream msg;
        msg << path.string() << ": row " << row << ", column '" << header[c]
            << "': non-numeric cell '" << cell << "'";
        throw DataError(msg.str());
      }
      if (c == label_col) {
        if (value != 0.0 && value != 1.0) {
          std::ostringstream msg;
          msg << path.string() << ": row " << row << ", column '" << header[c]
              << "': label must be 0/1, got '" << cell << "'";
          throw DataError(msg.str());
        }
        point.label = static_cast<int>(value);
      } else {
        point.features[f++] = value;
      }
    }
    data.points.push_back(std::move(point));
  }
  return data;
}

MinMaxScaler::MinMaxScaler(Vector min, Vector max) : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) throw DataError("minmax: min and max differ in length");
  if ((max_.array() < min_.array()).any()) throw DataError("minmax: max below min");
}

MinMaxScaler MinMaxScaler::fit(const Dataset& train) {
  if (train.empty()) throw DataError("minmax: cannot fit on an empty dataset");
  MinMaxScaler scaler;
  scaler.min_ = train.points.front().features;
  scaler.max_ = train.points.front().features;
  for (const auto& p : train.points) {
    scaler.min_ = scaler.min_.cwiseMin(p.features);
    scaler.max_ = scaler.max_.cwiseMax(p.features);
  }
  return scaler;
}

Vector MinMaxScaler::transform(const Vector& x) const {
  if (x.size() != min_.size()) {
    throw DataError("minmax: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                    std::to_string(min_.size()) + ")");
  }
  Vector out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double range = max_[j] - min_[j];
    out[j] = range > 0.0 ? std::clamp((x[j] - min_[j]) / range, 0.0, 1.0) : 0.0;
  }
  return out;
}

Dataset MinMaxScaler::transform(const Dataset& data) const {
  if (data.dim != static_cast<std::size_t>(min_.size())) {
    throw DataError("minmax: dimension mismatch (" + std::to_string(data.dim) + " vs " +
                    std::to_string(min_.size()) + ")");
  }
  Dataset out = data;
  for (auto& p : out.points) p.features = transform(p.features);
  return out;
}

Dataset minmax_fit_transform(const Dataset& train, const Dataset& apply_to) {
  return MinMaxScaler::fit(train).transform(apply_to);
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw UsageError("test_fraction must lie in (0, 1)");
  }
  Rng rng(derive_seed(seed, 101));
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (int label : {0, 1}) {
    auto idx = indices_with_label(data, label);
    if (idx.size() < 2) {
      throw DataError("split: need at least 2 points of class " + std::to_string(label) +
                      ", found " + std::to_string(idx.size()));
    }
    shuffle(idx, rng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  // Keep the original row order inside each part.
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset(data, train_idx, "_train"), subset(data, test_idx, "_test")};
}

RegimeSplit build_regime(const Dataset& train, double anomalies_ratio, double contamination_ratio,
                         std::uint64_t seed, const RegimeOptions& options) {
  if (anomalies_ratio < 0.0 || anomalies_ratio > 1.0 || contamination_ratio < 0.0 ||
      contamination_ratio >= 1.0) {
    throw UsageError("regime: anomalies_ratio must lie in [0,1] and contamination_ratio in [0,1)");
  }
  auto anomalies = indices_with_label(train, 1);
  auto normals = indices_with_label(train, 0);
  if (anomalies.size() < 2) {
    throw DataError("regime: train set needs at least 2 anomalies, found " +
                    std::to_string(anomalies.size()));
  }
  if (anomalies_ratio == 0.0 && !options.allow_empty_labeled) {
    throw DataError("regime: Tri-CRLAD requires >=1 labeled anomaly (anomalies_ratio is 0)");
  }

  Rng rng(derive_seed(seed, 202));
  shuffle(anomalies, rng);
  shuffle(normals, rng);

  std::size_t n_labeled = 0;
  if (anomalies_ratio > 0.0) {
    n_labeled = static_cast<std::size_t>(
        std::llround(anomalies_ratio * static_cast<double>(anomalies.size())));
    n_labeled = std::clamp<std::size_t>(n_labeled, 1, anomalies.size());
  }
  const std::size_t available = anomalies.size() - n_labeled;

  std::size_t n_normals = normals.size();
  auto hidden_for = [&](std::size_t normal_count) -> std::size_t {
    const double c = contamination_ratio;
    if (options.base == ContaminationBase::Train) {
      // Against the whole training set size.
      return static_cast<std::size_t>(std::llround(c * static_cast<double>(train.size())));
    }
    return static_cast<std::size_t>(std::llround(c * static_cast<double>(normal_count) / (1.0 - c)));
  };
  std::size_t n_hidden = hidden_for(n_normals);

  if (n_hidden > available) {
    if (options.shortfall == ShortfallPolicy::Error || available == 0) {
      throw DataError("regime: not enough anomalies to reach contamination " +
                      std::to_string(contamination_ratio) + " (need " + std::to_string(n_hidden) +
                      ", have " + std::to_string(available) + ")");
    }
    // Keep every remaining anomaly and drop normals until the ratio holds.
    n_hidden = available;
    const double c = contamination_ratio;
    n_normals = std::min(n_normals, static_cast<std::size_t>(std::llround(
                                        static_cast<double>(n_hidden) * (1.0 - c) / c)));
  }

  std::vector<std::size_t> labeled(anomalies.begin(), anomalies.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  std::vector<std::size_t> unlabeled(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(n_normals));
  unlabeled.insert(unlabeled.end(), anomalies.begin() + static_cast<std::ptrdiff_t>(n_labeled),
                   anomalies.begin() + static_cast<std::ptrdiff_t>(n_labeled + n_hidden));

  RegimeSplit split;
  for (std::size_t i = n_labeled + n_hidden; i < anomalies.size(); ++i) {
    split.discarded.push_back(train.points[anomalies[i]].id);
  }
  for (std::size_t i = n_normals; i < normals.size(); ++i) {
    split.discarded.push_back(train.points[normals[i]].id);
  }
  std::sort(split.discarded.begin(), split.discarded.end());
  std::sort(labeled.begin(), labeled.end());
  std::sort(unlabeled.begin(), unlabeled.end());
  split.d_a = subset(train, labeled, "_labeled");
  split.d_u = subset(train, unlabeled, "_unlabeled");
  split.anomalies_ratio = anomalies_ratio;
  split.contamination_ratio = contamination_ratio;
  split.seed = seed;
  return split;
}

ContaminationBase parse_contamination_base(const std::string& text) {
  if (text == "unlabeled" || text == "d_u") return ContaminationBase::Unlabeled;
  if (text == "train") return ContaminationBase::Train;
  throw UsageError("contamination_base must be 'unlabeled' or 'train', got '" + text + "'");
}

ShortfallPolicy parse_shortfall_policy(const std::string& text) {
  if (text == "error") return ShortfallPolicy::Error;
  if (text == "downsample_normals") return ShortfallPolicy::DownsampleNormals;
  throw UsageError("regime_shortfall must be 'error' or 'downsample_normals', got '" + text + "'");
}

}  // namespace tricrlad
