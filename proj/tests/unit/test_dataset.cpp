#include "doctest.h"
#include "support.hpp"
#include "tricrlad/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace tricrlad;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "tricrlad_unit";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

std::set<std::int64_t> ids_of(const Dataset& d) {
  std::set<std::int64_t> out;
  for (const auto& p : d.points) out.insert(p.id);
  return out;
}

Dataset labeled_dataset(std::size_t normals, std::size_t anomalies) {
  return testing::synthetic_dataset(normals, anomalies, 3, 7);
}

}  // namespace

TEST_CASE("load_table parses a small table") {
  const auto path = write_temp("small.csv", "f1,f2,label\n0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,0\n");
  const Dataset d = load_table(path);
  CHECK(d.dim == 2);
  CHECK(d.size() == 3);
  CHECK(d.count_label(1) == 1);
  CHECK(d.points[1].features[1] == doctest::Approx(0.4));
  CHECK(d.points[2].id == 2);
}

TEST_CASE("load_table accepts the label column in any position") {
  const auto path = write_temp("mid.csv", "f1,label,f2\n1,0,2\n3,1,4\n");
  const Dataset d = load_table(path);
  CHECK(d.dim == 2);
  CHECK(d.points[1].features[0] == 3.0);
  CHECK(d.points[1].features[1] == 4.0);
  CHECK(*d.points[1].label == 1);
}

TEST_CASE("load_table rejects labels other than 0/1") {
  const auto path = write_temp("bad_label.csv", "f1,f2,label\n0.1,0.2,0\n0.3,0.4,2\n");
  try {
    load_table(path);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("label must be 0/1") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
  }
}

TEST_CASE("load_table diagnostics name the row and column") {
  const auto path = write_temp("bad_cell.csv", "a,b,label\n1,x,0\n");
  try {
    load_table(path);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("'b'") != std::string::npos);
  }
  CHECK_THROWS_AS(load_table(write_temp("ragged.csv", "a,b,label\n1,2\n")), DataError);
  CHECK_THROWS_AS(load_table(write_temp("nolabel.csv", "a,b\n1,2\n")), DataError);
  CHECK_THROWS_AS(load_table("/nonexistent/file.csv"), DataError);
}

TEST_CASE("load_table honours delimiter and label column options") {
  const auto path = write_temp("semi.csv", "x;y;is_anomaly\n1;2;1\n3;4;0\n");
  LoadOptions opts;
  opts.delimiter = ';';
  opts.label_column = "is_anomaly";
  const Dataset d = load_table(path, opts);
  CHECK(d.dim == 2);
  CHECK(d.count_label(1) == 1);
}

TEST_CASE("minmax maps the midpoint, constant columns and clamps") {
  Dataset train;
  train.dim = 3;
  train.points.push_back({0, (Vector(3) << 0.0, 4.0, 1.0).finished(), 0});
  train.points.push_back({1, (Vector(3) << 10.0, 4.0, 3.0).finished(), 0});
  Dataset apply = train;
  apply.points = {{5, (Vector(3) << 5.0, 123.0, 5.0).finished(), 0}};
  const Dataset out = minmax_fit_transform(train, apply);
  CHECK(out.points[0].features[0] == doctest::Approx(0.5));
  CHECK(out.points[0].features[1] == 0.0);
  // (5 - 1) / (3 - 1) = 2.0, clamped
  CHECK(out.points[0].features[2] == 1.0);
}

TEST_CASE("minmax rejects dimension mismatches and empty fits") {
  Dataset empty;
  empty.dim = 2;
  CHECK_THROWS_AS(MinMaxScaler::fit(empty), DataError);
  const Dataset d = labeled_dataset(10, 2);
  const MinMaxScaler s = MinMaxScaler::fit(d);
  CHECK_THROWS_AS(s.transform(Vector::Zero(5)), DataError);
}

TEST_CASE("split_train_test is stratified and deterministic") {
  const Dataset d = labeled_dataset(90, 10);
  const auto [train, test] = split_train_test(d, 0.2, 42);
  CHECK(test.size() == 20);
  CHECK(test.count_label(1) == 2);
  CHECK(train.size() == 80);
  CHECK(train.count_label(1) == 8);

  const auto [train2, test2] = split_train_test(d, 0.2, 42);
  CHECK(ids_of(test) == ids_of(test2));

  const auto [train3, test3] = split_train_test(d, 0.2, 43);
  CHECK(ids_of(test) != ids_of(test3));
  CHECK(test3.count_label(1) == 2);
  CHECK(test3.size() == 20);

  std::set<std::int64_t> all = ids_of(train);
  for (auto id : ids_of(test)) CHECK(all.insert(id).second);
  CHECK(all.size() == d.size());
}

TEST_CASE("split_train_test needs two points per class") {
  CHECK_THROWS_AS(split_train_test(labeled_dataset(10, 1), 0.2, 0), DataError);
  CHECK_THROWS_AS(split_train_test(labeled_dataset(10, 2), 1.5, 0), UsageError);
}

TEST_CASE("build_regime solves the contamination target") {
  const Dataset train = labeled_dataset(1000, 100);
  const RegimeSplit r = build_regime(train, 0.1, 0.04, 3);
  CHECK(r.d_a.size() == 10);
  CHECK(r.d_a.count_label(1) == 10);
  CHECK(r.d_u.count_label(0) == 1000);
  // a / (1000 + a) = 0.04 -> a = 41.67 -> 42
  CHECK(r.d_u.count_label(1) == 42);
  std::set<std::int64_t> seen = ids_of(r.d_a);
  for (auto id : ids_of(r.d_u)) CHECK(seen.insert(id).second);
  for (auto id : r.discarded) CHECK(seen.insert(id).second);
  CHECK(seen.size() == train.size());
}

TEST_CASE("build_regime boundaries") {
  const Dataset train = labeled_dataset(200, 20);
  try {
    build_regime(train, 0.0, 0.05, 1);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("requires >=1 labeled anomaly") != std::string::npos);
  }
  RegimeOptions allow;
  allow.allow_empty_labeled = true;
  CHECK(build_regime(train, 0.0, 0.05, 1, allow).d_a.size() == 0);

  const RegimeSplit clean = build_regime(train, 0.1, 0.0, 1);
  CHECK(clean.d_u.count_label(1) == 0);
  CHECK(clean.d_u.size() == 200);
  // at least one labeled anomaly even when the ratio rounds to zero
  CHECK(build_regime(train, 0.01, 0.0, 1).d_a.size() == 1);
}

TEST_CASE("build_regime shortfall policies") {
  // 100 anomalies, 10 labeled, 90 left; 0.1 contamination of 1000 normals needs 111.
  const Dataset train = labeled_dataset(1000, 100);
  RegimeOptions strict;
  strict.shortfall = ShortfallPolicy::Error;
  CHECK_THROWS_AS(build_regime(train, 0.1, 0.1, 5, strict), DataError);

  const RegimeSplit r = build_regime(train, 0.1, 0.1, 5);
  CHECK(r.d_u.count_label(1) == 90);
  CHECK(r.d_u.count_label(0) == 810);
  const double ratio = 90.0 / static_cast<double>(r.d_u.size());
  CHECK(ratio == doctest::Approx(0.1));

  RegimeOptions train_base;
  train_base.base = ContaminationBase::Train;
  const RegimeSplit t = build_regime(train, 0.1, 0.05, 5, train_base);
  CHECK(t.d_u.count_label(1) == 55);
}

TEST_CASE("build_regime is deterministic per seed") {
  const Dataset train = labeled_dataset(300, 40);
  const RegimeSplit a = build_regime(train, 0.2, 0.05, 9);
  const RegimeSplit b = build_regime(train, 0.2, 0.05, 9);
  CHECK(ids_of(a.d_a) == ids_of(b.d_a));
  CHECK(ids_of(a.d_u) == ids_of(b.d_u));
}

TEST_CASE("regime option parsing") {
  CHECK(parse_contamination_base("train") == ContaminationBase::Train);
  CHECK(parse_shortfall_policy("error") == ShortfallPolicy::Error);
  CHECK_THROWS_AS(parse_shortfall_policy("whatever"), UsageError);
}
