#include <doctest.h>

#include "ssse/data.hpp"
#include "ssse/errors.hpp"
#include "ssse/io.hpp"
#include "test_support.hpp"

#include <Eigen/SVD>
#include <filesystem>
#include <set>

using namespace ssse;
using namespace ssse::testing;

namespace {

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::path(SSSE_TEST_TMP) / "data_unit" / name;
}

void write(const std::string& name, const std::string& text) { io::write_file_atomic(tmp(name), text); }

std::uint64_t parse_error_row(const std::string& features, const std::string& labels) {
  write("f.csv", features);
  write("l.csv", labels);
  try {
    load_csv(tmp("f.csv"), tmp("l.csv"), TaskKind::Multinomial);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("(row ") != std::string::npos);
    return e.offset();
  }
  FAIL("expected ParseError");
  return 0;
}

}  // namespace

TEST_CASE("blobs with zero spread sit on their centers") {
  const Dataset d = make_blobs(1, 3, {{1.0, 2.0}, {-1.0, 0.5}}, 0.0);
  REQUIRE(d.size() == 6);
  for (Index i = 0; i < 6; ++i) {
    const int c = d.classes()[static_cast<std::size_t>(i)];
    CHECK(c == (i < 3 ? 0 : 1));
    CHECK(d.features()(i, 0) == (c == 0 ? 1.0 : -1.0));
    CHECK(d.features()(i, 1) == (c == 0 ? 2.0 : 0.5));
    CHECK(d.ids()[static_cast<std::size_t>(i)] == i);
  }
  const Dataset attr = make_blobs(1, 3, {{1.0, 2.0}, {-1.0, 0.5}}, 0.0, TaskKind::MultiAttribute);
  CHECK(attr.attributes()(4, 0) == 1);
  CHECK(attr.attributes()(0, 0) == 0);
  CHECK_THROWS_AS(make_blobs(1, 3, {{0, 0}, {1, 1}, {2, 2}}, 1.0, TaskKind::MultiAttribute), InvalidArgument);
}

TEST_CASE("generators are deterministic and produce exact counts") {
  const Dataset a = make_gaussian_classes(3, 4, 6, 25, 3.0, 1.0);
  const Dataset b = make_gaussian_classes(3, 4, 6, 25, 3.0, 1.0);
  CHECK(a.features() == b.features());
  CHECK(a.size() == 100);
  CHECK(a.dim() == 6);
  for (int c = 0; c < 4; ++c) CHECK(std::count(a.classes().begin(), a.classes().end(), c) == 25);
  CHECK(make_gaussian_classes(4, 4, 6, 25, 3.0, 1.0).features() != a.features());

  const Dataset m = make_multi_attribute(5, 4000, 5, {0.5, 0.1}, 2.0, 1.0);
  CHECK(m.dim() == 5);  // constant feature included
  CHECK((m.features().col(0).array() == 1.0).all());
  CHECK(m.attributes().col(0).cast<double>().mean() == doctest::Approx(0.5).epsilon(0.1));
  CHECK(m.attributes().col(1).cast<double>().mean() == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("gaussian class means have the requested norm") {
  const Dataset d = make_gaussian_classes(7, 3, 10, 4000, 5.0, 0.5);
  for (int c = 0; c < 3; ++c) {
    Vector mean = Vector::Zero(10);
    Index count = 0;
    for (Index i = 0; i < d.size(); ++i) {
      if (d.classes()[static_cast<std::size_t>(i)] != c) continue;
      mean += d.features().row(i).transpose();
      ++count;
    }
    CHECK((mean / static_cast<double>(count)).norm() == doctest::Approx(5.0).epsilon(0.01));
  }
}

TEST_CASE("separable subspace instances hit the margin exactly") {
  for (Index c : {Index{2}, Index{3}, Index{6}}) {
    const double eps = 1e-3;
    const auto inst = make_separable_subspace(c, 12, eps, 7, 11);
    CHECK(inst.data.size() == 7 * c);
    const Matrix p = predict_proba(inst.params, inst.data.features());
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index k = 0; k < c; ++k) {
        const double want = k == inst.data.classes()[static_cast<std::size_t>(i)] ? 1.0 - (c - 1) * eps : eps;
        CHECK(std::abs(p(i, k) - want) < 1e-9);
      }
    }
    const Eigen::MatrixXd w = Eigen::Map<const Matrix>(inst.params.values.data(), c, 12);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
    CHECK(svd.rank() == c);
  }
  const auto bin = make_separable_subspace(2, 5, 1e-2, 6, 2, TaskKind::MultiAttribute);
  const Matrix q = predict_proba(bin.params, bin.data.features());
  for (Index i = 0; i < q.rows(); ++i) CHECK(std::abs(q(i, 0) - bin.data.attributes()(i, 0)) == doctest::Approx(1e-2));
  CHECK_THROWS_AS(make_separable_subspace(5, 4, 1e-3, 3, 1), InvalidArgument);
}

TEST_CASE("CSV loading with and without a header") {
  write("f.csv", "a,b,c\n1,2,3\n4,5,6\n");
  write("l.csv", "1\n0\n");
  const Dataset d = load_csv(tmp("f.csv"), tmp("l.csv"), TaskKind::Multinomial);
  REQUIRE(d.size() == 2);
  CHECK(d.dim() == 3);
  CHECK(d.features()(1, 2) == 6.0);
  CHECK(d.classes() == std::vector<int>{1, 0});
  CHECK(d.num_outputs() == 2);
  CHECK(load_csv(tmp("f.csv"), tmp("l.csv"), TaskKind::Multinomial, 5).num_outputs() == 5);

  write("a.csv", "1,0,1\n0,0,1\n");
  const Dataset attr = load_csv(tmp("f.csv"), tmp("a.csv"), TaskKind::MultiAttribute);
  CHECK(attr.num_outputs() == 3);
  CHECK(attr.attributes()(0, 2) == 1);
}

TEST_CASE("CSV errors report the offending file row") {
  CHECK(parse_error_row("1,2\n3,4\n5\n", "0\n1\n0\n") == 3);
  CHECK(parse_error_row("x,y\n1,2\nfoo,4\n", "0\n1\n") == 3);
  CHECK(parse_error_row("1,2\n3,4\n5,6\n", "0\n1\n") == 3);
  CHECK(parse_error_row("1,2\n3,4\n", "0\n1.5\n") == 2);
  CHECK(parse_error_row("1,2\n3,4\n", "0\n-1\n") == 2);
  CHECK(parse_error_row("\n\n", "0\n") == 2);
  CHECK_THROWS(load_csv(tmp("missing.csv"), tmp("l.csv"), TaskKind::Multinomial));
}

TEST_CASE("CSV round trip preserves every value") {
  Rng rng(8);
  const Dataset d = random_multinomial(rng, 9, 4, 3);
  save_csv(d, tmp("rt_f.csv"), tmp("rt_l.csv"));
  const Dataset back = load_csv(tmp("rt_f.csv"), tmp("rt_l.csv"), TaskKind::Multinomial, 3);
  CHECK(back.features() == d.features());
  CHECK(back.classes() == d.classes());
  const Dataset a = random_attributes(rng, 6, 2, 3);
  save_csv(a, tmp("ra_f.csv"), tmp("ra_l.csv"));
  CHECK(load_csv(tmp("ra_f.csv"), tmp("ra_l.csv"), TaskKind::MultiAttribute).attributes() == a.attributes());
}

TEST_CASE("train/test split partitions the ids") {
  const Dataset d = make_gaussian_classes(1, 3, 2, 10, 2.0, 1.0);
  const TrainTest tt = split_train_test(d, 0.25, 9);
  CHECK(tt.test.size() == 8);
  CHECK(tt.train.size() == 22);
  std::set<SampleId> all(tt.train.ids().begin(), tt.train.ids().end());
  all.insert(tt.test.ids().begin(), tt.test.ids().end());
  CHECK(all.size() == 30);
  CHECK(std::is_sorted(tt.train.ids().begin(), tt.train.ids().end()));
  CHECK(split_train_test(d, 0.25, 9).test.ids() == tt.test.ids());
  CHECK(split_train_test(d, 0.25, 10).test.ids() != tt.test.ids());
  CHECK_THROWS_AS(split_train_test(d, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(split_train_test(d, 0.001, 1), InvalidArgument);
}

TEST_CASE("removal splits take ceil(fraction * matches) samples") {
  const Dataset d = make_gaussian_classes(2, 2, 2, 10, 2.0, 1.0);
  const TrainTest tt = split_train_test(d, 0.2, 3);
  RemovalSpec spec;
  spec.index = 1;
  spec.fraction = 0.5;
  spec.seed = 4;
  const SplitSet s = build_splits(tt.train, tt.test, spec);
  const auto matches = std::count(tt.train.classes().begin(), tt.train.classes().end(), 1);
  CHECK(static_cast<long>(s.removed.size()) == (matches + 1) / 2);
  CHECK(s.removed.size() + s.lko_train.size() == static_cast<std::size_t>(tt.train.size()));
  CHECK(std::is_sorted(s.removed.begin(), s.removed.end()));
  for (SampleId id : s.removed) CHECK(tt.train.classes()[static_cast<std::size_t>(tt.train.row_of(id))] == 1);
  for (SampleId id : s.removed_test) CHECK(tt.test.classes()[static_cast<std::size_t>(tt.test.row_of(id))] == 1);
  CHECK(s.removed_test.size() + s.lko_test.size() == static_cast<std::size_t>(tt.test.size()));
  CHECK(build_splits(tt.train, tt.test, spec).removed == s.removed);

  const Dataset ten = make_gaussian_classes(1, 2, 1, 5, 1.0, 1.0);
  RemovalSpec half{RemovalSpec::Target::Class, 0, 0.5, 1};
  CHECK(build_splits(ten, ten, half).removed.size() == 3);

  spec.index = 5;
  CHECK_THROWS_AS(build_splits(tt.train, tt.test, spec), InvalidArgument);
  spec.index = 0;
  spec.target = RemovalSpec::Target::Attribute;
  CHECK_THROWS_AS(build_splits(tt.train, tt.test, spec), InvalidArgument);
}
