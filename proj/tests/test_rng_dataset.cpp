#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "incrementa/dataset.hpp"
#include "incrementa/errors.hpp"
#include "incrementa/rng.hpp"

using namespace incrementa;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("incrementa_test_" + name);
}

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream out(p);
  out << contents;
}

std::map<std::string, ColumnRole> toy_roles() {
  return {{"y", ColumnRole::outcome}, {"a", ColumnRole::treatment}, {"x1", ColumnRole::covariate}};
}

}  // namespace

TEST_CASE("counter rng is a pure function of seed and position") {
  CounterRng a(SeedSpec{42, 7});
  CounterRng b(SeedSpec{42, 7});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CounterRng c(SeedSpec{42, 8});
  CounterRng d(SeedSpec{43, 7});
  int same_c = 0, same_d = 0;
  CounterRng a2(SeedSpec{42, 7});
  for (int i = 0; i < 100; ++i) {
    const auto v = a2.next_u64();
    if (v == c.next_u64()) ++same_c;
    if (v == d.next_u64()) ++same_d;
  }
  CHECK(same_c == 0);
  CHECK(same_d == 0);
}

TEST_CASE("uniform and normal draws have the expected first moments") {
  CounterRng rng(SeedSpec{1, 0});
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);

  sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("load_csv parses the three-row example") {
  const auto p = temp_file("toy.csv");
  write_file(p, "y,a,x1\n1.0,1,2.0\n0.5,0,1.0\n2.0,1,3.0\n");
  const Dataset d = load_csv(p.string(), toy_roles());
  CHECK(d.n() == 3);
  CHECK(d.p() == 1);
  CHECK(d.y()(0) == 1.0);
  CHECK(d.a()[1] == 0);
  CHECK(d.x()(2, 0) == 3.0);
}

TEST_CASE("non-binary treatment reports the offending row") {
  const auto p = temp_file("bad_a.csv");
  write_file(p, "y,a,x1\n1.0,1,2.0\n0.5,2,1.0\n");
  try {
    load_csv(p.string(), toy_roles());
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("loading the same file twice gives identical datasets") {
  const auto p = temp_file("toy2.csv");
  write_file(p, "y,a,x1\n1.0,1,2.0\n0.5,0,1.0\n2.0,1,3.0\n");
  const Dataset d1 = load_csv(p.string(), toy_roles());
  const Dataset d2 = load_csv(p.string(), toy_roles());
  CHECK(d1.y() == d2.y());
  CHECK(d1.a() == d2.a());
  CHECK(d1.x() == d2.x());
}

TEST_CASE("csv round-trip reproduces values bit for bit") {
  const int n = 50;
  CounterRng rng(SeedSpec{9, 0});
  Eigen::VectorXd y(n);
  std::vector<int> a(n);
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    y(i) = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
    a[i] = rng.bernoulli(0.5);
    x(i, 0) = rng.uniform(-1, 1);
    x(i, 1) = rng.normal();
  }
  y(0) = 0.1;
  y(1) = -1e-17;
  y(2) = 1234567.8901234567;
  const Dataset d(y, a, x, {"x1", "x2"});
  const auto p = temp_file("roundtrip.csv");
  write_csv(d, p.string());
  const Dataset back = load_csv(
      p.string(), {{"y", ColumnRole::outcome},
                   {"a", ColumnRole::treatment},
                   {"x1", ColumnRole::covariate},
                   {"x2", ColumnRole::covariate}});
  CHECK(back.y() == d.y());
  CHECK(back.a() == d.a());
  CHECK(back.x() == d.x());
}

TEST_CASE("schema and empty-file errors") {
  const auto p = temp_file("headeronly.csv");
  write_file(p, "y,a,x1\n");
  CHECK_THROWS_AS(load_csv(p.string(), toy_roles()), Error);

  const auto p2 = temp_file("empty.csv");
  write_file(p2, "");
  CHECK_THROWS_AS(load_csv(p2.string(), toy_roles()), Error);

  const auto p3 = temp_file("unmapped.csv");
  write_file(p3, "y,a,zz\n1,0,2\n");
  CHECK_THROWS_AS(load_csv(p3.string(), toy_roles()), Error);

  // Mapped column missing from the header is a schema error too.
  const auto p4 = temp_file("missingcol.csv");
  write_file(p4, "y,a\n1,0\n");
  CHECK_THROWS_AS(load_csv(p4.string(), toy_roles()), Error);
}

TEST_CASE("non-finite cells are rejected") {
  const auto p = temp_file("nan.csv");
  write_file(p, "y,a,x1\nnan,1,2.0\n");
  CHECK_THROWS_AS(load_csv(p.string(), toy_roles()), Error);
}

TEST_CASE("split_folds balances and is deterministic") {
  const auto f1 = split_folds(10, 2, SeedSpec{5, 1});
  int c0 = 0;
  for (int f : f1) {
    CHECK(f >= 0);
    CHECK(f < 2);
    if (f == 0) ++c0;
  }
  CHECK(c0 == 5);

  const auto f2 = split_folds(10, 1, SeedSpec{5, 1});
  for (int f : f2) CHECK(f == 0);

  const auto f3 = split_folds(7, 3, SeedSpec{5, 1});
  const auto f3b = split_folds(7, 3, SeedSpec{5, 1});
  CHECK(f3 == f3b);
  std::vector<int> sizes(3, 0);
  for (int f : f3) ++sizes[static_cast<size_t>(f)];
  std::multiset<int> got(sizes.begin(), sizes.end());
  CHECK(got == std::multiset<int>({3, 2, 2}));

  CHECK_THROWS_AS(split_folds(3, 4, SeedSpec{}), Error);
  CHECK_THROWS_AS(split_folds(3, 0, SeedSpec{}), Error);
}

TEST_CASE("split_folds matches the documented shuffle") {
  // Independent re-derivation: Fisher-Yates with j = next_u64() % (i+1),
  // i from n-1 down to 1; shuffled position p gets fold p % k.
  const int n = 7, k = 3;
  const SeedSpec seed{123, 9};
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  CounterRng rng(seed);
  for (int i = n - 1; i >= 1; --i) {
    const auto j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<int> expected(n);
  for (int pos = 0; pos < n; ++pos) expected[static_cast<size_t>(order[pos])] = pos % k;
  CHECK(split_folds(n, k, seed) == expected);
}

TEST_CASE("fold assignment partitions the indices") {
  const auto folds = split_folds(103, 5, SeedSpec{77, 3});
  CHECK(folds.size() == 103);
  std::vector<int> sizes(5, 0);
  for (int f : folds) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++sizes[static_cast<size_t>(f)];
  }
  int total = 0;
  for (int s : sizes) {
    total += s;
    CHECK(s >= 20);
    CHECK(s <= 21);
  }
  CHECK(total == 103);
}

TEST_CASE("dataset invariant checks") {
  Eigen::VectorXd y(2);
  y << 1.0, 2.0;
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1.0;
  CHECK_THROWS_AS(Dataset(y, {0, 2}, x, {"x1"}), Error);  // non-binary a
  CHECK_THROWS_AS(Dataset(y, {0}, x, {"x1"}), Error);     // length mismatch
  // Column 0 holds {0,1}, so designating it sensitive is legal:
  CHECK_NOTHROW(Dataset(y, {0, 1}, x, {"x1"}, std::optional<int>(0)));
  // A non-binary column cannot be the sensitive feature.
  Eigen::MatrixXd x2(2, 1);
  x2 << 0.5, 1.0;
  CHECK_THROWS_AS(Dataset(y, {0, 1}, x2, {"x1"}, std::optional<int>(0)), Error);
}
