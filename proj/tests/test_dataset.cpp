#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mdt/dataset.hpp"
#include "mdt/rng.hpp"

using namespace mdt;

namespace {

Column make_col(std::string name, VarKind kind, std::vector<double> v,
                std::vector<std::uint8_t> m) {
  return Column{std::move(name), std::move(kind), std::move(v), std::move(m)};
}

}  // namespace

TEST_CASE("complete_rows identity and annihilation") {
  Dataset d(3);
  d.add_column(make_col("a", VarKind::binary(), {0, 1, 1}, {0, 0, 0}));
  d.add_column(make_col("b", VarKind::continuous(), {1.5, -2.0, 0.25}, {0, 0, 0}));
  const std::vector<std::string> cols = {"a", "b"};
  const Dataset full = complete_rows(d, cols);
  CHECK(full.n_rows() == 3);
  for (std::size_t r = 0; r < 3; ++r) CHECK(full.value("b", r) == d.value("b", r));

  Dataset e(3);
  e.add_column(make_col("a", VarKind::binary(), {0, 1, 1}, {1, 0, 0}));
  e.add_column(make_col("b", VarKind::continuous(), {1.5, -2.0, 0.25}, {0, 1, 1}));
  CHECK(complete_rows(e, cols).n_rows() == 0);

  CHECK_THROWS_AS(complete_rows(d, std::vector<std::string>{"zz"}),
                  std::invalid_argument);
}

TEST_CASE("complete_rows agrees with a brute-force row scan") {
  // 6-row toy, mask pattern enumerated by hand below
  Dataset d(6);
  d.add_column(make_col("x", VarKind::continuous(), {1, 2, 3, 4, 5, 6},
                        {0, 1, 0, 0, 1, 0}));
  d.add_column(make_col("y", VarKind::continuous(), {9, 8, 7, 6, 5, 4},
                        {0, 0, 1, 0, 0, 0}));

  // independent oracle: explicit scan
  std::vector<std::size_t> expect;
  for (std::size_t r = 0; r < 6; ++r)
    if (!d.is_missing("x", r) && !d.is_missing("y", r)) expect.push_back(r);
  CHECK(expect == std::vector<std::size_t>{0, 3, 5});

  const std::vector<std::string> cols = {"x", "y"};
  const Dataset kept = complete_rows(d, cols);
  REQUIRE(kept.n_rows() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(kept.value("x", i) == d.value("x", expect[i]));
    CHECK(kept.value("y", i) == d.value("y", expect[i]));
  }
}

TEST_CASE("missingness margins") {
  Dataset d(4);
  d.add_column(make_col("w", VarKind::continuous(), {1, 2, 3, 4}, {0, 0, 0, 0}));
  auto m0 = missingness_margins(d);
  CHECK(m0.per_column.at("w") == 0.0);

  Dataset e(4);
  e.add_column(make_col("w", VarKind::continuous(), {1, 2, 3, 4}, {0, 1, 0, 0}));
  CHECK(missingness_margins(e).per_column.at("w") == doctest::Approx(0.25));
}

TEST_CASE("group margins match an exhaustive count oracle") {
  Dataset d(10);
  const std::vector<std::uint8_t> ma = {0, 1, 0, 0, 1, 0, 0, 0, 1, 0};
  const std::vector<std::uint8_t> my = {0, 1, 1, 0, 0, 0, 1, 0, 0, 0};
  d.add_column(make_col("A", VarKind::binary(), std::vector<double>(10, 1.0), ma));
  d.add_column(make_col("Y", VarKind::continuous(), std::vector<double>(10, 0.0), my));

  std::size_t cnt = 0;
  for (std::size_t r = 0; r < 10; ++r)
    if (ma[r] || my[r]) ++cnt;

  const auto m = missingness_margins(d, {{"A/Y", {"A", "Y"}}});
  CHECK(m.per_group.at("A/Y") == doctest::Approx(static_cast<double>(cnt) / 10.0));
  CHECK(cnt == 5);
}

TEST_CASE("csv round trip is bit exact") {
  RngStream rng(77, 0, "csv");
  Dataset d(50);
  {
    std::vector<double> v(50);
    std::vector<std::uint8_t> m(50, 0);
    for (auto& x : v) x = rng.normal() * 1e8;
    for (std::size_t i = 0; i < 50; ++i)
      if (rng.bernoulli(0.2)) m[i] = 1;
    d.add_column(make_col("cont", VarKind::continuous(), std::move(v), std::move(m)));
  }
  {
    std::vector<double> v(50);
    std::vector<std::uint8_t> m(50, 0);
    for (auto& x : v) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
    d.add_column(make_col("bin", VarKind::binary(), std::move(v), std::move(m)));
  }
  {
    std::vector<double> v(50);
    std::vector<std::uint8_t> m(50, 0);
    for (std::size_t i = 0; i < 50; ++i) {
      v[i] = static_cast<double>(rng.uniform_int(3));
      if (rng.bernoulli(0.3)) m[i] = 1;
    }
    d.add_column(make_col("cat", VarKind::categorical({"lo", "mid", "hi"}),
                          std::move(v), std::move(m)));
  }

  const auto dir = std::filesystem::temp_directory_path();
  const std::string csv = (dir / "mdt_roundtrip.csv").string();
  const std::string schema = (dir / "mdt_roundtrip.schema.json").string();
  write_csv(d, csv, schema);
  const Dataset back = read_csv(csv, schema);

  REQUIRE(back.n_rows() == d.n_rows());
  REQUIRE(back.n_cols() == d.n_cols());
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    const Column& a = d.col(c);
    const Column& b = back.col(a.name);
    CHECK(b.kind.type == a.kind.type);
    CHECK(b.kind.levels == a.kind.levels);
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      CHECK(b.missing[r] == a.missing[r]);
      if (!a.missing[r]) CHECK(b.values[r] == a.values[r]);
    }
  }
  std::remove(csv.c_str());
  std::remove(schema.c_str());
}

TEST_CASE("kind invariants are enforced") {
  CHECK_THROWS_AS(VarKind::categorical({"only"}), std::invalid_argument);
  Dataset d(2);
  CHECK_THROWS_AS(
      d.add_column(make_col("b", VarKind::binary(), {0, 2}, {0, 0})),
      std::invalid_argument);
  CHECK_THROWS_AS(
      d.add_column(make_col("g", VarKind::positive(), {1.0, 0.0}, {0, 0})),
      std::invalid_argument);
  // masked cells are exempt from the value checks and read back as NaN
  d.add_column(make_col("g", VarKind::positive(), {1.0, -5.0}, {0, 1}));
  CHECK(std::isnan(d.value("g", 1)));
}
