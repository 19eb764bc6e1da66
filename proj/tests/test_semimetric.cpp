#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace funvar;
using Catch::Matchers::WithinAbs;

namespace {

Curve on(const GridPtr& g, auto f) {
  std::vector<double> v(g->size());
  for (std::size_t k = 0; k < g->size(); ++k) v[k] = f((*g)[k]);
  return Curve(g, std::move(v));
}

}  // namespace

TEST_CASE("deriv_l2 distances with closed forms") {
  const auto g = make_grid(Grid::uniform(-1.0, 1.0, 101));
  const auto zero = on(g, [](double) { return 0.0; });
  const auto one = on(g, [](double) { return 1.0; });
  CHECK(distance(SemiMetricSpec::deriv_l2(0), zero, zero) == 0.0);
  CHECK_THAT(distance(SemiMetricSpec::deriv_l2(0), zero, one), WithinAbs(std::sqrt(2.0), 1e-10));
  const auto a = on(g, [](double t) { return t; });
  const auto b = on(g, [](double t) { return 2 * t; });
  CHECK_THAT(distance(SemiMetricSpec::deriv_l2(1), a, b), WithinAbs(std::sqrt(2.0), 1e-6));
  CHECK_THAT(distance(SemiMetricSpec::deriv_l2(1, BSpline{10, 3}), a, b), WithinAbs(std::sqrt(2.0), 1e-6));
}

TEST_CASE("distance requires matching grids and trained projections") {
  const auto g1 = make_grid(Grid::uniform(0.0, 1.0, 5));
  const auto g2 = make_grid(Grid::uniform(0.0, 2.0, 5));
  const Curve a(g1, {0, 1, 2, 3, 4}), b(g2, {0, 1, 2, 3, 4});
  CHECK_THROWS_AS(distance(SemiMetricSpec::deriv_l2(0), a, b), invalid_input);
  CHECK_THROWS_AS(distance(SemiMetricSpec::pca_projection(2), a, a), invalid_input);
  CHECK_THROWS_AS(SemiMetricSpec::deriv_l2(-1), invalid_input);
  CHECK_THROWS_AS(SemiMetricSpec::pca_projection(0), invalid_input);
  const auto set = CurveSet::from_rows(g1, {{0, 1, 2, 3, 4}, {1, 1, 1, 1, 1}});
  CHECK_THROWS_AS(SemiMetricSpec::pca_projection(3).trained_on(set), invalid_input);
}

TEST_CASE("distance matrices") {
  const auto g = make_grid(Grid::uniform(-1.0, 1.0, 11));
  const auto spec = SemiMetricSpec::deriv_l2(0);
  const auto single = CurveSet::from_rows(g, {std::vector<double>(11, 0.7)});
  const auto D1 = self_distance_matrix(spec, single);
  CHECK(D1.rows() == 1);
  CHECK(D1(0, 0) == 0.0);

  std::mt19937_64 gen(3);
  const auto in = oracle::random_instance(gen, 3, 11);
  const auto t = std::vector<double>(g->points().begin(), g->points().end());
  const auto set = CurveSet::from_rows(g, in.X);
  const auto D = self_distance_matrix(spec, set);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK_THAT(D(i, j), WithinAbs(distance(spec, set[i], set[j]), 1e-14));
      CHECK_THAT(D(i, j), WithinAbs(oracle::l2(t, in.X[i], in.X[j]), 1e-12));
    }
  CHECK(distance_matrix(spec, set, set) == D);

  const auto dup = CurveSet::from_rows(g, {in.X[0], in.X[1], in.X[0]});
  const auto Dd = self_distance_matrix(spec, dup);
  CHECK(Dd(0, 2) == 0.0);
  CHECK(Dd(2, 0) == 0.0);
  CHECK(Dd(0, 1) > 0.0);
}

TEST_CASE("semi-metric symmetry and zero self-distance over random cases") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto in = oracle::random_instance(gen, 6, 12);
    const auto g = oracle::grid_of(in.t);
    const auto set = oracle::set_of(g, in.X);
    SemiMetricSpec spec;
    switch (pick(gen)) {
      case 0: spec = SemiMetricSpec::deriv_l2(0); break;
      case 1: spec = SemiMetricSpec::deriv_l2(1); break;
      case 2: spec = SemiMetricSpec::deriv_l2(2); break;
      default: spec = SemiMetricSpec::pca_projection(3).trained_on(set);
    }
    const auto D = self_distance_matrix(spec, set);
    const auto full = distance_matrix(spec, set, set.slice(0, set.size()));
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK(D(i, i) == 0.0);
      CHECK(full(i, i) == 0.0);
      CHECK(distance(spec, set[i], set[i]) == 0.0);
      for (std::size_t j = 0; j < set.size(); ++j) {
        CHECK(D(i, j) >= 0.0);
        CHECK(D(i, j) == D(j, i));
        CHECK(distance(spec, set[i], set[j]) == distance(spec, set[j], set[i]));
      }
    }
  }
}

TEST_CASE("deriv_l2 of order q ignores added polynomials of degree below q") {
  const auto g = make_grid(Grid::uniform(-1.0, 1.0, 201));
  const auto a = on(g, [](double t) { return std::sin(3 * t); });
  const auto b = on(g, [](double t) { return std::cos(2 * t) * t; });
  const auto a1 = on(g, [](double t) { return std::sin(3 * t) + 4.0; });
  const auto b1 = on(g, [](double t) { return std::cos(2 * t) * t + 4.0; });
  const auto s1 = SemiMetricSpec::deriv_l2(1);
  CHECK_THAT(distance(s1, a1, b1), WithinAbs(distance(s1, a, b), 1e-12));
  const auto a2 = on(g, [](double t) { return std::sin(3 * t) + 2.0 - 5.0 * t; });
  const auto b2 = on(g, [](double t) { return std::cos(2 * t) * t + 2.0 - 5.0 * t; });
  const auto s2 = SemiMetricSpec::deriv_l2(2);
  CHECK_THAT(distance(s2, a2, b2), WithinAbs(distance(s2, a, b), 1e-9));
}

TEST_CASE("pca projection distances come from scores") {
  const auto g = make_grid(Grid::uniform(0.0, 1.0, 21));
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 8; ++i) {
    std::vector<double> r(21);
    for (std::size_t k = 0; k < 21; ++k) {
      const double t = (*g)[k];
      r[k] = (i - 3.5) * std::sqrt(2.0) * std::sin(std::numbers::pi * t) + 0.1 * (i % 3) * std::cos(std::numbers::pi * t);
    }
    rows.push_back(r);
  }
  const auto set = CurveSet::from_rows(g, rows);
  const auto spec = SemiMetricSpec::pca_projection(2).trained_on(set);
  REQUIRE(spec.is_trained());
  const auto& basis = *spec.basis();
  CHECK(basis.eigenvalues[0] >= basis.eigenvalues[1]);
  // Full-rank projection of a set in the span of the two components
  // reproduces the L2 distance.
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK_THAT(distance(spec, set[i], set[j]), WithinAbs(distance(SemiMetricSpec::deriv_l2(0), set[i], set[j]), 1e-9));
  const auto one = SemiMetricSpec::pca_projection(1).trained_on(set);
  CHECK(distance(one, set[0], set[1]) <= distance(spec, set[0], set[1]) + 1e-12);
}

TEST_CASE("small-ball fraction") {
  const auto g = make_grid(Grid::uniform(-1.0, 1.0, 101));
  const auto spec = SemiMetricSpec::deriv_l2(0);
  // constants c have distance sqrt(2)|c - c'|
  std::vector<std::vector<double>> rows;
  for (double c : {0.0, 1.0, 2.0, 4.0}) rows.push_back(std::vector<double>(101, c));
  const auto train = CurveSet::from_rows(g, rows);
  const Curve x(g, std::vector<double>(101, 0.5));
  const double r = std::sqrt(2.0);
  CHECK(small_ball_fraction(spec, train, x, 10.0) == 1.0);
  CHECK(small_ball_fraction(spec, train, x, 0.1) == 0.0);
  CHECK(small_ball_fraction(spec, train, x, 0.6 * r) == 0.5);   // 0 and 1
  CHECK(small_ball_fraction(spec, train, x, 1.6 * r) == 0.75);  // and 2
  CHECK(small_ball_fraction(spec, train, x, 3.4 * r) == 0.75);
  CHECK(small_ball_fraction(spec, train, x, 3.6 * r) == 1.0);
  CHECK_THROWS_AS(small_ball_fraction(spec, train, x, 0.0), invalid_input);
}

TEST_CASE("small-ball fraction is monotone in h") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> d(1 + rep % 17);
    for (auto& x : d) x = u(gen);
    double h1 = 0.01 + u(gen), h2 = 0.01 + u(gen);
    if (h1 > h2) std::swap(h1, h2);
    CHECK(small_ball_fraction(d, h1) <= small_ball_fraction(d, h2));
  }
}
