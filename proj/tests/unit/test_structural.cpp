#include <doctest.h>

#include <cmath>
#include <set>

#include "fedgmc/errors.hpp"
#include "fedgmc/structural.hpp"
#include "support.hpp"

using namespace fedgmc;

namespace {

Matrix two_rows(std::span<const double> a, std::span<const double> b) {
  Matrix m(2, a.size());
  std::copy(a.begin(), a.end(), m.row(0).begin());
  std::copy(b.begin(), b.end(), m.row(1).begin());
  return m;
}

double brute_force_ot(const Matrix& a, const Matrix& b) {
  double best = 1e300;
  for (int perm = 0; perm < 2; ++perm) {
    double c = 0.0;
    for (int i = 0; i < 2; ++i) {
      const int j = perm ? 1 - i : i;
      for (std::size_t k = 0; k < a.cols(); ++k) c += 0.5 * (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
    }
    best = std::min(best, c);
  }
  return best;
}

MatchingMatrix one_hot(std::size_t B, std::size_t Q, const std::vector<std::size_t>& pick) {
  MatchingMatrix m{Matrix(B, Q)};
  for (std::size_t b = 0; b < B; ++b) m.f(b, pick[b]) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("structural batch sampling") {
  const auto all = sample_structural_batch(10, 10, 3);
  CHECK(std::set<NodeId>(all.begin(), all.end()).size() == 10);
  CHECK(sample_structural_batch(10, 25, 3).size() == 10);
  CHECK(sample_structural_batch(600, 64, 9) == sample_structural_batch(600, 64, 9));
  CHECK_THROWS_AS(sample_structural_batch(10, 0, 1), ParameterError);

  std::vector<int> hits(600, 0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto b = sample_structural_batch(600, 100, seed);
    CHECK(std::set<NodeId>(b.begin(), b.end()).size() == 100);
    for (NodeId v : b) ++hits[v];
  }
  double mean = 0.0;
  for (int h : hits) mean += h / 50.0 / 600.0;
  CHECK(std::abs(mean - 1.0 / 6.0) <= 0.05);
  int far = 0;
  for (int h : hits) far += std::abs(h / 50.0 - 1.0 / 6.0) > 0.2;
  CHECK(far < 30);
}

TEST_CASE("radial sequence on a star with equal leaves") {
  const Graph star = Graph::from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, Matrix(5, 1), {0, 0, 0, 0, 0}, 1);
  const NeighborhoodAggregator agg(star);
  Matrix ego(5, 3);
  for (std::size_t v = 1; v < 5; ++v) {
    ego(v, 0) = 1.0;
    ego(v, 1) = 2.0;
    ego(v, 2) = -2.0;
  }
  const auto r = radial_sequence(agg, ego, 0);
  const double s = std::sqrt(9.0 + kRingSmoothing * kRingSmoothing);
  const double want[3] = {1.0 / s, 2.0 / s, -2.0 / s};
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 3; ++j) CHECK(r.rows(k, j) == doctest::Approx(want[j]).epsilon(1e-14));
  CHECK(r.anchor_node == 0);
}

TEST_CASE("ring normalization is near-unit for ordinary rings and continuous at zero") {
  CHECK(ring_scale(0.0) == kRingSmoothing);
  CHECK(std::abs(ring_scale(5.0) / 5.0 - 1.0) <= 1e-3);
  const Graph g = Graph::from_edges(2, {}, Matrix(2, 1), {0, 0}, 1);
  const NeighborhoodAggregator agg(g);
  double prev = -1.0;
  for (int k = -100; k <= 100; ++k) {
    const Matrix ego{{1e-3 * k, 0.0}, {0.0, 0.0}};
    const double x = radial_sequence(agg, ego, 0).rows(0, 0);
    if (k > -100) CHECK(std::abs(x - prev) <= 0.01);
    prev = x;
  }
}

TEST_CASE("radial sequence of an isolated node is its normalized ego") {
  const Graph g = Graph::from_edges(2, {}, Matrix(2, 1), {0, 0}, 1);
  const NeighborhoodAggregator agg(g);
  const Matrix ego{{3, 4}, {0, 0}};
  const auto r = radial_sequence(agg, ego, 0);
  const double s = std::sqrt(25.0 + kRingSmoothing * kRingSmoothing);
  CHECK(r.rows(0, 0) == doctest::Approx(3.0 / s).epsilon(1e-14));
  CHECK(r.rows(1, 1) == doctest::Approx(4.0 / s).epsilon(1e-14));
  const auto z = radial_sequence(agg, ego, 1);
  CHECK(max_abs(z.rows) == 0.0);
  CHECK_THROWS_AS(radial_sequence(agg, ego, 2), ValueError);
}

TEST_CASE("radial sequence on a four-node path by hand") {
  const Graph path = Graph::from_edges(4, {{0, 1}, {1, 2}, {2, 3}}, Matrix(4, 1), {0, 0, 0, 0}, 1);
  const NeighborhoodAggregator agg(path);
  const Matrix ego{{1, 0}, {0, 1}, {1, 1}, {2, -1}};
  // node 1: N1 = {0, 2}, N2 = {3}
  const auto r = radial_sequence(agg, ego, 1);
  const double h1[2] = {1.0, 0.5};
  const double h2[2] = {(1.0 + 2.0) / 2, (0.5 - 1.0) / 2};
  const double e2 = kRingSmoothing * kRingSmoothing;
  const double n1 = std::sqrt(h1[0] * h1[0] + h1[1] * h1[1] + e2), n2 = std::sqrt(h2[0] * h2[0] + h2[1] * h2[1] + e2);
  CHECK(r.rows(0, 0) == doctest::Approx(h1[0] / n1));
  CHECK(r.rows(0, 1) == doctest::Approx(h1[1] / n1));
  CHECK(r.rows(1, 0) == doctest::Approx(h2[0] / n2));
  CHECK(r.rows(1, 1) == doctest::Approx(h2[1] / n2));
}

TEST_CASE("ot distance") {
  const Matrix a = testing::random_matrix(2, 4, 1);
  CHECK(ot_distance(a, a) == 0.0);
  const Matrix swapped = two_rows(a.row(1), a.row(0));
  CHECK(ot_distance(a, swapped) == 0.0);
  CHECK(ot_uses_swap(a, swapped));
  CHECK_FALSE(ot_uses_swap(a, a));
  CHECK_THROWS_AS(ot_distance(a, Matrix(2, 3)), DimensionError);
  CHECK_THROWS_AS(ot_distance(a, Matrix(3, 4)), DimensionError);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Matrix x = testing::random_matrix(2, 5, 2 * seed), y = testing::random_matrix(2, 5, 2 * seed + 1);
    const double w = ot_distance(x, y);
    CHECK(std::abs(w - brute_force_ot(x, y)) <= 1e-12);
    CHECK(std::abs(w - ot_distance(y, x)) <= 1e-12);
    CHECK(w >= 0.0);
    const Matrix q = random_orthogonal(5, seed);
    const double wq = ot_distance(testing::naive_matmul(x, q), testing::naive_matmul(y, q));
    CHECK(std::abs(w - wq) <= 1e-10);
  }
}

TEST_CASE("sinkhorn with a constant cost gives the uniform plan") {
  const auto res = sinkhorn_uniform(Matrix(6, 3, 0.7), 0.05, 500, 1e-10);
  CHECK(res.converged);
  for (double x : res.coupling.data()) CHECK(x == doctest::Approx(1.0 / 18).epsilon(1e-9));

  const StructuralTemplates t{{Matrix(2, 2, 0.5), Matrix(2, 2, 0.5), Matrix(2, 2, 0.5)}};
  std::vector<RadialSequence> radials(4, RadialSequence{Matrix{{1, 0}, {0, 1}}, 0});
  const auto f = sinkhorn_match(radials, t);
  for (double x : f.f.data()) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-9));
  // all-zero cost
  const StructuralTemplates same{{Matrix{{1, 0}, {0, 1}}}};
  const auto z = sinkhorn_match(radials, same);
  for (double x : z.f.data()) CHECK(x == doctest::Approx(1.0));
}

TEST_CASE("sinkhorn near the hard-assignment limit") {
  Matrix cost{{0.0, 50.0}, {50.0, 0.0}};
  const auto res = sinkhorn_uniform(cost, 0.05, 500, 1e-9);
  CHECK(res.converged);
  CHECK(2 * res.coupling(0, 0) >= 0.99);
  CHECK(2 * res.coupling(1, 1) >= 0.99);

  // through sinkhorn_match: radials equal to their template
  const StructuralTemplates t{{Matrix{{1, 0, 0}, {0, 1, 0}}, Matrix{{0, 0, 1}, {0, -1, 0}}}};
  const std::vector<RadialSequence> radials{{t.templates[1], 0}, {t.templates[0], 1}};
  const auto f = sinkhorn_match(radials, t);
  CHECK(f.f(0, 1) >= 0.99);
  CHECK(f.f(1, 0) >= 0.99);
}

TEST_CASE("sinkhorn marginals and dual monotonicity on random costs") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t B = 2 + seed % 40, Q = 1 + seed % 6;
    Matrix cost = testing::random_matrix(B, Q, seed);
    for (auto& x : cost.data()) x = x * x;
    const auto res = sinkhorn_uniform(cost, 0.1 + 0.05 * (seed % 4), 2000, 1e-9, true);
    REQUIRE(res.converged);
    for (std::size_t i = 0; i < B; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < Q; ++j) row += res.coupling(i, j);
      CHECK(std::abs(B * row - 1.0) <= 1e-6);
    }
    for (std::size_t j = 0; j < Q; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < B; ++i) col += res.coupling(i, j);
      CHECK(std::abs(col - 1.0 / Q) <= 1e-6);
    }
    for (std::size_t k = 1; k < res.objective.size(); ++k) CHECK(res.objective[k] <= res.objective[k - 1] + 1e-12);
  }
}

TEST_CASE("sinkhorn reports non-convergence without failing") {
  Matrix cost = testing::random_matrix(30, 4, 5);
  for (auto& x : cost.data()) x = 10.0 * x * x;
  const auto res = sinkhorn_uniform(cost, 0.01, 2, 1e-12);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 2);
  CHECK(all_finite(res.coupling));
  CHECK_THROWS_AS(sinkhorn_uniform(cost, 0.0, 10, 1e-6), ParameterError);
  CHECK_THROWS_AS(sinkhorn_uniform(Matrix(), 0.1, 10, 1e-6), DimensionError);
  CHECK_THROWS_AS(sinkhorn_match({}, StructuralTemplates::random(2, 3, 1)), StateError);
}

TEST_CASE("structural loss values") {
  const Graph g = testing::random_graph(20, 0.2, 1, 2, 3);
  const NeighborhoodAggregator agg(g);
  const Matrix ego = testing::random_matrix(20, 4, 8);
  const std::vector<NodeId> batch{0, 3, 5, 9, 12};
  const auto radials = radial_sequences(agg, ego, batch);

  StructuralTemplates exact;
  for (const auto& r : radials) exact.templates.push_back(r.rows);
  const auto zero = structural_loss(agg, ego, batch, one_hot(5, 5, {0, 1, 2, 3, 4}), exact);
  CHECK(zero.value <= 1e-28);

  const StructuralTemplates origin{{Matrix(2, 4)}};
  bool all_nonzero = true;
  for (const auto& r : radials) all_nonzero &= norm2(r.rows.row(0)) > 0 && norm2(r.rows.row(1)) > 0;
  REQUIRE(all_nonzero);
  // distance to the zero template is half the squared row norms
  double want = 0.0;
  for (const auto& r : radials) want += 0.5 * frobenius_norm_sq(r.rows) / 5.0;
  CHECK(want > 0.85);
  const auto unit = structural_loss(agg, ego, batch, one_hot(5, 1, {0, 0, 0, 0, 0}), origin);
  CHECK(unit.value == doctest::Approx(want).epsilon(1e-12));

  // reordering the batch with the rows of F leaves the loss unchanged
  const auto t = StructuralTemplates::random(3, 4, 2);
  const auto f = sinkhorn_match(radials, t);
  const std::vector<NodeId> perm{9, 0, 12, 5, 3};
  const std::size_t where[5] = {3, 0, 4, 2, 1};
  MatchingMatrix fp{Matrix(5, 3)};
  for (std::size_t b = 0; b < 5; ++b)
    for (std::size_t q = 0; q < 3; ++q) fp.f(b, q) = f.f.row(where[b])[q];
  CHECK(structural_loss(agg, ego, perm, fp, t).value ==
        doctest::Approx(structural_loss(agg, ego, batch, f, t).value).epsilon(1e-12));
  CHECK(structural_loss_value(radials, f, t) == doctest::Approx(structural_loss(agg, ego, batch, f, t).value).epsilon(1e-13));
  CHECK_THROWS_AS(structural_loss(agg, ego, batch, MatchingMatrix{Matrix(4, 3)}, t), DimensionError);
}

TEST_CASE("structural loss gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Graph g = testing::random_graph(18, 0.2, 1, 2, seed);
    const NeighborhoodAggregator agg(g);
    Matrix ego = testing::random_matrix(18, 4, seed + 50, 0.6);
    const auto batch = sample_structural_batch(18, 8, seed);
    const auto t = StructuralTemplates::random(3, 4, seed);
    const auto f = sinkhorn_match(radial_sequences(agg, ego, batch), t);
    const auto loss = structural_loss(agg, ego, batch, f, t);
    std::vector<double> numeric;
    for (auto& x : ego.data()) {
      const double x0 = x, h = 1e-6;
      x = x0 + h;
      const double up = structural_loss(agg, ego, batch, f, t).value;
      x = x0 - h;
      const double down = structural_loss(agg, ego, batch, f, t).value;
      x = x0;
      numeric.push_back((up - down) / (2 * h));
    }
    CHECK(testing::relative_error(loss.ego_grad.data(), numeric) <= 1e-4);
  }
}

TEST_CASE("random templates are seeded unit rows") {
  const auto t = StructuralTemplates::random(4, 6, 3);
  CHECK(t.size() == 4);
  for (const auto& m : t.templates) {
    CHECK(std::abs(norm2(m.row(0)) - 1.0) <= 1e-12);
    CHECK(std::abs(norm2(m.row(1)) - 1.0) <= 1e-12);
  }
  CHECK(StructuralTemplates::random(4, 6, 3).templates == t.templates);
  CHECK_THROWS_AS(StructuralTemplates::random(0, 6, 3), ParameterError);
}
