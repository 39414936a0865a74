#include "fedgmc/structural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

void require_pair_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != 2 || b.rows() != 2 || a.cols() != b.cols()) {
    throw DimensionError("ot_distance: operands must both be 2 x d with equal d");
  }
}

double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

StructuralTemplates StructuralTemplates::random(std::size_t count, std::size_t dim, std::uint64_t seed) {
  if (count == 0) throw ParameterError("templates: need at least one template");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  StructuralTemplates t;
  t.templates.reserve(count);
  for (std::size_t q = 0; q < count; ++q) {
    Matrix m(2, dim);
    for (double& x : m.data()) x = normal(rng);
    t.templates.push_back(l2_normalize_rows(m));
  }
  return t;
}

std::vector<NodeId> sample_structural_batch(std::size_t num_nodes, std::size_t batch, std::uint64_t seed) {
  if (batch == 0) throw ParameterError("sample_structural_batch: batch must be >= 1");
  std::vector<NodeId> nodes(num_nodes);
  std::iota(nodes.begin(), nodes.end(), NodeId{0});
  const std::size_t take = std::min(batch, num_nodes);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, num_nodes - 1);
    std::swap(nodes[i], nodes[pick(rng)]);
  }
  nodes.resize(take);
  return nodes;
}

RadialSequence radial_sequence(const NeighborhoodAggregator& agg, const Matrix& ego, NodeId node) {
  if (node < 0 || static_cast<std::size_t>(node) >= agg.num_nodes()) {
    throw ValueError("radial_sequence: node out of range");
  }
  Matrix rows(2, ego.cols());
  const Vector h1 = agg.apply_row(agg.hop1_terms(node), ego);
  const Vector h2 = agg.apply_row(agg.hop2_terms(node), ego);
  std::copy(h1.begin(), h1.end(), rows.row(0).begin());
  std::copy(h2.begin(), h2.end(), rows.row(1).begin());
  for (std::size_t k = 0; k < 2; ++k) {
    const double s = ring_scale(norm2(rows.row(k)));
    for (double& x : rows.row(k)) x /= s;
  }
  return {rows, node};
}

std::vector<RadialSequence> radial_sequences(const NeighborhoodAggregator& agg, const Matrix& ego,
                                             std::span<const NodeId> batch) {
  std::vector<RadialSequence> out;
  out.reserve(batch.size());
  for (NodeId b : batch) out.push_back(radial_sequence(agg, ego, b));
  return out;
}

bool ot_uses_swap(const Matrix& a, const Matrix& b) {
  require_pair_shape(a, b);
  const double straight = squared_distance(a.row(0), b.row(0)) + squared_distance(a.row(1), b.row(1));
  const double crossed = squared_distance(a.row(0), b.row(1)) + squared_distance(a.row(1), b.row(0));
  return crossed < straight;
}

double ot_distance(const Matrix& a, const Matrix& b) {
  require_pair_shape(a, b);
  const double straight = squared_distance(a.row(0), b.row(0)) + squared_distance(a.row(1), b.row(1));
  const double crossed = squared_distance(a.row(0), b.row(1)) + squared_distance(a.row(1), b.row(0));
  return 0.5 * std::min(straight, crossed);
}

SinkhornResult sinkhorn_uniform(const Matrix& cost, double epsilon, std::size_t max_iters, double tol,
                                bool trace_objective) {
  if (!(epsilon > 0.0)) throw ParameterError("sinkhorn: epsilon must be positive");
  const std::size_t B = cost.rows(), Q = cost.cols();
  if (B == 0 || Q == 0) throw DimensionError("sinkhorn: empty cost matrix");
  if (!all_finite(cost)) throw ValueError("sinkhorn: non-finite cost");

  const double log_a = -std::log(static_cast<double>(B));
  const double log_b = -std::log(static_cast<double>(Q));
  Vector f(B, 0.0), g(Q, 0.0), scratch(std::max(B, Q));

  SinkhornResult res;
  res.coupling = Matrix(B, Q);
  auto fill_coupling = [&] {
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < Q; ++j) res.coupling(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / epsilon);
  };

  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t j = 0; j < Q; ++j) {
      for (std::size_t i = 0; i < B; ++i) scratch[i] = (f[i] - cost(i, j)) / epsilon;
      g[j] = epsilon * (log_b - log_sum_exp(std::span<const double>(scratch.data(), B)));
    }
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t j = 0; j < Q; ++j) scratch[j] = (g[j] - cost(i, j)) / epsilon;
      f[i] = epsilon * (log_a - log_sum_exp(std::span<const double>(scratch.data(), Q)));
    }
    fill_coupling();
    res.iterations = it + 1;

    // Rows are exact after the f-update; the column marginal carries the error.
    double resid = 0.0;
    double mass = 0.0;
    for (std::size_t j = 0; j < Q; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < B; ++i) col += res.coupling(i, j);
      resid = std::max(resid, std::abs(col - 1.0 / static_cast<double>(Q)));
      mass += col;
    }
    res.marginal_residual = resid;
    if (trace_objective) {
      const double dual = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(B) +
                          std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(Q) - epsilon * mass;
      res.objective.push_back(-dual);
    }
    if (resid < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

Matrix ot_cost_matrix(std::span<const RadialSequence> radials, const StructuralTemplates& templates) {
  Matrix cost(radials.size(), templates.size());
  for (std::size_t b = 0; b < radials.size(); ++b)
    for (std::size_t q = 0; q < templates.size(); ++q)
      cost(b, q) = ot_distance(radials[b].rows, templates.templates[q]);
  return cost;
}

MatchingMatrix sinkhorn_match(std::span<const RadialSequence> radials, const StructuralTemplates& templates,
                              const SinkhornOptions& opts) {
  if (radials.empty()) throw StateError("sinkhorn_match: empty batch");
  if (templates.size() == 0) throw StateError("sinkhorn_match: no templates");
  Matrix cost = ot_cost_matrix(radials, templates);
  double mean = 0.0;
  for (double c : cost.data()) mean += c;
  mean /= static_cast<double>(cost.size());
  if (mean > 0.0) cost *= 1.0 / mean;

  SinkhornResult s = sinkhorn_uniform(cost, opts.epsilon, opts.max_iters, opts.tol);
  MatchingMatrix m{std::move(s.coupling), s.converged, s.iterations, s.marginal_residual};
  m.f *= static_cast<double>(radials.size());
  return m;
}

double structural_loss_value(std::span<const RadialSequence> radials, const MatchingMatrix& f,
                             const StructuralTemplates& templates) {
  if (f.f.rows() != radials.size() || f.f.cols() != templates.size()) {
    throw DimensionError("structural_loss: matching matrix shape != B x Q");
  }
  if (radials.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < radials.size(); ++b)
    for (std::size_t q = 0; q < templates.size(); ++q)
      total += f.f(b, q) * ot_distance(radials[b].rows, templates.templates[q]);
  return total / static_cast<double>(radials.size());
}

StructuralLoss structural_loss(const NeighborhoodAggregator& agg, const Matrix& ego,
                               std::span<const NodeId> batch, const MatchingMatrix& f,
                               const StructuralTemplates& templates) {
  const std::size_t B = batch.size(), Q = templates.size(), d = ego.cols();
  if (f.f.rows() != B || f.f.cols() != Q) throw DimensionError("structural_loss: matching matrix shape != B x Q");
  StructuralLoss out{0.0, Matrix(ego.rows(), d)};
  if (B == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(B);

  for (std::size_t b = 0; b < B; ++b) {
    const NodeId node = batch[b];
    const NeighborhoodAggregator::Terms* terms[2] = {&agg.hop1_terms(node), &agg.hop2_terms(node)};
    Vector raw[2] = {agg.apply_row(*terms[0], ego), agg.apply_row(*terms[1], ego)};
    Matrix r(2, d);
    double scales[2];
    for (int k = 0; k < 2; ++k) {
      scales[k] = ring_scale(norm2(raw[k]));
      for (std::size_t j = 0; j < d; ++j) r(k, j) = raw[k][j] / scales[k];
    }

    // dL/dr accumulated over templates with the optimal permutation fixed:
    // d/da_i of 0.5 * ||a_i - t_pi(i)||^2 = a_i - t_pi(i).
    Matrix dr(2, d);
    for (std::size_t q = 0; q < Q; ++q) {
      const double w = f.f(b, q) * inv_b;
      const Matrix& t = templates.templates[q];
      const bool swap = ot_uses_swap(r, t);
      out.value += w * ot_distance(r, t);
      if (w == 0.0) continue;
      for (int k = 0; k < 2; ++k) {
        const auto trow = t.row(swap ? 1 - k : k);
        for (std::size_t j = 0; j < d; ++j) dr(k, j) += w * (r(k, j) - trow[j]);
      }
    }

    // Through r = h / s(h): dh = (dr - r <r, dr>) / s.
    for (int k = 0; k < 2; ++k) {
      const double proj = dot(r.row(k), dr.row(k));
      Vector dh(d);
      for (std::size_t j = 0; j < d; ++j) dh[j] = (dr(k, j) - r(k, j) * proj) / scales[k];
      NeighborhoodAggregator::scatter(*terms[k], dh, out.ego_grad);
    }
  }
  return out;
}

}  // namespace fedgmc
