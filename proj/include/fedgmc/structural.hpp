#pragma once

#include <cmath>

#include <cstdint>
#include <span>
#include <vector>

#include "fedgmc/graph.hpp"
#include "fedgmc/model.hpp"
#include "fedgmc/numerics.hpp"

namespace fedgmc {

// Normalized hop-1 / hop-2 ring embeddings around one node (2 x d).
struct RadialSequence {
  Matrix rows;
  NodeId anchor_node = -1;
};

struct StructuralTemplates {
  std::vector<Matrix> templates;  // each 2 x d

  std::size_t size() const noexcept { return templates.size(); }

  // Seeded standard-normal rows, each scaled to unit norm.
  static StructuralTemplates random(std::size_t count, std::size_t dim, std::uint64_t seed);
};

struct MatchingMatrix {
  Matrix f;  // B x Q, rows sum to 1
  bool converged = true;
  std::size_t iterations = 0;
  double marginal_residual = 0.0;
};

// Uniform sample without replacement; B >= n returns every node.
std::vector<NodeId> sample_structural_batch(std::size_t num_nodes, std::size_t batch, std::uint64_t seed);

// Ring rows are divided by sqrt(||h||^2 + kRingSmoothing^2): unit length for
// ordinary rings, continuous through h = 0.
inline constexpr double kRingSmoothing = 0.2;
inline double ring_scale(double norm) { return std::sqrt(norm * norm + kRingSmoothing * kRingSmoothing); }

RadialSequence radial_sequence(const NeighborhoodAggregator& agg, const Matrix& ego, NodeId node);
std::vector<RadialSequence> radial_sequences(const NeighborhoodAggregator& agg, const Matrix& ego,
                                             std::span<const NodeId> batch);

// Exact 2-point uniform OT with squared-Euclidean cost:
// min(c11 + c22, c12 + c21) / 2.
double ot_distance(const Matrix& a, const Matrix& b);
// True when the crossed coupling is strictly cheaper than the identity one.
bool ot_uses_swap(const Matrix& a, const Matrix& b);

struct SinkhornOptions {
  double epsilon = 0.05;   // applied to costs divided by their mean
  std::size_t max_iters = 500;
  double tol = 1e-6;       // max-abs marginal violation of the coupling
  bool trace_objective = false;
};

struct SinkhornResult {
  Matrix coupling;  // rows sum to 1/B, columns to 1/Q
  bool converged = false;
  std::size_t iterations = 0;
  double marginal_residual = 0.0;
  // Negated dual objective after each iteration (when traced); non-increasing.
  std::vector<double> objective;
};

// Log-domain Sinkhorn with uniform marginals on kernel exp(-cost / epsilon).
SinkhornResult sinkhorn_uniform(const Matrix& cost, double epsilon, std::size_t max_iters, double tol,
                                bool trace_objective = false);

Matrix ot_cost_matrix(std::span<const RadialSequence> radials, const StructuralTemplates& templates);

MatchingMatrix sinkhorn_match(std::span<const RadialSequence> radials, const StructuralTemplates& templates,
                              const SinkhornOptions& opts = {});

// (1/B) sum_b sum_q F[b,q] * ot_distance(R_b, T_q).
double structural_loss_value(std::span<const RadialSequence> radials, const MatchingMatrix& f,
                             const StructuralTemplates& templates);

struct StructuralLoss {
  double value = 0.0;
  Matrix ego_grad;  // n x d
};

// Loss plus its gradient with respect to ego rows; F and the optimal
// 2-permutation of every pair are held fixed.
StructuralLoss structural_loss(const NeighborhoodAggregator& agg, const Matrix& ego,
                               std::span<const NodeId> batch, const MatchingMatrix& f,
                               const StructuralTemplates& templates);

}  // namespace fedgmc
