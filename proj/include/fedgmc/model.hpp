#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fedgmc/graph.hpp"
#include "fedgmc/numerics.hpp"

namespace fedgmc {

struct ModelParams {
  Matrix w_ego;  // d0 x d
  Matrix w_cls;  // 3d x C, rows ordered [ego | hop1 | hop2]
  Vector b_cls;  // C

  std::size_t input_dim() const noexcept { return w_ego.rows(); }
  std::size_t embed_dim() const noexcept { return w_ego.cols(); }
  std::size_t num_classes() const noexcept { return b_cls.size(); }

  // Seeded Gaussian weights with std 1/sqrt(fan_in); zero bias.
  static ModelParams init(std::size_t input_dim, std::size_t embed_dim, std::size_t num_classes,
                          std::uint64_t seed);
  static ModelParams zeros(std::size_t input_dim, std::size_t embed_dim, std::size_t num_classes);

  ModelParams& operator+=(const ModelParams& o);
  ModelParams& operator*=(double s);
  bool operator==(const ModelParams&) const = default;
};

// Linear maps ego -> hop-1 and ego -> hop-2 aggregates as sparse row weights.
//
// hop1(v) = mean over N1(v); hop2(v) = (mean N1(v) + mean N2(v)) / 2.
// If N2(v) is empty, hop2 uses the N1 mean; if N1(v) is empty both fall back
// to the node's own ego row.
class NeighborhoodAggregator {
 public:
  using Terms = std::vector<std::pair<NodeId, double>>;

  NeighborhoodAggregator() = default;
  explicit NeighborhoodAggregator(const Graph& g);

  std::size_t num_nodes() const noexcept { return hop1_.size(); }
  const Terms& hop1_terms(NodeId v) const { return hop1_[v]; }
  const Terms& hop2_terms(NodeId v) const { return hop2_[v]; }

  // Aggregated row for a single node.
  Vector apply_row(const Terms& terms, const Matrix& ego) const;
  Matrix apply_hop1(const Matrix& ego) const;
  Matrix apply_hop2(const Matrix& ego) const;
  // Adds terms^T * grad_row into ego_grad.
  static void scatter(const Terms& terms, std::span<const double> grad_row, Matrix& ego_grad);

 private:
  std::vector<Terms> hop1_;
  std::vector<Terms> hop2_;
};

struct ForwardCache {
  Matrix ego;     // n x d, tanh(X W_ego)
  Matrix hop1;    // n x d
  Matrix hop2;    // n x d
  Matrix logits;  // n x C
};

ForwardCache forward(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg);
ForwardCache forward(const ModelParams& params, const Graph& g);

struct LossAndGrad {
  double value = 0.0;
  Matrix grad;
};

// Mean cross-entropy over `mask` nodes; gradient is with respect to logits.
LossAndGrad cross_entropy(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask);

// Backpropagates dL/dlogits and dL/dego (extra, may be empty) to parameters.
ModelParams backward(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg,
                     const ForwardCache& cache, const Matrix& logits_grad, const Matrix& ego_grad);

double learning_rate(double base_lr, double decay_steps, std::size_t step);

// params - lr * grads. Throws NumericError if any gradient is non-finite.
ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double lr);

}  // namespace fedgmc
