#include "fedgmc/objective.hpp"

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

struct Pieces {
  LossBreakdown loss;
  ForwardCache cache;
  Matrix logits_grad;
  Matrix ego_grad;
};

Pieces compute(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg,
               const CalibrationTargets& t, const LossWeights& w) {
  if (t.anchors == nullptr) throw StateError("total_loss: anchors not set");
  Pieces p;
  p.cache = forward(params, g, agg);
  auto ce = cross_entropy(p.cache.logits, g.labels, g.train_mask);
  p.loss.ce = ce.value;
  p.logits_grad = std::move(ce.grad);
  p.ego_grad = Matrix(g.num_nodes(), params.embed_dim());

  auto sem = semantic_loss(p.cache.ego, g.labels, g.train_mask, t.rotation, *t.anchors);
  p.loss.semantic = sem.value;
  if (w.semantic != 0.0) p.ego_grad += sem.ego_grad * w.semantic;

  if (t.templates != nullptr && !t.batch.empty()) {
    auto str = structural_loss(agg, p.cache.ego, t.batch, t.matching, *t.templates);
    p.loss.structural = str.value;
    if (w.structural != 0.0) p.ego_grad += str.ego_grad * w.structural;
  }
  p.loss.total = p.loss.ce + w.semantic * p.loss.semantic + w.structural * p.loss.structural;
  return p;
}

}  // namespace

LocalObjective total_loss(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg,
                          const CalibrationTargets& targets, const LossWeights& weights) {
  Pieces p = compute(params, g, agg, targets, weights);
  return {p.loss, backward(params, g, agg, p.cache, p.logits_grad, p.ego_grad)};
}

LossBreakdown evaluate_loss(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg,
                            const CalibrationTargets& targets, const LossWeights& weights) {
  return compute(params, g, agg, targets, weights).loss;
}

}  // namespace fedgmc
