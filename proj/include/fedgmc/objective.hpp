#pragma once

#include <span>

#include "fedgmc/graph.hpp"
#include "fedgmc/model.hpp"
#include "fedgmc/semantic.hpp"
#include "fedgmc/structural.hpp"

namespace fedgmc {

// Calibration targets frozen for one local round.
struct CalibrationTargets {
  const EtfAnchors* anchors = nullptr;
  CalibrationRotation rotation;
  const StructuralTemplates* templates = nullptr;  // null disables the structural term
  MatchingMatrix matching;
  std::vector<NodeId> batch;
};

struct LossWeights {
  double semantic = 1.0;
  double structural = 1.0;
};

struct LossBreakdown {
  double ce = 0.0;
  double semantic = 0.0;    // unweighted term value
  double structural = 0.0;  // unweighted term value
  double total = 0.0;       // ce + weighted calibration terms
};

struct LocalObjective {
  LossBreakdown loss;
  ModelParams grads;
};

// L = CE + w_sem * semantic + w_str * structural, with gradients for every
// parameter. Calibration terms reach only w_ego; the classifier sees CE only.
LocalObjective total_loss(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg,
                          const CalibrationTargets& targets, const LossWeights& weights);

// Same value without gradients.
LossBreakdown evaluate_loss(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg,
                            const CalibrationTargets& targets, const LossWeights& weights);

}  // namespace fedgmc
