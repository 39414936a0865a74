#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedgmc/semantic.hpp"
#include "fedgmc/structural.hpp"

namespace fedgmc {

// What a client uploads about its semantic manifold. Values only.
struct SemanticReport {
  Matrix k;                   // d x C calibrated class means R_m * P_m
  std::vector<bool> present;
  Vector per_class_loss;      // mean calibration loss per present class
};

struct StructuralReport {
  std::vector<Matrix> radials;  // B radial sequences (2 x d each)
  Matrix f;                     // B x Q matching matrix
};

struct RefineConfig {
  double tau = 1.0;   // difficulty temperature
  double eta = 0.1;   // maximum chord step per anchor
  double eps = 1e-8;
  double gw_tol = 1e-12;  // golden-section bracket width, relative to the search interval
  std::uint64_t seed = 0;

  void validate() const;
};

// v_i = mean over clients reporting class i of (K_{m,i} - delta_i); zero if none report.
std::vector<Vector> deviation_vectors(std::span<const SemanticReport> reports, const EtfAnchors& anchors);

// softmax(Lbar / tau), Lbar_i averaged over reporting clients (0 if none).
Vector difficulty_weights(std::span<const SemanticReport> reports, std::size_t num_classes, double tau);

// s_i = -sum_{j != i} delta_j / ||delta_i - delta_j||^2.
Vector constraint_vector(const EtfAnchors& anchors, std::size_t i);

struct AnchorStep {
  Vector refined;       // unit norm
  double chord = 0.0;   // ||t (delta~ - delta)||, at most eta
  double scale = 1.0;   // t
};

// delta~ = delta + gamma v + s; t = min(1, eta / (||delta~ - delta|| + eps));
// result = normalize(delta + t (delta~ - delta)).
AnchorStep refine_anchor(std::span<const double> delta, std::span<const double> deviation, double gamma,
                         std::span<const double> constraint, const RefineConfig& cfg);

struct AnchorRefinement {
  EtfAnchors anchors;
  double drift_before = 0.0;
  double drift_after = 0.0;
  double max_chord = 0.0;
  std::vector<bool> updated;  // false for classes no client reported
};

AnchorRefinement refine_all_anchors(const EtfAnchors& anchors, std::span<const SemanticReport> reports,
                                    const RefineConfig& cfg);

// Squared-loss GW between two uniform 2-point spaces given their intra-point distances,
// minimized over the coupling family [[t, 1/2 - t], [1/2 - t, t]].
double gw_2point_distances(double alpha, double beta);
double gw_2point(const Matrix& a, const Matrix& b);

double intra_distance(const Matrix& two_rows);

// Weighted barycenter objective sum_{m,b} F_m[b,q] * GW(mu_{m,b}, nu_q).
double template_objective(std::span<const StructuralReport> reports, std::size_t q, const Matrix& templ);

struct TemplateUpdate {
  Matrix templ;
  double objective_before = 0.0;
  double objective_after = 0.0;
  bool updated = false;  // false when no mass is assigned to q
};

// Two-stage barycenter: the intra-distance by golden-section search on the GW
// objective, the position as the F-weighted mean of assigned radials.
TemplateUpdate update_template(std::size_t q, std::span<const StructuralReport> reports,
                               const StructuralTemplates& templates, const RefineConfig& cfg);

// Chord bound used by the drift checks: the largest ||normalize(u + w) - u|| for
// unit u and ||w|| <= eta, eta < 1.
double max_projected_chord(double eta);

}  // namespace fedgmc
