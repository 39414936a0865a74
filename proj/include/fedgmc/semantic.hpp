#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedgmc/numerics.hpp"

namespace fedgmc {

// Global semantic anchors; column i is the unit anchor of class i.
struct EtfAnchors {
  Matrix delta;  // d x C

  std::size_t dim() const noexcept { return delta.rows(); }
  std::size_t num_classes() const noexcept { return delta.cols(); }
  Vector anchor(std::size_t i) const { return delta.col(i); }

  // max |<delta_i, delta_j> + 1/(C-1)| over i != j, and max |norm_i - 1|.
  double gram_drift() const;
};

// Simplex ETF: sqrt(C/(C-1)) * Phi * (I - 11^T / C), Phi the first C columns of
// a seeded random orthogonal d x d matrix. Requires 2 <= C <= d.
EtfAnchors construct_etf(std::size_t num_classes, std::size_t dim, std::uint64_t seed);

struct SemanticManifold {
  Matrix p;                  // d x C class means, absent columns zero
  std::vector<bool> present;  // class has at least one labeled train node
  std::vector<std::size_t> counts;

  std::size_t num_present() const;
};

SemanticManifold class_means(const Matrix& ego, std::span<const int> labels, const std::vector<bool>& mask,
                             std::size_t num_classes);

struct CalibrationRotation {
  Matrix r;  // d x d orthogonal

  static CalibrationRotation identity(std::size_t d) { return {Matrix::identity(d)}; }
};

// argmin_{R^T R = I} ||R P - Delta||_F over present classes, R = U V^T from
// the SVD of Delta_present * P_present^T.
CalibrationRotation procrustes(const SemanticManifold& manifold, const EtfAnchors& anchors);

struct SemanticLoss {
  double value = 0.0;
  Matrix ego_grad;              // n x d
  Vector per_class;             // mean ||R h - delta_c||^2 per class over mask nodes
  std::vector<bool> class_seen;
};

// (1/|mask|) * sum_{v in mask} ||R h_v - delta_{y_v}||^2 with its gradient wrt ego rows.
SemanticLoss semantic_loss(const Matrix& ego, std::span<const int> labels, const std::vector<bool>& mask,
                           const CalibrationRotation& rotation, const EtfAnchors& anchors);

}  // namespace fedgmc
