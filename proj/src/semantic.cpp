#include "fedgmc/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedgmc/errors.hpp"

namespace fedgmc {

double EtfAnchors::gram_drift() const {
  const std::size_t C = num_classes();
  if (C < 2) return 0.0;
  const double target = -1.0 / static_cast<double>(C - 1);
  const Matrix gram = matmul_tn(delta, delta);
  double drift = 0.0;
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      const double want = i == j ? 1.0 : target;
      drift = std::max(drift, std::abs(gram(i, j) - want));
    }
  }
  return drift;
}

EtfAnchors construct_etf(std::size_t num_classes, std::size_t dim, std::uint64_t seed) {
  if (num_classes < 2) throw ParameterError("construct_etf: need at least 2 classes");
  if (dim < num_classes) {
    throw ParameterError("construct_etf: embedding dim " + std::to_string(dim) + " < class count " +
                         std::to_string(num_classes) +
                         "; the C-column simplex frame needs rank-C room (d >= C)");
  }
  const Matrix q = random_orthogonal(dim, seed);
  const double C = static_cast<double>(num_classes);
  const double scale = std::sqrt(C / (C - 1.0));

  EtfAnchors a{Matrix(dim, num_classes)};
  for (std::size_t r = 0; r < dim; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) row_sum += q(r, c);
    const double mean = row_sum / C;
    for (std::size_t c = 0; c < num_classes; ++c) a.delta(r, c) = scale * (q(r, c) - mean);
  }
  return a;
}

std::size_t SemanticManifold::num_present() const {
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
}

SemanticManifold class_means(const Matrix& ego, std::span<const int> labels, const std::vector<bool>& mask,
                             std::size_t num_classes) {
  if (labels.size() != ego.rows() || mask.size() != ego.rows()) {
    throw DimensionError("class_means: labels/mask length != ego rows");
  }
  const std::size_t d = ego.cols();
  SemanticManifold m{Matrix(d, num_classes), std::vector<bool>(num_classes, false),
                     std::vector<std::size_t>(num_classes, 0)};
  for (std::size_t v = 0; v < ego.rows(); ++v) {
    if (!mask[v] || labels[v] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[v]);
    ++m.counts[c];
    const auto h = ego.row(v);
    for (std::size_t j = 0; j < d; ++j) m.p(j, c) += h[j];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (m.counts[c] == 0) continue;
    m.present[c] = true;
    const double inv = 1.0 / static_cast<double>(m.counts[c]);
    for (std::size_t j = 0; j < d; ++j) m.p(j, c) *= inv;
  }
  return m;
}

CalibrationRotation procrustes(const SemanticManifold& manifold, const EtfAnchors& anchors) {
  const std::size_t d = anchors.dim();
  if (manifold.p.rows() != d || manifold.p.cols() != anchors.num_classes()) {
    throw DimensionError("procrustes: manifold and anchor shapes differ");
  }
  if (manifold.num_present() == 0) throw StateError("procrustes: no class present on this client");

  // Delta~ P~^T = sum over present classes of delta_c p_c^T.
  Matrix cross(d, d);
  for (std::size_t c = 0; c < anchors.num_classes(); ++c) {
    if (!manifold.present[c]) continue;
    for (std::size_t i = 0; i < d; ++i) {
      const double a = anchors.delta(i, c);
      for (std::size_t j = 0; j < d; ++j) cross(i, j) += a * manifold.p(j, c);
    }
  }
  const SvdResult s = svd(cross);
  return {matmul(s.u, s.vt)};
}

SemanticLoss semantic_loss(const Matrix& ego, std::span<const int> labels, const std::vector<bool>& mask,
                           const CalibrationRotation& rotation, const EtfAnchors& anchors) {
  const std::size_t n = ego.rows(), d = ego.cols(), C = anchors.num_classes();
  if (labels.size() != n || mask.size() != n) throw DimensionError("semantic_loss: labels/mask length");
  if (rotation.r.rows() != d || rotation.r.cols() != d || anchors.dim() != d) {
    throw DimensionError("semantic_loss: rotation/anchor dimension != embedding dim");
  }

  SemanticLoss out{0.0, Matrix(n, d), Vector(C, 0.0), std::vector<bool>(C, false)};
  std::vector<std::size_t> counts(C, 0);
  std::size_t total = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (mask[v] && labels[v] >= 0) ++total;
  }
  if (total == 0) return out;
  const double inv = 1.0 / static_cast<double>(total);

  for (std::size_t v = 0; v < n; ++v) {
    if (!mask[v] || labels[v] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[v]);
    Vector resid = matvec(rotation.r, ego.row(v));
    for (std::size_t j = 0; j < d; ++j) resid[j] -= anchors.delta(j, c);
    const double sq = dot(resid, resid);
    out.value += sq * inv;
    out.per_class[c] += sq;
    ++counts[c];
    const Vector g = matvec_t(rotation.r, resid);
    auto row = out.ego_grad.row(v);
    for (std::size_t j = 0; j < d; ++j) row[j] = 2.0 * inv * g[j];
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (counts[c] == 0) continue;
    out.class_seen[c] = true;
    out.per_class[c] /= static_cast<double>(counts[c]);
  }
  return out;
}

}  // namespace fedgmc
