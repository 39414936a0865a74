#include "fedgmc/refine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fedgmc/errors.hpp"

namespace fedgmc {

void RefineConfig::validate() const {
  if (!(tau > 0.0)) throw ParameterError("refine: tau must be positive");
  if (!(eta > 0.0)) throw ParameterError("refine: eta must be positive");
  if (!(eps > 0.0)) throw ParameterError("refine: eps must be positive");
  if (!(gw_tol > 0.0)) throw ParameterError("refine: gw_tol must be positive");
}

std::vector<Vector> deviation_vectors(std::span<const SemanticReport> reports, const EtfAnchors& anchors) {
  const std::size_t d = anchors.dim(), C = anchors.num_classes();
  std::vector<Vector> v(C, Vector(d, 0.0));
  std::vector<std::size_t> count(C, 0);
  for (const auto& r : reports) {
    if (r.k.rows() != d || r.k.cols() != C) throw DimensionError("deviation_vectors: report shape");
    for (std::size_t i = 0; i < C; ++i) {
      if (!r.present[i]) continue;
      ++count[i];
      for (std::size_t j = 0; j < d; ++j) v[i][j] += r.k(j, i) - anchors.delta(j, i);
    }
  }
  for (std::size_t i = 0; i < C; ++i) {
    if (count[i] == 0) continue;
    for (double& x : v[i]) x /= static_cast<double>(count[i]);
  }
  return v;
}

Vector difficulty_weights(std::span<const SemanticReport> reports, std::size_t num_classes, double tau) {
  Vector mean(num_classes, 0.0);
  std::vector<std::size_t> count(num_classes, 0);
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < num_classes; ++i) {
      if (!r.present[i]) continue;
      mean[i] += r.per_class_loss[i];
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < num_classes; ++i) {
    if (count[i] > 0) mean[i] /= static_cast<double>(count[i]);
  }
  return softmax(mean, tau);
}

Vector constraint_vector(const EtfAnchors& anchors, std::size_t i) {
  const std::size_t d = anchors.dim(), C = anchors.num_classes();
  Vector s(d, 0.0);
  const Vector di = anchors.anchor(i);
  for (std::size_t j = 0; j < C; ++j) {
    if (j == i) continue;
    const Vector dj = anchors.anchor(j);
    const double dist2 = squared_distance(di, dj);
    if (dist2 <= 1e-12) {
      throw GeometryError("constraint_vector: anchors " + std::to_string(i) + " and " + std::to_string(j) +
                          " coincide");
    }
    for (std::size_t k = 0; k < d; ++k) s[k] -= dj[k] / dist2;
  }
  return s;
}

AnchorStep refine_anchor(std::span<const double> delta, std::span<const double> deviation, double gamma,
                         std::span<const double> constraint, const RefineConfig& cfg) {
  const std::size_t d = delta.size();
  if (deviation.size() != d || constraint.size() != d) throw DimensionError("refine_anchor: length mismatch");
  if (std::abs(norm2(delta) - 1.0) > 1e-6) throw ValueError("refine_anchor: anchor is not unit norm");

  // delta~ - delta = gamma v + s
  Vector step(d);
  for (std::size_t k = 0; k < d; ++k) step[k] = gamma * deviation[k] + constraint[k];
  const double len = norm2(step);
  AnchorStep out;
  out.scale = std::min(1.0, cfg.eta / (len + cfg.eps));
  out.chord = out.scale * len;

  Vector moved(d);
  for (std::size_t k = 0; k < d; ++k) moved[k] = delta[k] + out.scale * step[k];
  const double nrm = norm2(moved);
  if (nrm <= 1e-12) throw GeometryError("refine_anchor: update collapses the anchor to the origin");
  for (double& x : moved) x /= nrm;
  out.refined = std::move(moved);
  return out;
}

AnchorRefinement refine_all_anchors(const EtfAnchors& anchors, std::span<const SemanticReport> reports,
                                    const RefineConfig& cfg) {
  cfg.validate();
  const std::size_t C = anchors.num_classes();
  AnchorRefinement out{anchors, anchors.gram_drift(), 0.0, 0.0, std::vector<bool>(C, false)};

  std::vector<bool> reported(C, false);
  for (const auto& r : reports)
    for (std::size_t i = 0; i < C; ++i) reported[i] = reported[i] || r.present[i];

  const auto v = deviation_vectors(reports, anchors);
  const Vector gamma = difficulty_weights(reports, C, cfg.tau);
  for (std::size_t i = 0; i < C; ++i) {
    if (!reported[i]) continue;
    const Vector s = constraint_vector(anchors, i);
    const AnchorStep step = refine_anchor(anchors.anchor(i), v[i], gamma[i], s, cfg);
    out.anchors.delta.set_col(i, step.refined);
    out.max_chord = std::max(out.max_chord, step.chord);
    out.updated[i] = true;
  }
  out.drift_after = out.anchors.gram_drift();
  return out;
}

double gw_2point_distances(double alpha, double beta) {
  // cost(t) = 4 t (1/2 - t) (alpha^2 + beta^2) + (2 t^2 + 2 (1/2 - t)^2) (alpha - beta)^2
  //         = c2 t^2 + c1 t + c0 on t in [0, 1/2].
  const double sum_sq = alpha * alpha + beta * beta;
  const double diff_sq = (alpha - beta) * (alpha - beta);
  const double c2 = -4.0 * sum_sq + 4.0 * diff_sq;
  const double c1 = 2.0 * sum_sq - 2.0 * diff_sq;
  const double c0 = 0.5 * diff_sq;
  auto cost = [&](double t) { return (c2 * t + c1) * t + c0; };
  double best = std::min(cost(0.0), cost(0.5));
  if (c2 > 0.0) {
    const double vertex = -c1 / (2.0 * c2);
    if (vertex > 0.0 && vertex < 0.5) best = std::min(best, cost(vertex));
  }
  return std::max(best, 0.0);
}

double intra_distance(const Matrix& two_rows) {
  if (two_rows.rows() != 2) throw DimensionError("intra_distance: expected 2 rows");
  return std::sqrt(squared_distance(two_rows.row(0), two_rows.row(1)));
}

double gw_2point(const Matrix& a, const Matrix& b) {
  return gw_2point_distances(intra_distance(a), intra_distance(b));
}

namespace {

double objective_at_beta(std::span<const StructuralReport> reports, std::size_t q, double beta) {
  double total = 0.0;
  for (const auto& r : reports) {
    for (std::size_t b = 0; b < r.radials.size(); ++b) {
      const double w = r.f(b, q);
      if (w != 0.0) total += w * gw_2point_distances(intra_distance(r.radials[b]), beta);
    }
  }
  return total;
}

}  // namespace

double template_objective(std::span<const StructuralReport> reports, std::size_t q, const Matrix& templ) {
  return objective_at_beta(reports, q, intra_distance(templ));
}

TemplateUpdate update_template(std::size_t q, std::span<const StructuralReport> reports,
                               const StructuralTemplates& templates, const RefineConfig& cfg) {
  if (q >= templates.size()) throw ParameterError("update_template: template index out of range");
  const Matrix& current = templates.templates[q];
  const std::size_t d = current.cols();
  TemplateUpdate out{current, 0.0, 0.0, false};
  out.objective_before = template_objective(reports, q, current);
  out.objective_after = out.objective_before;

  double mass = 0.0, max_alpha = 0.0;
  Matrix mean(2, d);
  for (const auto& r : reports) {
    if (r.f.rows() != r.radials.size() || r.f.cols() != templates.size()) {
      throw DimensionError("update_template: matching matrix shape != B x Q");
    }
    for (std::size_t b = 0; b < r.radials.size(); ++b) {
      const double w = r.f(b, q);
      if (w <= 0.0) continue;
      mass += w;
      max_alpha = std::max(max_alpha, intra_distance(r.radials[b]));
      mean += r.radials[b] * w;
    }
  }
  if (!(mass > 0.0)) return out;
  mean *= 1.0 / mass;

  // Stage 1: intra-distance of the barycenter (GW sees the template only through it).
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 0.0, hi = max_alpha;
  double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
  double f1 = objective_at_beta(reports, q, x1), f2 = objective_at_beta(reports, q, x2);
  const double stop = cfg.gw_tol * std::max(max_alpha, 1.0);
  while (hi - lo > stop) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = objective_at_beta(reports, q, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = objective_at_beta(reports, q, x2);
    }
  }
  double beta = 0.5 * (lo + hi);
  double best = objective_at_beta(reports, q, beta);
  const double beta_old = intra_distance(current);
  if (out.objective_before < best) {
    beta = beta_old;
    best = out.objective_before;
  }

  // Stage 2: place the two rows symmetrically about the weighted mean's midpoint.
  Vector mid(d), dir(d);
  for (std::size_t j = 0; j < d; ++j) {
    mid[j] = 0.5 * (mean(0, j) + mean(1, j));
    dir[j] = mean(0, j) - mean(1, j);
  }
  double len = norm2(dir);
  if (len <= 1e-15) {
    std::mt19937_64 rng(cfg.seed ^ (0x5851f42d4c957f2dULL * (q + 1)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : dir) x = normal(rng);
    len = norm2(dir);
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double offset = 0.5 * beta * dir[j] / len;
    out.templ(0, j) = mid[j] + offset;
    out.templ(1, j) = mid[j] - offset;
  }
  out.objective_after = template_objective(reports, q, out.templ);
  out.updated = true;
  return out;
}

double max_projected_chord(double eta) {
  if (!(eta > 0.0) || eta >= 1.0) throw ParameterError("max_projected_chord: eta must lie in (0, 1)");
  return 2.0 * std::sin(0.5 * std::asin(eta));
}

}  // namespace fedgmc
