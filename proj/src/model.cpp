#include "fedgmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

bool all_finite(const ModelParams& p) {
  return fedgmc::all_finite(p.w_ego) && fedgmc::all_finite(p.w_cls) &&
         fedgmc::all_finite(std::span<const double>(p.b_cls));
}

}  // namespace

ModelParams ModelParams::init(std::size_t input_dim, std::size_t embed_dim, std::size_t num_classes,
                              std::uint64_t seed) {
  ModelParams p = zeros(input_dim, embed_dim, num_classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> ego_dist(0.0, 1.0 / std::sqrt(static_cast<double>(input_dim)));
  std::normal_distribution<double> cls_dist(0.0, 1.0 / std::sqrt(static_cast<double>(3 * embed_dim)));
  for (double& x : p.w_ego.data()) x = ego_dist(rng);
  for (double& x : p.w_cls.data()) x = cls_dist(rng);
  return p;
}

ModelParams ModelParams::zeros(std::size_t input_dim, std::size_t embed_dim, std::size_t num_classes) {
  if (input_dim == 0 || embed_dim == 0 || num_classes == 0) {
    throw ParameterError("ModelParams: dimensions must be >= 1");
  }
  return ModelParams{Matrix(input_dim, embed_dim), Matrix(3 * embed_dim, num_classes),
                     Vector(num_classes, 0.0)};
}

ModelParams& ModelParams::operator+=(const ModelParams& o) {
  w_ego += o.w_ego;
  w_cls += o.w_cls;
  if (b_cls.size() != o.b_cls.size()) throw DimensionError("ModelParams: bias size mismatch");
  for (std::size_t i = 0; i < b_cls.size(); ++i) b_cls[i] += o.b_cls[i];
  return *this;
}

ModelParams& ModelParams::operator*=(double s) {
  w_ego *= s;
  w_cls *= s;
  for (double& x : b_cls) x *= s;
  return *this;
}

NeighborhoodAggregator::NeighborhoodAggregator(const Graph& g) {
  const std::size_t n = g.num_nodes();
  hop1_.resize(n);
  hop2_.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto node = static_cast<NodeId>(v);
    const auto& n1 = g.neighbors[v];
    if (n1.empty()) {
      hop1_[v] = {{node, 1.0}};
      hop2_[v] = {{node, 1.0}};
      continue;
    }
    const double w1 = 1.0 / static_cast<double>(n1.size());
    for (NodeId u : n1) hop1_[v].emplace_back(u, w1);

    const auto n2 = k_hop_set(g, node, 2);
    if (n2.empty()) {
      hop2_[v] = hop1_[v];
      continue;
    }
    // N1 and N2 are disjoint, so the half-weights never collide.
    const double w2 = 0.5 / static_cast<double>(n2.size());
    auto& t = hop2_[v];
    t.reserve(n1.size() + n2.size());
    for (NodeId u : n1) t.emplace_back(u, 0.5 * w1);
    for (NodeId u : n2) t.emplace_back(u, w2);
  }
}

Vector NeighborhoodAggregator::apply_row(const Terms& terms, const Matrix& ego) const {
  Vector out(ego.cols(), 0.0);
  for (const auto& [u, w] : terms) {
    const auto r = ego.row(u);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * r[j];
  }
  return out;
}

Matrix NeighborhoodAggregator::apply_hop1(const Matrix& ego) const {
  Matrix out(ego.rows(), ego.cols());
  for (std::size_t v = 0; v < ego.rows(); ++v) {
    const auto r = apply_row(hop1_[v], ego);
    std::copy(r.begin(), r.end(), out.row(v).begin());
  }
  return out;
}

Matrix NeighborhoodAggregator::apply_hop2(const Matrix& ego) const {
  Matrix out(ego.rows(), ego.cols());
  for (std::size_t v = 0; v < ego.rows(); ++v) {
    const auto r = apply_row(hop2_[v], ego);
    std::copy(r.begin(), r.end(), out.row(v).begin());
  }
  return out;
}

void NeighborhoodAggregator::scatter(const Terms& terms, std::span<const double> grad_row,
                                     Matrix& ego_grad) {
  for (const auto& [u, w] : terms) {
    auto r = ego_grad.row(u);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += w * grad_row[j];
  }
}

ForwardCache forward(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg) {
  if (g.feature_dim() != params.input_dim()) {
    throw DimensionError("forward: feature dim " + std::to_string(g.feature_dim()) +
                         " != model input dim " + std::to_string(params.input_dim()));
  }
  if (params.w_cls.rows() != 3 * params.embed_dim() || params.w_cls.cols() != params.num_classes()) {
    throw DimensionError("forward: classifier shape inconsistent with embedding dim");
  }
  if (agg.num_nodes() != g.num_nodes()) throw DimensionError("forward: aggregator built for another graph");

  ForwardCache c;
  c.ego = matmul(g.features, params.w_ego);
  for (double& x : c.ego.data()) x = std::tanh(x);
  c.hop1 = agg.apply_hop1(c.ego);
  c.hop2 = agg.apply_hop2(c.ego);

  const std::size_t n = g.num_nodes(), d = params.embed_dim(), C = params.num_classes();
  c.logits = Matrix(n, C);
  for (std::size_t v = 0; v < n; ++v) {
    auto out = c.logits.row(v);
    std::copy(params.b_cls.begin(), params.b_cls.end(), out.begin());
    const Matrix* blocks[3] = {&c.ego, &c.hop1, &c.hop2};
    for (std::size_t b = 0; b < 3; ++b) {
      const auto h = blocks[b]->row(v);
      for (std::size_t j = 0; j < d; ++j) {
        const auto w = params.w_cls.row(b * d + j);
        for (std::size_t k = 0; k < C; ++k) out[k] += h[j] * w[k];
      }
    }
  }
  return c;
}

ForwardCache forward(const ModelParams& params, const Graph& g) {
  return forward(params, g, NeighborhoodAggregator(g));
}

LossAndGrad cross_entropy(const Matrix& logits, std::span<const int> labels, const std::vector<bool>& mask) {
  if (labels.size() != logits.rows() || mask.size() != logits.rows()) {
    throw DimensionError("cross_entropy: labels/mask length != logit rows");
  }
  const std::size_t count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) throw StateError("cross_entropy: empty train mask");

  LossAndGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t v = 0; v < logits.rows(); ++v) {
    if (!mask[v]) continue;
    const auto z = logits.row(v);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double x : z) sum += std::exp(x - zmax);
    const double log_norm = zmax + std::log(sum);
    const auto y = static_cast<std::size_t>(labels[v]);
    out.value += (log_norm - z[y]) * inv;
    auto g = out.grad.row(v);
    for (std::size_t k = 0; k < z.size(); ++k) g[k] = std::exp(z[k] - log_norm) * inv;
    g[y] -= inv;
  }
  return out;
}

ModelParams backward(const ModelParams& params, const Graph& g, const NeighborhoodAggregator& agg,
                     const ForwardCache& cache, const Matrix& logits_grad, const Matrix& ego_grad) {
  const std::size_t n = g.num_nodes(), d = params.embed_dim(), C = params.num_classes();
  ModelParams grads = ModelParams::zeros(params.input_dim(), d, C);

  Matrix d_ego = ego_grad.empty() ? Matrix(n, d) : ego_grad;
  if (d_ego.rows() != n || d_ego.cols() != d) throw DimensionError("backward: ego gradient shape");
  Matrix d_hop1(n, d), d_hop2(n, d);

  for (std::size_t v = 0; v < n; ++v) {
    const auto gz = logits_grad.row(v);
    bool any = false;
    for (double x : gz) any = any || x != 0.0;
    if (!any) continue;
    for (std::size_t k = 0; k < C; ++k) grads.b_cls[k] += gz[k];
    const Matrix* blocks[3] = {&cache.ego, &cache.hop1, &cache.hop2};
    Matrix* dblocks[3] = {&d_ego, &d_hop1, &d_hop2};
    for (std::size_t b = 0; b < 3; ++b) {
      const auto h = blocks[b]->row(v);
      auto dh = dblocks[b]->row(v);
      for (std::size_t j = 0; j < d; ++j) {
        const auto w = params.w_cls.row(b * d + j);
        auto gw = grads.w_cls.row(b * d + j);
        double acc = 0.0;
        for (std::size_t k = 0; k < C; ++k) {
          gw[k] += h[j] * gz[k];
          acc += w[k] * gz[k];
        }
        dh[j] += acc;
      }
    }
  }

  for (std::size_t v = 0; v < n; ++v) {
    const auto node = static_cast<NodeId>(v);
    NeighborhoodAggregator::scatter(agg.hop1_terms(node), d_hop1.row(v), d_ego);
    NeighborhoodAggregator::scatter(agg.hop2_terms(node), d_hop2.row(v), d_ego);
  }

  // tanh' = 1 - tanh^2
  for (std::size_t i = 0; i < d_ego.size(); ++i) {
    const double e = cache.ego.data()[i];
    d_ego.data()[i] *= 1.0 - e * e;
  }
  grads.w_ego = matmul_tn(g.features, d_ego);
  return grads;
}

double learning_rate(double base_lr, double decay_steps, std::size_t step) {
  if (!(base_lr > 0.0) || !(decay_steps > 0.0)) throw ParameterError("learning_rate: non-positive parameter");
  return base_lr / (1.0 + static_cast<double>(step) / decay_steps);
}

ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double lr) {
  if (!(lr > 0.0)) throw ParameterError("sgd_step: learning rate must be positive");
  if (!all_finite(grads)) throw NumericError("sgd_step: non-finite gradient");
  ModelParams out = grads;
  out *= -lr;
  out += params;
  return out;
}

}  // namespace fedgmc
