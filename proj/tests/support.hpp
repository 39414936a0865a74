#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fedgmc/graph.hpp"
#include "fedgmc/model.hpp"
#include "fedgmc/numerics.hpp"

namespace testing {

inline fedgmc::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  fedgmc::Matrix m(rows, cols);
  for (auto& x : m.data()) x = n(rng);
  return m;
}

inline fedgmc::Matrix naive_matmul(const fedgmc::Matrix& a, const fedgmc::Matrix& b) {
  fedgmc::Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline double orthogonality_error(const fedgmc::Matrix& q) {
  const auto g = naive_matmul(q.transpose(), q);
  double e = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) e = std::max(e, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return e;
}

// Erdos-Renyi graph with Gaussian features, random labels covering every class
// and alternating train / val / test masks.
inline fedgmc::Graph random_graph(std::size_t n, double p, std::size_t feat, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<fedgmc::Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  std::shuffle(labels.begin(), labels.end(), rng);
  auto g = fedgmc::Graph::from_edges(n, edges, random_matrix(n, feat, seed ^ 0x5eedULL), labels, classes);
  g.train_mask.assign(n, false);
  g.val_mask.assign(n, false);
  g.test_mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 3 == 0 || i < static_cast<std::size_t>(classes)) g.train_mask[i] = true;
    else if (i % 3 == 1) g.val_mask[i] = true;
    else g.test_mask[i] = true;
  }
  // make sure every class has a train node
  for (std::size_t i = 0; i < n; ++i) {
    if (g.train_mask[i]) continue;
    bool seen = false;
    for (std::size_t j = 0; j < n; ++j) seen |= g.train_mask[j] && g.labels[j] == g.labels[i];
    if (!seen) {
      g.val_mask[i] = g.test_mask[i] = false;
      g.train_mask[i] = true;
    }
  }
  return g;
}

inline std::vector<double*> param_slots(fedgmc::ModelParams& p) {
  std::vector<double*> out;
  for (auto& x : p.w_ego.data()) out.push_back(&x);
  for (auto& x : p.w_cls.data()) out.push_back(&x);
  for (auto& x : p.b_cls) out.push_back(&x);
  return out;
}

inline std::vector<double> flatten(const fedgmc::ModelParams& p) {
  std::vector<double> out(p.w_ego.data());
  out.insert(out.end(), p.w_cls.data().begin(), p.w_cls.data().end());
  out.insert(out.end(), p.b_cls.begin(), p.b_cls.end());
  return out;
}

// Central differences of f at every parameter entry.
inline std::vector<double> numeric_gradient(fedgmc::ModelParams p, const std::function<double(const fedgmc::ModelParams&)>& f,
                                            double h = 1e-6) {
  std::vector<double> g;
  for (double* slot : param_slots(p)) {
    const double x = *slot;
    *slot = x + h;
    const double up = f(p);
    *slot = x - h;
    const double down = f(p);
    *slot = x;
    g.push_back((up - down) / (2.0 * h));
  }
  return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

}  // namespace testing
