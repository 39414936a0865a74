#include "fedgmc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

// Orthogonalize `v` against the first `count` columns of `basis` (two passes of
// modified Gram-Schmidt). Returns the residual norm before normalization.
double orthonormalize_against(Matrix& basis, std::size_t count, Vector& v) {
  const std::size_t n = basis.rows();
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t k = 0; k < count; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += basis(i, k) * v[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= proj * basis(i, k);
    }
  }
  const double nrm = norm2(v);
  if (nrm > 0.0) {
    for (double& x : v) x /= nrm;
  }
  return nrm;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector Matrix::col(std::size_t c) const {
  Vector v(rows_);
  for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
  return v;
}

void Matrix::set_col(std::size_t c, std::span<const double> v) {
  if (v.size() != rows_) throw DimensionError("Matrix::set_col: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw DimensionError("matvec: length mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw DimensionError("matvec_t: length mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

double frobenius_norm_sq(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return s;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(frobenius_norm_sq(m)); }

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s = std::max(s, std::abs(x));
  return s;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Matrix& m) { return all_finite(std::span<const double>(m.data())); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

SvdResult svd(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("svd: matrix must be square");
  if (m.rows() == 0) throw DimensionError("svd: empty matrix");
  if (!all_finite(m)) throw ValueError("svd: non-finite entry");

  const std::size_t n = m.rows();
  Matrix w = m;  // columns converge to u_j * sigma_j
  Matrix v = Matrix::identity(n);

  constexpr int kMaxSweeps = 80;
  constexpr double kTol = 1e-15;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          alpha += w(i, p) * w(i, p);
          beta += w(i, q) * w(i, q);
          gamma += w(i, p) * w(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w(i, j) * w(i, j);
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  SvdResult out{Matrix(n, n), Vector(n, 0.0), Matrix(n, n)};
  Matrix vs(n, n);
  for (std::size_t k = 0; k < n; ++k) vs.set_col(k, v.col(order[k]));

  const double smax = norms[order[0]];
  const double zero_cut = std::max(smax * 1e-13, std::numeric_limits<double>::min());
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    Vector cand(n);
    double nrm = 0.0;
    if (norms[j] > zero_cut) {
      for (std::size_t i = 0; i < n; ++i) cand[i] = w(i, j) / norms[j];
      nrm = orthonormalize_against(out.u, k, cand);
      out.sigma[k] = norms[j];
    }
    if (nrm < 0.5) {
      // Null direction: prefer the matching right vector so that symmetric
      // inputs get u_k == v_k, then fall back to canonical basis vectors.
      cand = vs.col(k);
      nrm = orthonormalize_against(out.u, k, cand);
      if (nrm < 0.5) {
        // Some basis vector keeps at least sqrt((n - k) / n) of its length.
        double best = -1.0;
        for (std::size_t e = 0; e < n; ++e) {
          Vector trial(n, 0.0);
          trial[e] = 1.0;
          const double r = orthonormalize_against(out.u, k, trial);
          if (r > best) {
            best = r;
            cand = std::move(trial);
          }
        }
      }
      out.sigma[k] = norms[j] > zero_cut ? norms[j] : 0.0;
    }
    out.u.set_col(k, cand);
  }

  for (std::size_t k = 0; k < n; ++k) {
    double first = 0.0;
    for (std::size_t i = 0; i < n && first == 0.0; ++i) {
      if (std::abs(out.u(i, k)) > 1e-14) first = out.u(i, k);
    }
    if (first < 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        out.u(i, k) = -out.u(i, k);
        vs(i, k) = -vs(i, k);
      }
    }
  }
  out.vt = vs.transpose();
  return out;
}

Vector softmax(std::span<const double> v, double tau) {
  if (!(tau > 0.0)) throw ParameterError("softmax: temperature must be positive");
  if (!all_finite(v)) throw ValueError("softmax: non-finite input");
  Vector out(v.size());
  if (v.empty()) return out;
  const double vmax = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp((v[i] - vmax) / tau);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double nrm = norm2(row);
    if (nrm == 0.0) continue;
    for (double& x : row) x /= nrm;
  }
  return out;
}

Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
  if (d == 0) throw ParameterError("random_orthogonal: dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, d);
  for (double& x : g.data()) x = normal(rng);

  // Gram-Schmidt on columns yields Q with R_kk = residual norm > 0.
  Matrix q(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    Vector c = g.col(k);
    double nrm = orthonormalize_against(q, k, c);
    for (std::size_t e = 0; nrm < 1e-12 && e < d; ++e) {
      c.assign(d, 0.0);
      c[e] = 1.0;
      nrm = orthonormalize_against(q, k, c);
    }
    q.set_col(k, c);
  }
  return q;
}

}  // namespace fedgmc
