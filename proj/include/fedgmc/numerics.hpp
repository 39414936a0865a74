#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedgmc {

using Vector = std::vector<double>;

// Dense row-major real matrix. Small sizes only (d <= ~128, n <= ~10^4).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vector col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> v);

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Matrix transpose() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
Vector matvec_t(const Matrix& a, std::span<const double> x);

double frobenius_norm(const Matrix& m);
double frobenius_norm_sq(const Matrix& m);
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);
bool all_finite(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);

struct SvdResult {
  Matrix u;      // d x d, orthogonal
  Vector sigma;  // descending, non-negative
  Matrix vt;     // d x d, orthogonal
};

// One-sided Jacobi SVD of a square matrix. Each left singular vector has its
// first nonzero entry non-negative (the matching right vector is flipped with it).
SvdResult svd(const Matrix& m);

// exp(v / tau) / sum exp(v / tau), evaluated with max-subtraction.
Vector softmax(std::span<const double> v, double tau);

// Rows with zero norm are returned unchanged.
Matrix l2_normalize_rows(const Matrix& m);

// Q factor of a seeded standard-normal matrix, with R's diagonal positive.
Matrix random_orthogonal(std::size_t d, std::uint64_t seed);

}  // namespace fedgmc
