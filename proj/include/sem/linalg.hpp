#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sem/errors.hpp"

namespace sem {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double px, double py) : x(px), y(py) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3() = default;
  Vec3(double px, double py, double pz) : x(px), y(py), z(pz) {}

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
};

// 3x3 matrix, row-major.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }

  // Cross-product matrix [v]x with [v]x * w == v.cross(w).
  static Mat3 skew(const Vec3& v) {
    Mat3 r;
    r.m = {0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0};
    return r;
  }

  double operator()(int r, int c) const { return m[static_cast<size_t>(r) * 3 + c]; }
  double& operator()(int r, int c) { return m[static_cast<size_t>(r) * 3 + c]; }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(double s) const {
    Mat3 r = *this;
    for (double& v : r.m) v *= s;
    return r;
  }

  Mat3 operator+(const Mat3& o) const {
    Mat3 r = *this;
    for (int i = 0; i < 9; ++i) r.m[i] += o.m[i];
    return r;
  }

  Mat3 operator-(const Mat3& o) const {
    Mat3 r = *this;
    for (int i = 0; i < 9; ++i) r.m[i] -= o.m[i];
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  double trace() const { return m[0] + m[4] + m[8]; }

  Mat3 inverse() const;
};

// Dense dynamic matrix of doubles, row-major.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols), d_(static_cast<size_t>(rows) * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double at(int r, int c) const { return d_[static_cast<size_t>(r) * cols_ + c]; }
  double& at(int r, int c) { return d_[static_cast<size_t>(r) * cols_ + c]; }

  const double* row(int r) const { return d_.data() + static_cast<size_t>(r) * cols_; }
  double* row(int r) { return d_.data() + static_cast<size_t>(r) * cols_; }

  const std::vector<double>& values() const { return d_; }

  Matrix multiply(const Matrix& o) const;
  Matrix transposed() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> d_;
};

// Rodrigues rotation about an axis (normalized internally).
Mat3 axis_angle(const Vec3& axis, double angle_rad);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues come out in descending order; `vectors` holds the matching
// eigenvectors as columns.
void symmetric_eigen(const Matrix& a, std::vector<double>& values, Matrix& vectors);

struct Svd3 {
  Mat3 u;
  Vec3 s;  // singular values, descending
  Mat3 v;
};

// SVD of a 3x3 matrix via the eigendecomposition of A^T A.
Svd3 svd3(const Mat3& a);

}  // namespace sem
