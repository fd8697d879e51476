#include "sem/linalg.hpp"

#include <algorithm>
#include <numeric>

namespace sem {

Mat3 Mat3::inverse() const {
  const double d = det();
  if (std::abs(d) < 1e-300) throw Error("Mat3::inverse: singular matrix");
  Mat3 r;
  r.m = {m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
         m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
         m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
  for (double& v : r.m) v /= d;
  return r;
}

Matrix Matrix::multiply(const Matrix& o) const {
  if (cols_ != o.rows_)
    throw ShapeMismatch("Matrix::multiply: " + std::to_string(cols_) + " vs " +
                        std::to_string(o.rows_));
  Matrix r(rows_, o.cols_);
  for (int i = 0; i < rows_; ++i) {
    const double* a = row(i);
    for (int k = 0; k < cols_; ++k) {
      const double aik = a[k];
      if (aik == 0.0) continue;
      const double* b = o.row(k);
      double* out = r.row(i);
      for (int j = 0; j < o.cols_; ++j) out[j] += aik * b[j];
    }
  }
  return r;
}

Matrix Matrix::transposed() const {
  Matrix r(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) r.at(j, i) = at(i, j);
  return r;
}

Mat3 axis_angle(const Vec3& axis, double angle_rad) {
  const Vec3 k = axis.normalized();
  const Mat3 kx = Mat3::skew(k);
  return Mat3::identity() + kx * std::sin(angle_rad) +
         (kx * kx) * (1.0 - std::cos(angle_rad));
}

void symmetric_eigen(const Matrix& a, std::vector<double>& values, Matrix& vectors) {
  if (a.rows() != a.cols()) throw ShapeMismatch("symmetric_eigen: matrix not square");
  const int n = a.rows();
  Matrix s = a;
  Matrix v(n, n);
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += s.at(p, q) * s.at(p, q);
    if (off < 1e-30) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = s.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double app = s.at(p, p);
        const double aqq = s.at(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;

        for (int k = 0; k < n; ++k) {
          const double skp = s.at(k, p);
          const double skq = s.at(k, q);
          s.at(k, p) = c * skp - sn * skq;
          s.at(k, q) = sn * skp + c * skq;
        }
        for (int k = 0; k < n; ++k) {
          const double spk = s.at(p, k);
          const double sqk = s.at(q, k);
          s.at(p, k) = c * spk - sn * sqk;
          s.at(q, k) = sn * spk + c * sqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p);
          const double vkq = v.at(k, q);
          v.at(k, p) = c * vkp - sn * vkq;
          v.at(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(n);
  for (int i = 0; i < n; ++i) diag[i] = s.at(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return diag[i] > diag[j]; });

  values.resize(n);
  vectors = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    values[j] = diag[order[j]];
    for (int i = 0; i < n; ++i) vectors.at(i, j) = v.at(i, order[j]);
  }
}

Svd3 svd3(const Mat3& a) {
  Matrix ata(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(k, i) * a(k, j);
      ata.at(i, j) = s;
    }

  std::vector<double> lambda;
  Matrix vv;
  symmetric_eigen(ata, lambda, vv);

  Svd3 out;
  for (int j = 0; j < 3; ++j) {
    out.s[j] = std::sqrt(std::max(0.0, lambda[j]));
    for (int i = 0; i < 3; ++i) out.v(i, j) = vv.at(i, j);
  }

  // Columns of U from A*v_i / s_i; rebuild tiny-singular-value columns so U
  // stays orthonormal even for rank-deficient inputs.
  const double tol = 1e-12 * std::max(out.s[0], 1e-300);
  std::array<Vec3, 3> u;
  int built = 0;
  for (int j = 0; j < 3; ++j) {
    if (out.s[j] > tol) {
      Vec3 vj{out.v(0, j), out.v(1, j), out.v(2, j)};
      u[j] = (a * vj) * (1.0 / out.s[j]);
      // Gram-Schmidt against previously built columns.
      for (int k = 0; k < j; ++k) u[j] = u[j] - u[k] * u[k].dot(u[j]);
      u[j] = u[j].normalized();
      built = j + 1;
    }
  }
  if (built == 2) {
    u[2] = u[0].cross(u[1]).normalized();
  } else if (built < 2) {
    // Degenerate input; complete an arbitrary orthonormal basis.
    if (built == 0) u[0] = {1, 0, 0};
    Vec3 probe = std::abs(u[0].x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    u[1] = u[0].cross(probe).normalized();
    u[2] = u[0].cross(u[1]).normalized();
  }
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) out.u(i, j) = u[j][i];
  return out;
}

}  // namespace sem
