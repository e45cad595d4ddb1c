#pragma once

#include <cmath>

namespace inode::ad::kernels {

// Forward kernels shared by the tape and the plain engine, so both evaluation
// paths perform the exact same floating-point operations in the same order.

inline void add(double* y, const double* a, const double* b, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
inline void sub(double* y, const double* a, const double* b, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] - b[i];
}
inline void mul(double* y, const double* a, const double* b, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
inline void div(double* y, const double* a, const double* b, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] / b[i];
}
inline void axpy(double* y, const double* a, const double* b, double k, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] + k * b[i];
}
inline void scale(double* y, const double* a, double k, int n) {
  for (int i = 0; i < n; ++i) y[i] = k * a[i];
}
inline void add_const(double* y, const double* a, double k, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] + k;
}

inline void matvec(double* y, const double* w, const double* x, int m, int n) {
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = w + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}
inline void affine(double* y, const double* w, const double* x, const double* b, int m, int n) {
  for (int i = 0; i < m; ++i) {
    double acc = b[i];
    const double* row = w + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}
inline void matmul(double* y, const double* a, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      y[i * n + j] = acc;
    }
  }
}

inline double sigmoid1(double x) {
  // Stable on both tails.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus1(double x) {
  // max(x,0) + log1p(exp(-|x|)), branch-free.
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

inline void tanh(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = std::tanh(a[i]);
}
inline void sigmoid(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = sigmoid1(a[i]);
}
inline void relu(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
}
inline void softplus(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = softplus1(a[i]);
}
inline void exp(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = std::exp(a[i]);
}
inline void log(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = std::log(a[i]);
}
inline void sqrt(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = std::sqrt(a[i]);
}
inline void square(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] * a[i];
}

inline double sum(const double* a, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i];
  return acc;
}
inline double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace inode::ad::kernels
