#include "genparse/kernels.hpp"

#include <algorithm>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace genparse::kernels {

namespace {

template <typename Real>
inline void matmul_row(const Real* a_row, const Real* b, Real* c_row, int k, int n) {
  if (n == 1) {  // matrix-vector: same ascending sum without the row loop
    Real s = 0;
    for (int p = 0; p < k; ++p) s += a_row[p] * b[p];
    c_row[0] = s;
    return;
  }
  std::fill(c_row, c_row + n, Real(0));
  for (int p = 0; p < k; ++p) {
    const Real aip = a_row[p];
    const Real* b_row = b + std::size_t(p) * n;
    for (int j = 0; j < n; ++j) c_row[j] += aip * b_row[j];
  }
}

template <typename Real>
inline void grad_a_row(const Real* dc_row, const Real* b, Real* da_row, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const Real* b_row = b + std::size_t(p) * n;
    Real s = 0;
    for (int j = 0; j < n; ++j) s += dc_row[j] * b_row[j];
    da_row[p] += s;
  }
}

template <typename Real>
inline void grad_b_row(const Real* a, const Real* dc, Real* db_row, Real* acc, int p, int m,
                       int k, int n) {
  std::fill(acc, acc + n, Real(0));
  for (int i = 0; i < m; ++i) {
    const Real aip = a[std::size_t(i) * k + p];
    const Real* dc_row = dc + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) acc[j] += aip * dc_row[j];
  }
  for (int j = 0; j < n; ++j) db_row[j] += acc[j];
}

inline bool worth_parallel(int m, int k, int n) {
  return std::size_t(m) * std::size_t(k) * std::size_t(n) >= kParallelWork;
}

}  // namespace

template <typename Real>
void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, int m, int k,
            int n) {
  const bool par = worth_parallel(m, k, n);
  (void)par;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    matmul_row(a.data() + std::size_t(i) * k, b.data(), c.data() + std::size_t(i) * n, k, n);
  }
}

template <typename Real>
void matmul_grad_a(std::span<const Real> dc, std::span<const Real> b, std::span<Real> da, int m,
                   int k, int n) {
  const bool par = worth_parallel(m, k, n);
  (void)par;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    grad_a_row(dc.data() + std::size_t(i) * n, b.data(), da.data() + std::size_t(i) * k, k, n);
  }
}

template <typename Real>
void matmul_grad_b(std::span<const Real> a, std::span<const Real> dc, std::span<Real> db, int m,
                   int k, int n) {
  const bool par = worth_parallel(m, k, n);
  (void)par;
#pragma omp parallel if (par)
  {
    std::vector<Real> acc(n);
#pragma omp for schedule(static)
    for (int p = 0; p < k; ++p) {
      grad_b_row(a.data(), dc.data(), db.data() + std::size_t(p) * n, acc.data(), p, m, k, n);
    }
  }
}

namespace serial {

template <typename Real>
void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, int m, int k,
            int n) {
  for (int i = 0; i < m; ++i) {
    matmul_row(a.data() + std::size_t(i) * k, b.data(), c.data() + std::size_t(i) * n, k, n);
  }
}

template <typename Real>
void matmul_grad_a(std::span<const Real> dc, std::span<const Real> b, std::span<Real> da, int m,
                   int k, int n) {
  for (int i = 0; i < m; ++i) {
    grad_a_row(dc.data() + std::size_t(i) * n, b.data(), da.data() + std::size_t(i) * k, k, n);
  }
}

template <typename Real>
void matmul_grad_b(std::span<const Real> a, std::span<const Real> dc, std::span<Real> db, int m,
                   int k, int n) {
  std::vector<Real> acc(n);
  for (int p = 0; p < k; ++p) {
    grad_b_row(a.data(), dc.data(), db.data() + std::size_t(p) * n, acc.data(), p, m, k, n);
  }
}

}  // namespace serial

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#if defined(_OPENMP)
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

#define GENPARSE_INSTANTIATE_KERNELS(NS, Real)                                                   \
  template void NS::matmul<Real>(std::span<const Real>, std::span<const Real>, std::span<Real>, \
                                 int, int, int);                                                \
  template void NS::matmul_grad_a<Real>(std::span<const Real>, std::span<const Real>,           \
                                        std::span<Real>, int, int, int);                        \
  template void NS::matmul_grad_b<Real>(std::span<const Real>, std::span<const Real>,           \
                                        std::span<Real>, int, int, int);

GENPARSE_INSTANTIATE_KERNELS(kernels, float)
GENPARSE_INSTANTIATE_KERNELS(kernels, double)
GENPARSE_INSTANTIATE_KERNELS(serial, float)
GENPARSE_INSTANTIATE_KERNELS(serial, double)

#undef GENPARSE_INSTANTIATE_KERNELS

}  // namespace genparse::kernels
