#pragma once

// Dense matrix kernels used by the autodiff graph. Each routine exists twice:
// an OpenMP version (rows split across threads) and a single-threaded
// reference. Every output element is reduced over the inner dimension in
// ascending order in both, so results are bitwise identical and independent
// of the thread count.

#include <cstddef>
#include <span>

namespace genparse::kernels {

// Below this many multiply-adds a kernel stays on the calling thread.
inline constexpr std::size_t kParallelWork = std::size_t(1) << 15;

// c (m x n) = a (m x k) * b (k x n)
template <typename Real>
void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, int m, int k,
            int n);
// da (m x k) += dc (m x n) * b^T
template <typename Real>
void matmul_grad_a(std::span<const Real> dc, std::span<const Real> b, std::span<Real> da, int m,
                   int k, int n);
// db (k x n) += a^T * dc
template <typename Real>
void matmul_grad_b(std::span<const Real> a, std::span<const Real> dc, std::span<Real> db, int m,
                   int k, int n);

namespace serial {

template <typename Real>
void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, int m, int k,
            int n);
template <typename Real>
void matmul_grad_a(std::span<const Real> dc, std::span<const Real> b, std::span<Real> da, int m,
                   int k, int n);
template <typename Real>
void matmul_grad_b(std::span<const Real> a, std::span<const Real> dc, std::span<Real> db, int m,
                   int k, int n);

}  // namespace serial

int max_threads();
void set_threads(int n);

}  // namespace genparse::kernels
