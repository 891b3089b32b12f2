#include "guardnet/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

#include <omp.h>

namespace guardnet::kernels {
namespace {

std::atomic<Exec> g_exec{Exec::parallel};

template <class T>
inline void gemm_row(std::size_t i, bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                     const T* a, const T* b, T* c) {
  T* crow = c + i * n;
  if (!trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = trans_a ? a[p * m + i] : a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc{0};
      if (trans_a) {
        for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
      } else {
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      }
      crow[j] += acc;
    }
  }
}

template <class T>
inline void softmax_row(const T* in, T* out, std::size_t cols) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, in[j]);
  T total{0};
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    total += out[j];
  }
  for (std::size_t j = 0; j < cols; ++j) out[j] /= total;
}

}  // namespace

Exec default_exec() noexcept { return g_exec.load(std::memory_order_relaxed); }
void set_default_exec(Exec e) noexcept { g_exec.store(e, std::memory_order_relaxed); }

template <class T>
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) gemm_row(i, trans_a, trans_b, m, n, k, a, b, c);
}

template <class T>
void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                   const T* a, const T* b, T* c) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelMinWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_row(static_cast<std::size_t>(i), trans_a, trans_b, m, n, k, a, b, c);
  }
}

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, Exec exec) {
  if (exec == Exec::parallel) {
    gemm_parallel(trans_a, trans_b, m, n, k, a, b, c);
  } else {
    gemm_serial(trans_a, trans_b, m, n, k, a, b, c);
  }
}

template <class T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t cols, Exec exec) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelMinWork)
    for (std::ptrdiff_t i = 0; i < r; ++i) softmax_row(in + i * cols, out + i * cols, cols);
  } else {
    for (std::ptrdiff_t i = 0; i < r; ++i) softmax_row(in + i * cols, out + i * cols, cols);
  }
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& body, Exec exec) {
  const auto count = static_cast<std::ptrdiff_t>(n);
  if (exec == Exec::serial || n < 2) {
    for (std::ptrdiff_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
    return;
  }
  std::exception_ptr first;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

SingleThreadScope::SingleThreadScope() : saved_threads_(omp_get_max_threads()), saved_exec_(default_exec()) {
  omp_set_num_threads(1);
  set_default_exec(Exec::serial);
}

SingleThreadScope::~SingleThreadScope() {
  omp_set_num_threads(saved_threads_);
  set_default_exec(saved_exec_);
}

int max_threads() noexcept { return omp_get_max_threads(); }

#define GUARDNET_INSTANTIATE(T)                                                                        \
  template void gemm_serial<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void gemm_parallel<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*,   \
                                 T*);                                                                  \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, Exec); \
  template void softmax_rows<T>(const T*, T*, std::size_t, std::size_t, Exec);

GUARDNET_INSTANTIATE(float)
GUARDNET_INSTANTIATE(double)
#undef GUARDNET_INSTANTIATE

}  // namespace guardnet::kernels
