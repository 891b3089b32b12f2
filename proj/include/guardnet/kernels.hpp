#pragma once

#include <cstddef>
#include <functional>

namespace guardnet::kernels {

// Every parallel kernel has a serial twin computing the same per-element
// reduction order, so the two produce bitwise-identical results.
enum class Exec { serial, parallel };

Exec default_exec() noexcept;
void set_default_exec(Exec e) noexcept;

// Work below this many multiply-adds stays on the calling thread.
inline constexpr std::size_t kParallelMinWork = 1u << 16;

// C[m x n] += op(A) * op(B); op(A) is m x k, op(B) is k x n.
// trans_a: A is stored k x m. trans_b: B is stored n x k.
template <class T>
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const T* a, const T* b, T* c);
template <class T>
void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                   const T* a, const T* b, T* c);
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, Exec exec = default_exec());

// Row-wise numerically stable softmax over a rows x cols block.
template <class T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t cols, Exec exec = default_exec());

// Runs body(i) for i in [0, n). Iterations must write disjoint outputs.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& body,
                    Exec exec = default_exec());

// Pins OpenMP to one thread for the lifetime of the guard.
class SingleThreadScope {
 public:
  SingleThreadScope();
  ~SingleThreadScope();
  SingleThreadScope(const SingleThreadScope&) = delete;
  SingleThreadScope& operator=(const SingleThreadScope&) = delete;

 private:
  int saved_threads_;
  Exec saved_exec_;
};

int max_threads() noexcept;

}  // namespace guardnet::kernels
