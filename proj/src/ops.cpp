#include "guardnet/ops.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "guardnet/kernels.hpp"

namespace guardnet {

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "' (valid: gelu, sigmoid, tanh)");
}

namespace {

template <class T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " needs a rank-2 tensor, got " + shape_str(t.shape()));
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Tensor<T> out({m, n});
  kernels::gemm(false, false, m, n, k, av.data(), bv.data(), out.data());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, n, k](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      kernels::gemm(false, true, m, k, n, g.data(), t.value(ib).data(), t.grad(ia).data());
    }
    if (t.requires_grad(ib)) {
      kernels::gemm(true, false, k, n, m, t.value(ia).data(), g.data(), t.grad(ib).data());
    }
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  const auto& av = a.value();
  require_matrix(av, "transpose");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = av(i, j);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, m, n](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(j, i);
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool broadcast = !same && av.rank() == 2 && bv.size() == av.cols() && bv.rows() == 1;
  if (!same && !broadcast) {
    throw DimensionError("add shape mismatch: " + shape_str(av.shape()) + " + " + shape_str(bv.shape()));
  }
  Tensor<T> out = av;
  const std::size_t cols = av.cols();
  if (same) {
    accumulate(out, bv);
  } else {
    for (std::size_t r = 0; r < av.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) out(r, c) += bv[c];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, same, cols](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad(ia), g);
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      if (same) {
        accumulate(gb, g);
      } else {
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
      }
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("mul shape mismatch: " + shape_str(av.shape()) + " * " + shape_str(bv.shape()));
  }
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      const Tensor<T>& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      const Tensor<T>& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

template <class T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const auto& xv = x.value();
  if (xv.rank() == 0 || xv.rank() > 2 || axis >= xv.rank()) {
    throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for shape " + shape_str(xv.shape()));
  }
  if (xv.shape()[axis] == 0) throw DimensionError("softmax over an empty axis");
  // Normalize along the last axis; axis 0 of a matrix goes through a transpose.
  const bool along_rows = xv.rank() == 1 || axis == 1;
  const std::size_t rows = xv.rank() == 1 ? 1 : (along_rows ? xv.rows() : xv.cols());
  const std::size_t cols = xv.rank() == 1 ? xv.size() : (along_rows ? xv.cols() : xv.rows());
  auto at = [&](std::size_t r, std::size_t c) { return along_rows ? r * cols + c : c * rows + r; };

  std::vector<T> in(rows * cols), y(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) in[r * cols + c] = xv[at(r, c)];
  kernels::softmax_rows(in.data(), y.data(), rows, cols);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[at(r, c)] = y[r * cols + c];

  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, rows, cols, along_rows](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& yv = t.value(self);
    Tensor<T>& gx = t.grad(ix);
    auto idx = [&](std::size_t r, std::size_t c) { return along_rows ? r * cols + c : c * rows + r; };
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += g[idx(r, c)] * yv[idx(r, c)];
      for (std::size_t c = 0; c < cols; ++c) gx[idx(r, c)] += yv[idx(r, c)] * (g[idx(r, c)] - dot);
    }
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  const auto& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) {
    throw DimensionError("layer_norm gamma/beta must have " + std::to_string(cols) + " entries");
  }
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out({rows, cols});
  // xhat and 1/sigma are kept for the backward pass.
  auto xhat = std::make_shared<Tensor<T>>(Shape{rows, cols});
  auto inv_sigma = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T mu{0};
    for (std::size_t c = 0; c < cols; ++c) mu += xv(r, c);
    mu /= static_cast<T>(cols);
    T var{0};
    for (std::size_t c = 0; c < cols; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<T>(cols);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (xv(r, c) - mu) * is;
      (*xhat)(r, c) = h;
      out(r, c) = gv[c] * h + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [ix, ig, ib, rows, cols, xhat, inv_sigma](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& gv = t.value(ig);
    if (t.requires_grad(ig)) {
      Tensor<T>& gg = t.grad(ig);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * (*xhat)(r, c);
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
    }
    if (t.requires_grad(ix)) {
      Tensor<T>& gx = t.grad(ix);
      const T n = static_cast<T>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_gh{0}, mean_ghh{0};
        for (std::size_t c = 0; c < cols; ++c) {
          const T gh = g(r, c) * gv[c];
          mean_gh += gh;
          mean_ghh += gh * (*xhat)(r, c);
        }
        mean_gh /= n;
        mean_ghh /= n;
        for (std::size_t c = 0; c < cols; ++c) {
          const T gh = g(r, c) * gv[c];
          gx(r, c) += (*inv_sigma)[r] * (gh - mean_gh - (*xhat)(r, c) * mean_ghh);
        }
      }
    }
  });
}

template <class T>
Var<T> activation(Var<T> x, Activation kind) {
  Tensor<T> out = x.value();
  switch (kind) {
    case Activation::gelu:
      for (auto& v : out.values()) v = T(0.5) * v * (T{1} + std::erf(v / std::numbers::sqrt2_v<T>));
      break;
    case Activation::sigmoid:
      for (auto& v : out.values()) v = stable_sigmoid(v);
      break;
    case Activation::tanh:
      for (auto& v : out.values()) v = std::tanh(v);
      break;
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, kind](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv = t.value(ix);
    const Tensor<T>& yv = t.value(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      T d{};
      switch (kind) {
        case Activation::gelu: {
          const T v = xv[i];
          const T cdf = T(0.5) * (T{1} + std::erf(v / std::numbers::sqrt2_v<T>));
          const T pdf = std::exp(T(-0.5) * v * v) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
          d = cdf + v * pdf;
          break;
        }
        case Activation::sigmoid:
          d = yv[i] * (T{1} - yv[i]);
          break;
        case Activation::tanh:
          d = T{1} - yv[i] * yv[i];
          break;
      }
      gx[i] += g[i] * d;
    }
  });
}

template <class T>
Var<T> dropout(Var<T> x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const auto& xv = x.value();
  auto keep = std::make_shared<std::vector<T>>(xv.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T kept = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*keep)[i] = u(rng) >= rate ? kept : T{0};
    out[i] *= (*keep)[i];
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, keep](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*keep)[i];
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  T total{0};
  for (T v : x.value().values()) total += v;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor<T>({1, 1}, std::vector<T>{total}), {x}, [ix](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad(ix).values()) v += g;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(n));
}

template <class T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids) {
  const auto& tv = table.value();
  require_matrix(tv, "gather_rows");
  const std::size_t cols = tv.cols();
  Tensor<T> out({ids.size(), cols});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw DimensionError("gather_rows id " + std::to_string(ids[r]) + " out of range");
    }
    const auto src = tv.row_span(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row_span(r).begin());
  }
  const std::size_t it = table.id();
  auto idx = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [it, idx, cols](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gt = t.grad(it);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      const auto dst = static_cast<std::size_t>((*idx)[r]);
      for (std::size_t c = 0; c < cols; ++c) gt(dst, c) += g(r, c);
    }
  });
}

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  require_matrix(xv, "slice_rows");
  if (begin + count > xv.rows()) throw DimensionError("slice_rows out of range");
  const std::size_t cols = xv.cols();
  Tensor<T> out({count, cols});
  std::copy_n(xv.data() + begin * cols, count * cols, out.data());
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, begin, count, cols](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < count * cols; ++i) gx[begin * cols + i] += g[i];
  });
}

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  require_matrix(xv, "slice_cols");
  if (begin + count > xv.cols()) throw DimensionError("slice_cols out of range");
  const std::size_t rows = xv.rows();
  Tensor<T> out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, begin, count, rows](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) gx(r, begin + c) += g(r, c);
  });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_rows");
    if (p.value().cols() != cols) throw DimensionError("concat_rows column mismatch");
    rows += p.value().rows();
  }
  Tensor<T> out({rows, cols});
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, offset)
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + off);
    spans.emplace_back(p.id(), off);
    off += p.value().size();
  }
  return parts.front().tape().record(std::move(out), parts, [spans](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    for (const auto& [id, offset] : spans) {
      if (!t.requires_grad(id)) continue;
      Tensor<T>& gp = t.grad(id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
    }
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols row mismatch");
    cols += p.value().cols();
  }
  Tensor<T> out({rows, cols});
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, column offset)
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
    spans.emplace_back(p.id(), off);
    off += pv.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [spans, rows](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    for (const auto& [id, offset] : spans) {
      if (!t.requires_grad(id)) continue;
      Tensor<T>& gp = t.grad(id);
      const std::size_t pc = gp.cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, offset + c);
    }
  });
}

#define GUARDNET_INSTANTIATE(T)                                                        \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                           \
  template Var<T> transpose<T>(Var<T>);                                                \
  template Var<T> add<T>(Var<T>, Var<T>);                                              \
  template Var<T> mul<T>(Var<T>, Var<T>);                                              \
  template Var<T> scale<T>(Var<T>, T);                                                 \
  template Var<T> softmax<T>(Var<T>, std::size_t);                                     \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                            \
  template Var<T> activation<T>(Var<T>, Activation);                                   \
  template Var<T> dropout<T>(Var<T>, double, std::mt19937_64&);                        \
  template Var<T> sum<T>(Var<T>);                                                      \
  template Var<T> mean<T>(Var<T>);                                                     \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::int32_t>);               \
  template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                          \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);

GUARDNET_INSTANTIATE(float)
GUARDNET_INSTANTIATE(double)
#undef GUARDNET_INSTANTIATE

}  // namespace guardnet
