#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>

#include "guardnet/encoder.hpp"
#include "guardnet/labels.hpp"

namespace guardnet {

/// CLS-query attention pooling. Scores are
///   s_i = scale * (H[0] W_q) . (H[i] W_k)
/// over unmasked positions; masked positions get -1e9 before the softmax.
/// Values are the raw hidden rows.
template <class T>
struct AttnPoolParams {
  Tensor<T> w_query;  // d x d_a
  Tensor<T> w_key;    // d x d_a
  double dropout_rate = 0.1;

  std::size_t attn_dim() const noexcept { return w_query.cols(); }
  T scale() const { return T{1} / std::sqrt(static_cast<T>(attn_dim())); }
  void validate() const;

  template <class Self, class Fn>
  static void visit(Self& s, const std::string& prefix, Fn&& fn) {
    fn(prefix + "w_query", s.w_query);
    fn(prefix + "w_key", s.w_key);
  }

  template <class U>
  AttnPoolParams<U> cast() const {
    return {w_query.template cast<U>(), w_key.template cast<U>(), dropout_rate};
  }
};

// One independent parameter set per label, indexed by Label.
template <class T>
struct PerLabelAttnParams {
  std::array<AttnPoolParams<T>, kNumLabels> per_label;

  template <class Self, class Fn>
  static void visit(Self& s, const std::string& prefix, Fn&& fn) {
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      AttnPoolParams<T>::visit(s.per_label[k], prefix + std::string(label_name(static_cast<Label>(k))) + ".", fn);
    }
  }

  template <class U>
  PerLabelAttnParams<U> cast() const {
    return {{per_label[0].template cast<U>(), per_label[1].template cast<U>()}};
  }
};

AttnPoolParams<double> init_attn_pool(std::size_t d, std::size_t d_attn, double dropout_rate, std::mt19937_64& rng);

template <class T>
struct PooledVar {
  Var<T> vector;   // 1 x d
  Var<T> weights;  // 1 x L
};

// Arithmetic mean of the rows whose mask is 1. Throws UsageError on an all-zero mask.
template <class T>
Var<T> mean_pool(Var<T> hidden, std::span<const std::uint8_t> mask);

template <class T>
Var<T> cls_pool(Var<T> hidden);

template <class T>
PooledVar<T> attn_pool(Var<T> hidden, std::span<const std::uint8_t> mask, const AttnPoolParams<T>& p,
                       const ForwardMode& mode);

template <class T>
std::array<PooledVar<T>, kNumLabels> per_label_attn_pool(Var<T> hidden, std::span<const std::uint8_t> mask,
                                                          const PerLabelAttnParams<T>& p, const ForwardMode& mode);

}  // namespace guardnet
