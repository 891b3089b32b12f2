#include "guardnet/pooling.hpp"

#include <algorithm>

#include "guardnet/error.hpp"

namespace guardnet {

template <class T>
void AttnPoolParams<T>::validate() const {
  if (w_query.rank() != 2 || w_key.rank() != 2 || w_query.shape() != w_key.shape()) {
    throw DimensionError("attention pooling projections must share shape d x d_a");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("pooling dropout rate must lie in [0, 1)");
}

template struct AttnPoolParams<float>;
template struct AttnPoolParams<double>;

AttnPoolParams<double> init_attn_pool(std::size_t d, std::size_t d_attn, double dropout_rate, std::mt19937_64& rng) {
  AttnPoolParams<double> p{Tensor64::normal({d, d_attn}, 0.02, rng), Tensor64::normal({d, d_attn}, 0.02, rng),
                           dropout_rate};
  p.validate();
  return p;
}

namespace {

void check_mask(std::span<const std::uint8_t> mask, std::size_t rows) {
  if (mask.size() != rows) {
    throw DimensionError("mask length " + std::to_string(mask.size()) + " does not match " + std::to_string(rows) +
                         " hidden rows");
  }
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m == 1; })) {
    throw UsageError("pooling over an all-zero mask");
  }
}

}  // namespace

template <class T>
Var<T> mean_pool(Var<T> hidden, std::span<const std::uint8_t> mask) {
  check_mask(mask, hidden.rows());
  const auto count = static_cast<T>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  Tensor<T> w({1, mask.size()});
  for (std::size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] ? T{1} / count : T{0};
  return matmul(hidden.tape().leaf(std::move(w)), hidden);
}

template <class T>
Var<T> cls_pool(Var<T> hidden) {
  if (hidden.rows() < 1) throw DimensionError("cls_pool on an empty sequence");
  return slice_rows(hidden, 0, 1);
}

template <class T>
PooledVar<T> attn_pool(Var<T> hidden, std::span<const std::uint8_t> mask, const AttnPoolParams<T>& p,
                       const ForwardMode& mode) {
  check_mask(mask, hidden.rows());
  if (mask[0] != 1) throw UsageError("attention pooling needs an unmasked CLS position");
  Tape<T>& tape = hidden.tape();
  Var<T> query = matmul(cls_pool(hidden), tape.param(p.w_query));  // 1 x d_a
  Var<T> keys = matmul(hidden, tape.param(p.w_key));                // L x d_a
  Var<T> scores = scale(matmul(query, transpose(keys)), p.scale());  // 1 x L
  if (mode.training() && p.dropout_rate > 0.0) {
    if (mode.rng == nullptr) throw UsageError("training-mode pooling needs a random generator");
    // Dropout acts on raw scores, before the mask is applied.
    scores = dropout(scores, p.dropout_rate, *mode.rng);
  }
  Tensor<T> bias({1, mask.size()});
  for (std::size_t i = 0; i < mask.size(); ++i) bias[i] = mask[i] ? T{0} : T(-1e9);
  Var<T> weights = softmax(add(scores, tape.leaf(std::move(bias))), 1);
  return {matmul(weights, hidden), weights};
}

template <class T>
std::array<PooledVar<T>, kNumLabels> per_label_attn_pool(Var<T> hidden, std::span<const std::uint8_t> mask,
                                                          const PerLabelAttnParams<T>& p, const ForwardMode& mode) {
  return {attn_pool(hidden, mask, p.per_label[0], mode), attn_pool(hidden, mask, p.per_label[1], mode)};
}

#define GUARDNET_INSTANTIATE(T)                                                                             \
  template Var<T> mean_pool<T>(Var<T>, std::span<const std::uint8_t>);                                      \
  template Var<T> cls_pool<T>(Var<T>);                                                                      \
  template PooledVar<T> attn_pool<T>(Var<T>, std::span<const std::uint8_t>, const AttnPoolParams<T>&,       \
                                     const ForwardMode&);                                                   \
  template std::array<PooledVar<T>, kNumLabels> per_label_attn_pool<T>(                                     \
      Var<T>, std::span<const std::uint8_t>, const PerLabelAttnParams<T>&, const ForwardMode&);

GUARDNET_INSTANTIATE(float)
GUARDNET_INSTANTIATE(double)
#undef GUARDNET_INSTANTIATE

}  // namespace guardnet
