#pragma once

// Template bodies for ModelState; included from model.hpp.

namespace guardnet {

template <class T>
template <class Self, class Fn>
void ModelState<T>::visit(Self& s, Fn&& fn) {
  if (!s.backend.precomputed()) {
    EncoderWeights<T>::visit(std::get<0>(s.backend.source), "encoder.", fn);
  }
  std::visit(
      [&](auto& h) {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, SharangaHeads<T>>) {
          LinearHead<T>::visit(h.head, "heads.linear.", fn);
        } else if constexpr (std::is_same_v<H, MahendraHeads<T>>) {
          AttnPoolParams<T>::visit(h.pool, "heads.pool.", fn);
          for (std::size_t k = 0; k < kNumLabels; ++k) {
            ResidualHead<T>::visit(h.heads[k], "heads." + std::string(label_name(kLabels[k])) + ".", fn);
          }
        } else if constexpr (std::is_same_v<H, RaudraHeads<T>>) {
          PerLabelAttnParams<T>::visit(h.pool, "heads.pool.", fn);
          for (std::size_t k = 0; k < kNumLabels; ++k) {
            ResidualHead<T>::visit(h.heads[k], "heads." + std::string(label_name(kLabels[k])) + ".", fn);
          }
        }
      },
      s.heads);
}

template <class T>
template <class U>
ModelState<U> ModelState<T>::cast() const {
  ModelState<U> o;
  o.config = config;
  o.backend = backend.template cast<U>();
  std::visit(
      [&](const auto& h) {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, SharangaHeads<T>>) {
          o.heads = SharangaHeads<U>{h.pooling, h.head.template cast<U>()};
        } else if constexpr (std::is_same_v<H, MahendraHeads<T>>) {
          o.heads = MahendraHeads<U>{h.pool.template cast<U>(),
                                     {h.heads[0].template cast<U>(), h.heads[1].template cast<U>()}};
        } else if constexpr (std::is_same_v<H, RaudraHeads<T>>) {
          o.heads = RaudraHeads<U>{h.pool.template cast<U>(),
                                   {h.heads[0].template cast<U>(), h.heads[1].template cast<U>()}};
        } else {
          o.heads = h;
        }
      },
      heads);
  return o;
}

}  // namespace guardnet
