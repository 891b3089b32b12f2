#pragma once

#include <random>
#include <string>
#include <vector>

#include "guardnet/ops.hpp"

namespace guardnet {

// Two outputs, one per label.
template <class T>
struct LinearHead {
  Tensor<T> weight;  // d x 2
  Tensor<T> bias;    // 1 x 2

  template <class Self, class Fn>
  static void visit(Self& s, const std::string& prefix, Fn&& fn) {
    fn(prefix + "weight", s.weight);
    fn(prefix + "bias", s.bias);
  }

  template <class U>
  LinearHead<U> cast() const {
    return {weight.template cast<U>(), bias.template cast<U>()};
  }
};

template <class T>
struct ResidualBlock {
  Tensor<T> w1, b1, w2, b2;  // h x h, 1 x h, h x h, 1 x h
};

/// Skip-connected feed-forward head producing one logit:
///   x0 = v proj_in;  x_{i+1} = x_i + gelu(x_i W1 + b1) W2 + b2;  logit = x_n out
template <class T>
struct ResidualHead {
  Tensor<T> proj_in;  // d x h
  std::vector<ResidualBlock<T>> blocks;
  Tensor<T> out;  // h x 1

  template <class Self, class Fn>
  static void visit(Self& s, const std::string& prefix, Fn&& fn) {
    fn(prefix + "proj_in", s.proj_in);
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
      const std::string p = prefix + "block" + std::to_string(i) + ".";
      fn(p + "w1", s.blocks[i].w1);
      fn(p + "b1", s.blocks[i].b1);
      fn(p + "w2", s.blocks[i].w2);
      fn(p + "b2", s.blocks[i].b2);
    }
    fn(prefix + "out", s.out);
  }

  template <class U>
  ResidualHead<U> cast() const {
    ResidualHead<U> o{proj_in.template cast<U>(), {}, out.template cast<U>()};
    for (const auto& b : blocks) {
      o.blocks.push_back({b.w1.template cast<U>(), b.b1.template cast<U>(), b.w2.template cast<U>(),
                          b.b2.template cast<U>()});
    }
    return o;
  }
};

LinearHead<double> init_linear_head(std::size_t d, std::mt19937_64& rng);
ResidualHead<double> init_residual_head(std::size_t d, std::size_t width, std::size_t n_blocks, std::mt19937_64& rng);

// v is 1 x d; returns 1 x 2 logits.
template <class T>
Var<T> linear_head_forward(const LinearHead<T>& head, Var<T> v);

// v is 1 x d; returns a 1 x 1 logit.
template <class T>
Var<T> residual_head_forward(const ResidualHead<T>& head, Var<T> v);

}  // namespace guardnet
