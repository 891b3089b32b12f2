#include "guardnet/heads.hpp"

namespace guardnet {

LinearHead<double> init_linear_head(std::size_t d, std::mt19937_64& rng) {
  return {Tensor64::normal({d, 2}, 0.02, rng), Tensor64::zeros(1, 2)};
}

ResidualHead<double> init_residual_head(std::size_t d, std::size_t width, std::size_t n_blocks, std::mt19937_64& rng) {
  if (n_blocks < 2) throw ConfigError("residual heads need at least two blocks");
  ResidualHead<double> h;
  h.proj_in = Tensor64::normal({d, width}, 0.02, rng);
  for (std::size_t i = 0; i < n_blocks; ++i) {
    h.blocks.push_back({Tensor64::normal({width, width}, 0.02, rng), Tensor64::zeros(1, width),
                        Tensor64::normal({width, width}, 0.02, rng), Tensor64::zeros(1, width)});
  }
  h.out = Tensor64::normal({width, 1}, 0.02, rng);
  return h;
}

template <class T>
Var<T> linear_head_forward(const LinearHead<T>& head, Var<T> v) {
  Tape<T>& tape = v.tape();
  return add(matmul(v, tape.param(head.weight)), tape.param(head.bias));
}

template <class T>
Var<T> residual_head_forward(const ResidualHead<T>& head, Var<T> v) {
  Tape<T>& tape = v.tape();
  Var<T> x = matmul(v, tape.param(head.proj_in));
  for (const auto& b : head.blocks) {
    Var<T> inner = gelu(add(matmul(x, tape.param(b.w1)), tape.param(b.b1)));
    x = add(x, add(matmul(inner, tape.param(b.w2)), tape.param(b.b2)));
  }
  return matmul(x, tape.param(head.out));
}

template Var<float> linear_head_forward<float>(const LinearHead<float>&, Var<float>);
template Var<double> linear_head_forward<double>(const LinearHead<double>&, Var<double>);
template Var<float> residual_head_forward<float>(const ResidualHead<float>&, Var<float>);
template Var<double> residual_head_forward<double>(const ResidualHead<double>&, Var<double>);

}  // namespace guardnet
