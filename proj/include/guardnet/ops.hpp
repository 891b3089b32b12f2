#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "guardnet/tape.hpp"

namespace guardnet {

enum class Activation { gelu, sigmoid, tanh };

// Throws ConfigError listing the valid names.
Activation parse_activation(std::string_view name);

template <class T>
Var<T> matmul(Var<T> a, Var<T> b);

template <class T>
Var<T> transpose(Var<T> a);

// Same-shape add, or b (1 x n) broadcast over the rows of a (m x n).
template <class T>
Var<T> add(Var<T> a, Var<T> b);

template <class T>
Var<T> mul(Var<T> a, Var<T> b);

template <class T>
Var<T> scale(Var<T> a, T s);

/// Softmax along `axis` with max subtraction. Rank-1 inputs accept axis 0 only.
template <class T>
Var<T> softmax(Var<T> x, std::size_t axis);

/// Per-row normalization to zero mean and unit population variance, then
/// gamma * xhat + beta. gamma and beta have one entry per column of x.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));

template <class T>
Var<T> activation(Var<T> x, Activation kind);

template <class T>
Var<T> gelu(Var<T> x) { return activation(x, Activation::gelu); }

template <class T>
Var<T> sigmoid(Var<T> x) { return activation(x, Activation::sigmoid); }

// Inverted dropout: kept entries are scaled by 1 / (1 - rate).
template <class T>
Var<T> dropout(Var<T> x, double rate, std::mt19937_64& rng);

template <class T>
Var<T> sum(Var<T> x);

template <class T>
Var<T> mean(Var<T> x);

template <class T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids);

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count);

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);

}  // namespace guardnet
