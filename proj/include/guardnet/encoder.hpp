#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "guardnet/embedding_store.hpp"
#include "guardnet/ops.hpp"
#include "guardnet/tokenizer.hpp"

namespace guardnet {

struct EncoderConfig {
  std::size_t vocab_size = kVocabSize;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_len = 512;
  double dropout = 0.1;

  void validate() const;
};

enum class Mode { train, eval };

// Training mode enables dropout and needs a generator to draw masks from.
struct ForwardMode {
  Mode mode = Mode::eval;
  std::mt19937_64* rng = nullptr;

  bool training() const noexcept { return mode == Mode::train; }
  static ForwardMode eval() { return {}; }
  static ForwardMode train(std::mt19937_64& rng) { return {Mode::train, &rng}; }
};

template <class T>
struct EncoderLayer {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> w1, b1, w2, b2;

  template <class Self, class Fn>
  static void visit(Self& s, const std::string& prefix, Fn&& fn) {
    fn(prefix + "ln1_gamma", s.ln1_gamma);
    fn(prefix + "ln1_beta", s.ln1_beta);
    fn(prefix + "wq", s.wq);
    fn(prefix + "bq", s.bq);
    fn(prefix + "wk", s.wk);
    fn(prefix + "bk", s.bk);
    fn(prefix + "wv", s.wv);
    fn(prefix + "bv", s.bv);
    fn(prefix + "wo", s.wo);
    fn(prefix + "bo", s.bo);
    fn(prefix + "ln2_gamma", s.ln2_gamma);
    fn(prefix + "ln2_beta", s.ln2_beta);
    fn(prefix + "w1", s.w1);
    fn(prefix + "b1", s.b1);
    fn(prefix + "w2", s.w2);
    fn(prefix + "b2", s.b2);
  }
};

/// Pre-norm bidirectional transformer with learned absolute positions and a
/// final layer norm.
template <class T>
struct EncoderWeights {
  Tensor<T> token_embedding;     // vocab x d
  Tensor<T> position_embedding;  // max_len x d
  std::vector<EncoderLayer<T>> layers;
  Tensor<T> final_gamma, final_beta;

  template <class Self, class Fn>
  static void visit(Self& s, const std::string& prefix, Fn&& fn) {
    fn(prefix + "token_embedding", s.token_embedding);
    fn(prefix + "position_embedding", s.position_embedding);
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      EncoderLayer<T>::visit(s.layers[i], prefix + "layer" + std::to_string(i) + ".", fn);
    }
    fn(prefix + "final_gamma", s.final_gamma);
    fn(prefix + "final_beta", s.final_beta);
  }

  template <class U>
  EncoderWeights<U> cast() const;
};

// Normal(0, 0.02) matrices, zero biases, unit layer-norm gains.
EncoderWeights<double> init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

/// Where hidden states come from: a trainable toy encoder, or a frozen file of
/// precomputed states keyed by the SHA-256 of the text.
template <class T>
struct EmbeddingBackend {
  EncoderConfig config;
  std::variant<EncoderWeights<T>, std::shared_ptr<const PrecomputedStore>> source;

  bool precomputed() const noexcept { return source.index() == 1; }
  const EncoderWeights<T>& weights() const { return std::get<0>(source); }
  EncoderWeights<T>& weights() { return std::get<0>(source); }
  const PrecomputedStore& store() const { return *std::get<1>(source); }

  template <class U>
  EmbeddingBackend<U> cast() const;
};

EmbeddingBackend<double> make_toy_backend(const EncoderConfig& cfg, std::mt19937_64& rng);
EmbeddingBackend<double> make_precomputed_backend(std::shared_ptr<const PrecomputedStore> store,
                                                  std::size_t max_len = kDefaultMaxLen);

// Hidden states on a tape plus the mask that goes with their rows.
template <class T>
struct EncodedVar {
  Var<T> hidden;  // L x d
  std::vector<std::uint8_t> mask;
};

template <class T>
EncodedVar<T> encode_on(Tape<T>& tape, const EmbeddingBackend<T>& backend, const TokenSequence& seq,
                        const ForwardMode& mode);

template <class T>
struct Encoded {
  Tensor<T> hidden;  // L x d
  Tensor<T> cls;     // 1 x d, equal to hidden row 0
  std::vector<std::uint8_t> mask;
};

/// Runs the backend outside any training graph. Eval mode is deterministic.
template <class T>
Encoded<T> encode(const TokenSequence& seq, const EmbeddingBackend<T>& backend,
                  const ForwardMode& mode = ForwardMode::eval());

// Builds a precomputed store from eval-mode hidden states of `texts`.
PrecomputedStore export_embeddings(const EmbeddingBackend<float>& backend, const std::vector<std::string>& texts);

}  // namespace guardnet
