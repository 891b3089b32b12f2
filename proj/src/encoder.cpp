#include "guardnet/encoder.hpp"

#include <cmath>

#include "guardnet/error.hpp"

namespace guardnet {

void EncoderConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (vocab_size < static_cast<std::size_t>(kVocabSize)) throw ConfigError("vocab_size must cover the byte vocabulary");
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

namespace {

template <class T, class U>
EncoderLayer<U> cast_layer(const EncoderLayer<T>& l) {
  EncoderLayer<U> o;
  o.ln1_gamma = l.ln1_gamma.template cast<U>();
  o.ln1_beta = l.ln1_beta.template cast<U>();
  o.wq = l.wq.template cast<U>();
  o.bq = l.bq.template cast<U>();
  o.wk = l.wk.template cast<U>();
  o.bk = l.bk.template cast<U>();
  o.wv = l.wv.template cast<U>();
  o.bv = l.bv.template cast<U>();
  o.wo = l.wo.template cast<U>();
  o.bo = l.bo.template cast<U>();
  o.ln2_gamma = l.ln2_gamma.template cast<U>();
  o.ln2_beta = l.ln2_beta.template cast<U>();
  o.w1 = l.w1.template cast<U>();
  o.b1 = l.b1.template cast<U>();
  o.w2 = l.w2.template cast<U>();
  o.b2 = l.b2.template cast<U>();
  return o;
}

template <class T>
Var<T> maybe_dropout(Var<T> x, double rate, const ForwardMode& mode) {
  if (!mode.training() || rate == 0.0) return x;
  if (mode.rng == nullptr) throw UsageError("training-mode forward needs a random generator");
  return dropout(x, rate, *mode.rng);
}

template <class T>
Var<T> affine(Tape<T>& tape, Var<T> x, const Tensor<T>& w, const Tensor<T>& b) {
  return add(matmul(x, tape.param(w)), tape.param(b));
}

template <class T>
Var<T> attention_block(Tape<T>& tape, Var<T> h, const EncoderLayer<T>& l, const EncoderConfig& cfg,
                       Var<T> mask_bias) {
  const std::size_t dh = cfg.d_model / cfg.n_heads;
  Var<T> q = affine(tape, h, l.wq, l.bq);
  Var<T> k = affine(tape, h, l.wk, l.bk);
  Var<T> v = affine(tape, h, l.wv, l.bv);
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dh));
  std::vector<Var<T>> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
    Var<T> qh = slice_cols(q, hd * dh, dh);
    Var<T> kh = slice_cols(k, hd * dh, dh);
    Var<T> vh = slice_cols(v, hd * dh, dh);
    Var<T> scores = add(scale(matmul(qh, transpose(kh)), inv_sqrt), mask_bias);
    heads.push_back(matmul(softmax(scores, 1), vh));
  }
  Var<T> merged = heads.size() == 1 ? heads.front() : concat_cols(heads);
  return affine(tape, merged, l.wo, l.bo);
}

}  // namespace

template <class T>
template <class U>
EncoderWeights<U> EncoderWeights<T>::cast() const {
  EncoderWeights<U> o;
  o.token_embedding = token_embedding.template cast<U>();
  o.position_embedding = position_embedding.template cast<U>();
  for (const auto& l : layers) o.layers.push_back(cast_layer<T, U>(l));
  o.final_gamma = final_gamma.template cast<U>();
  o.final_beta = final_beta.template cast<U>();
  return o;
}

template <class T>
template <class U>
EmbeddingBackend<U> EmbeddingBackend<T>::cast() const {
  EmbeddingBackend<U> o;
  o.config = config;
  if (precomputed()) {
    o.source = std::get<1>(source);
  } else {
    o.source = weights().template cast<U>();
  }
  return o;
}

template struct EncoderWeights<double>;
template struct EncoderWeights<float>;
template EncoderWeights<float> EncoderWeights<double>::cast<float>() const;
template EncoderWeights<double> EncoderWeights<float>::cast<double>() const;
template EncoderWeights<double> EncoderWeights<double>::cast<double>() const;
template EmbeddingBackend<float> EmbeddingBackend<double>::cast<float>() const;
template EmbeddingBackend<double> EmbeddingBackend<float>::cast<double>() const;
template EmbeddingBackend<double> EmbeddingBackend<double>::cast<double>() const;

EncoderWeights<double> init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  constexpr double kStd = 0.02;
  EncoderWeights<double> w;
  w.token_embedding = Tensor64::normal({cfg.vocab_size, d}, kStd, rng);
  w.position_embedding = Tensor64::normal({cfg.max_len, d}, kStd, rng);
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    EncoderLayer<double> l;
    l.ln1_gamma = Tensor64::ones(1, d);
    l.ln1_beta = Tensor64::zeros(1, d);
    l.wq = Tensor64::normal({d, d}, kStd, rng);
    l.bq = Tensor64::zeros(1, d);
    l.wk = Tensor64::normal({d, d}, kStd, rng);
    l.bk = Tensor64::zeros(1, d);
    l.wv = Tensor64::normal({d, d}, kStd, rng);
    l.bv = Tensor64::zeros(1, d);
    l.wo = Tensor64::normal({d, d}, kStd, rng);
    l.bo = Tensor64::zeros(1, d);
    l.ln2_gamma = Tensor64::ones(1, d);
    l.ln2_beta = Tensor64::zeros(1, d);
    l.w1 = Tensor64::normal({d, cfg.d_ff}, kStd, rng);
    l.b1 = Tensor64::zeros(1, cfg.d_ff);
    l.w2 = Tensor64::normal({cfg.d_ff, d}, kStd, rng);
    l.b2 = Tensor64::zeros(1, d);
    w.layers.push_back(std::move(l));
  }
  w.final_gamma = Tensor64::ones(1, d);
  w.final_beta = Tensor64::zeros(1, d);
  return w;
}

EmbeddingBackend<double> make_toy_backend(const EncoderConfig& cfg, std::mt19937_64& rng) {
  EmbeddingBackend<double> b;
  b.config = cfg;
  b.source = init_encoder(cfg, rng);
  return b;
}

EmbeddingBackend<double> make_precomputed_backend(std::shared_ptr<const PrecomputedStore> store, std::size_t max_len) {
  if (!store) throw UsageError("precomputed backend needs a store");
  EmbeddingBackend<double> b;
  b.config.d_model = store->d_model();
  b.config.n_layers = 0;
  b.config.n_heads = 1;
  b.config.max_len = max_len;
  b.config.dropout = 0.0;
  b.source = std::move(store);
  return b;
}

template <class T>
EncodedVar<T> encode_on(Tape<T>& tape, const EmbeddingBackend<T>& backend, const TokenSequence& seq,
                        const ForwardMode& mode) {
  const EncoderConfig& cfg = backend.config;
  validate(seq, cfg.max_len);

  if (backend.precomputed()) {
    const Tensor32& stored = backend.store().lookup(detokenize(seq));
    EncodedVar<T> out{tape.leaf(stored.template cast<T>()), std::vector<std::uint8_t>(stored.rows(), 1)};
    return out;
  }

  const EncoderWeights<T>& w = backend.weights();
  const std::size_t len = seq.size();
  Var<T> x = add(gather_rows(tape.param(w.token_embedding), std::span<const std::int32_t>(seq.ids)),
                 slice_rows(tape.param(w.position_embedding), 0, len));

  // Additive key mask: padded keys get -1e9 so softmax gives them exactly zero weight.
  Tensor<T> bias({1, len});
  for (std::size_t j = 0; j < len; ++j) bias[j] = seq.mask[j] ? T{0} : T(-1e9);
  Var<T> mask_bias = tape.leaf(std::move(bias));

  for (const auto& l : w.layers) {
    Var<T> h = layer_norm(x, tape.param(l.ln1_gamma), tape.param(l.ln1_beta));
    x = add(x, maybe_dropout(attention_block(tape, h, l, cfg, mask_bias), cfg.dropout, mode));
    Var<T> h2 = layer_norm(x, tape.param(l.ln2_gamma), tape.param(l.ln2_beta));
    Var<T> ff = affine(tape, gelu(affine(tape, h2, l.w1, l.b1)), l.w2, l.b2);
    x = add(x, maybe_dropout(ff, cfg.dropout, mode));
  }
  x = layer_norm(x, tape.param(w.final_gamma), tape.param(w.final_beta));
  return {x, seq.mask};
}

template <class T>
Encoded<T> encode(const TokenSequence& seq, const EmbeddingBackend<T>& backend, const ForwardMode& mode) {
  Tape<T> tape(false);
  EncodedVar<T> ev = encode_on(tape, backend, seq, mode);
  Encoded<T> out;
  out.hidden = ev.hidden.value();
  out.cls = Tensor<T>({1, out.hidden.cols()});
  const auto row0 = out.hidden.row_span(0);
  std::copy(row0.begin(), row0.end(), out.cls.data());
  out.mask = std::move(ev.mask);
  return out;
}

PrecomputedStore export_embeddings(const EmbeddingBackend<float>& backend, const std::vector<std::string>& texts) {
  PrecomputedStore store(static_cast<std::uint32_t>(backend.config.d_model));
  for (const auto& text : texts) {
    if (store.contains(text)) continue;
    store.insert(text, encode(tokenize(text, backend.config.max_len), backend).hidden);
  }
  return store;
}

template EncodedVar<float> encode_on<float>(Tape<float>&, const EmbeddingBackend<float>&, const TokenSequence&,
                                            const ForwardMode&);
template EncodedVar<double> encode_on<double>(Tape<double>&, const EmbeddingBackend<double>&, const TokenSequence&,
                                              const ForwardMode&);
template Encoded<float> encode<float>(const TokenSequence&, const EmbeddingBackend<float>&, const ForwardMode&);
template Encoded<double> encode<double>(const TokenSequence&, const EmbeddingBackend<double>&, const ForwardMode&);

}  // namespace guardnet
