#include "guardnet/model.hpp"

#include <cmath>

#include "guardnet/error.hpp"

namespace guardnet {

std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::sharanga: return "sharanga";
    case Arch::mahendra: return "mahendra";
    case Arch::vaishnava: return "vaishnava";
    case Arch::ashwina: return "ashwina";
    case Arch::raudra: return "raudra";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  for (Arch a : kArchs) {
    if (arch_name(a) == name) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (valid: sharanga, mahendra, vaishnava, ashwina, raudra)");
}

bool is_tree_arch(Arch a) { return a == Arch::vaishnava || a == Arch::ashwina; }

GuardModel build_model(Arch arch, const ModelConfig& cfg, EmbeddingBackend<double> backend) {
  GuardModel m;
  m.config = cfg;
  m.config.arch = arch;
  m.config.encoder = backend.config;
  m.backend = std::move(backend);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t d = m.config.encoder.d_model;
  const std::size_t width = m.config.width();
  switch (arch) {
    case Arch::sharanga:
      m.heads = SharangaHeads<double>{cfg.sharanga_pooling, init_linear_head(d, rng)};
      break;
    case Arch::mahendra: {
      MahendraHeads<double> h;
      h.pool = init_attn_pool(d, d, cfg.pool_dropout, rng);
      for (auto& head : h.heads) head = init_residual_head(d, width, cfg.mahendra_blocks, rng);
      m.heads = std::move(h);
      break;
    }
    case Arch::raudra: {
      RaudraHeads<double> h;
      for (auto& p : h.pool.per_label) p = init_attn_pool(d, d, cfg.pool_dropout, rng);
      for (auto& head : h.heads) head = init_residual_head(d, width, cfg.raudra_blocks, rng);
      m.heads = std::move(h);
      break;
    }
    case Arch::vaishnava:
      cfg.forest.validate();
      m.heads = TreeHeads{};
      break;
    case Arch::ashwina:
      cfg.boost.validate();
      m.heads = TreeHeads{};
      break;
  }
  return m;
}

GuardModel build_model(Arch arch, const ModelConfig& cfg) {
  cfg.encoder.validate();
  std::mt19937_64 rng(cfg.seed);
  return build_model(arch, cfg, make_toy_backend(cfg.encoder, rng));
}

GuardModel build_model(std::string_view arch, const ModelConfig& cfg) { return build_model(parse_arch(arch), cfg); }

FrozenModel freeze(const GuardModel& m) { return m.cast<float>(); }

template <class T>
ForwardVars<T> forward_on(Tape<T>& tape, const ModelState<T>& m, const TokenSequence& seq, const ForwardMode& mode) {
  EncodedVar<T> enc = encode_on(tape, m.backend, seq, mode);
  ForwardVars<T> out;
  std::visit(
      [&](const auto& h) {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, SharangaHeads<T>>) {
          Var<T> pooled = h.pooling == PoolKind::mean ? mean_pool(enc.hidden, std::span<const std::uint8_t>(enc.mask))
                                                      : cls_pool(enc.hidden);
          out.logits = linear_head_forward(h.head, pooled);
        } else if constexpr (std::is_same_v<H, MahendraHeads<T>>) {
          PooledVar<T> p = attn_pool(enc.hidden, std::span<const std::uint8_t>(enc.mask), h.pool, mode);
          out.logits = concat_cols<T>({residual_head_forward(h.heads[0], p.vector),
                                       residual_head_forward(h.heads[1], p.vector)});
          out.attention[0] = p.weights;
          out.attention[1] = p.weights;
        } else if constexpr (std::is_same_v<H, RaudraHeads<T>>) {
          auto pooled = per_label_attn_pool(enc.hidden, std::span<const std::uint8_t>(enc.mask), h.pool, mode);
          out.logits = concat_cols<T>({residual_head_forward(h.heads[0], pooled[0].vector),
                                       residual_head_forward(h.heads[1], pooled[1].vector)});
          out.attention[0] = pooled[0].weights;
          out.attention[1] = pooled[1].weights;
        } else {
          throw ConfigError(std::string(arch_name(m.config.arch)) + " has tree heads; use forward() for inference");
        }
      },
      m.heads);
  return out;
}

template ForwardVars<float> forward_on<float>(Tape<float>&, const FrozenModel&, const TokenSequence&,
                                              const ForwardMode&);
template ForwardVars<double> forward_on<double>(Tape<double>&, const GuardModel&, const TokenSequence&,
                                                const ForwardMode&);

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <class T>
ForwardResult neural_result(const ForwardVars<T>& vars) {
  ForwardResult r;
  const auto& logits = vars.logits.value();
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    r.scores[k] = static_cast<double>(logits[k]);
    r.probs[kLabels[k]] = sigmoid(r.scores[k]);
    if (vars.attention[k]) {
      const auto& w = vars.attention[k]->value();
      r.attention[k].assign(w.values().begin(), w.values().end());
    }
  }
  return r;
}

}  // namespace

std::vector<double> cls_features(const FrozenModel& m, const TokenSequence& seq) {
  const Encoded<float> enc = encode(seq, m.backend);
  return std::vector<double>(enc.cls.values().begin(), enc.cls.values().end());
}

ForwardResult forward(const FrozenModel& m, const TokenSequence& seq) {
  if (const auto* trees = std::get_if<TreeHeads>(&m.heads)) {
    const std::vector<double> x = cls_features(m, seq);
    ForwardResult r;
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      const auto& e = trees->per_label[k];
      if (!e) throw StateError(std::string(label_name(kLabels[k])) + " ensemble is not fitted");
      r.probs[kLabels[k]] = predict_proba(*e, x);
      r.scores[k] = std::holds_alternative<BoostedEnsemble>(*e) ? predict_margin(std::get<BoostedEnsemble>(*e), x)
                                                                 : r.probs[kLabels[k]];
    }
    return r;
  }
  Tape<float> tape(false);
  return neural_result(forward_on(tape, m, seq, ForwardMode::eval()));
}

ForwardResult forward(const GuardModel& m, const TokenSequence& seq, Mode mode, std::mt19937_64* rng) {
  if (mode == Mode::eval || is_tree_arch(m.config.arch)) return forward(freeze(m), seq);
  if (rng == nullptr) throw UsageError("training-mode forward needs a random generator");
  Tape<double> tape(false);
  return neural_result(forward_on(tape, m, seq, ForwardMode::train(*rng)));
}

}  // namespace guardnet
