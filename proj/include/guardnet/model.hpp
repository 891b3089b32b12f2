#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "guardnet/encoder.hpp"
#include "guardnet/forest.hpp"
#include "guardnet/heads.hpp"
#include "guardnet/labels.hpp"
#include "guardnet/pooling.hpp"

namespace guardnet {

enum class Arch { sharanga, mahendra, vaishnava, ashwina, raudra };
inline constexpr std::array<Arch, 5> kArchs{Arch::sharanga, Arch::mahendra, Arch::vaishnava, Arch::ashwina,
                                            Arch::raudra};

std::string_view arch_name(Arch a);
// Throws ConfigError listing the five valid names.
Arch parse_arch(std::string_view name);
bool is_tree_arch(Arch a);

enum class PoolKind { mean, cls };

struct ModelConfig {
  Arch arch = Arch::sharanga;
  EncoderConfig encoder;
  PoolKind sharanga_pooling = PoolKind::mean;
  double pool_dropout = 0.1;
  std::size_t head_width = 0;  // 0 means d_model
  std::size_t mahendra_blocks = 2;
  std::size_t raudra_blocks = 3;
  ForestConfig forest;
  BoostConfig boost;
  Thresholds thresholds;
  std::uint64_t seed = 0;

  std::size_t width() const noexcept { return head_width ? head_width : encoder.d_model; }
};

template <class T>
struct SharangaHeads {
  PoolKind pooling = PoolKind::mean;
  LinearHead<T> head;
};

template <class T>
struct MahendraHeads {
  AttnPoolParams<T> pool;
  std::array<ResidualHead<T>, kNumLabels> heads;
};

template <class T>
struct RaudraHeads {
  PerLabelAttnParams<T> pool;
  std::array<ResidualHead<T>, kNumLabels> heads;
};

// Vaishnava (forests) and Ashwina (boosted) carry one ensemble per label.
struct TreeHeads {
  std::array<std::optional<Ensemble>, kNumLabels> per_label;
};

template <class T>
using Heads = std::variant<SharangaHeads<T>, MahendraHeads<T>, RaudraHeads<T>, TreeHeads>;

/// A built model: config, backend and heads. ModelState<double> is the
/// trainable form; ModelState<float> is the frozen inference form.
template <class T>
struct ModelState {
  ModelConfig config;
  EmbeddingBackend<T> backend;
  Heads<T> heads;

  Arch arch() const noexcept { return config.arch; }

  // Visits every neural weight tensor with a stable dotted name.
  template <class Self, class Fn>
  static void visit(Self& s, Fn&& fn);

  template <class Fn>
  void for_each_param(Fn&& fn) { visit(*this, fn); }
  template <class Fn>
  void for_each_param(Fn&& fn) const { visit(*this, fn); }

  template <class U>
  ModelState<U> cast() const;
};

using GuardModel = ModelState<double>;
using FrozenModel = ModelState<float>;

GuardModel build_model(Arch arch, const ModelConfig& cfg);
GuardModel build_model(std::string_view arch, const ModelConfig& cfg);
GuardModel build_model(Arch arch, const ModelConfig& cfg, EmbeddingBackend<double> backend);

// 32-bit inference copy; eval results depend only on this copy.
FrozenModel freeze(const GuardModel& m);

template <class T>
struct ForwardVars {
  Var<T> logits;  // 1 x 2
  std::array<std::optional<Var<T>>, kNumLabels> attention;
};

// Neural architectures only; throws ConfigError for tree heads.
template <class T>
ForwardVars<T> forward_on(Tape<T>& tape, const ModelState<T>& m, const TokenSequence& seq, const ForwardMode& mode);

struct ForwardResult {
  LabelProbs probs;
  // Raw per-label scores: logits for neural heads, ensemble outputs
  // (forest probability, boosted margin) for tree heads.
  std::array<double, kNumLabels> scores{};
  std::array<std::vector<double>, kNumLabels> attention;  // empty when the arch has none
};

ForwardResult forward(const FrozenModel& m, const TokenSequence& seq);
// Eval mode runs on freeze(m); train mode runs the 64-bit graph with dropout.
ForwardResult forward(const GuardModel& m, const TokenSequence& seq, Mode mode, std::mt19937_64* rng = nullptr);

// CLS features that tree heads consume, computed with the frozen encoder.
std::vector<double> cls_features(const FrozenModel& m, const TokenSequence& seq);

}  // namespace guardnet

#include "guardnet/model_impl.hpp"
