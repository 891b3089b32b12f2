#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace guardnet {

enum class Label : std::size_t { jailbreak = 0, prompt_injection = 1 };
inline constexpr std::size_t kNumLabels = 2;
inline constexpr std::array<Label, kNumLabels> kLabels{Label::jailbreak, Label::prompt_injection};

constexpr std::string_view label_name(Label l) {
  return l == Label::jailbreak ? "jailbreak" : "prompt_injection";
}

// Per-sample binary targets; "malicious" is derived, never stored.
struct TaskLabels {
  bool jailbreak = false;
  bool prompt_injection = false;

  bool malicious() const noexcept { return jailbreak || prompt_injection; }
  bool operator[](Label l) const noexcept { return l == Label::jailbreak ? jailbreak : prompt_injection; }
  friend bool operator==(const TaskLabels&, const TaskLabels&) = default;
};

struct LabelProbs {
  double jailbreak = 0.0;
  double prompt_injection = 0.0;

  double operator[](Label l) const noexcept { return l == Label::jailbreak ? jailbreak : prompt_injection; }
  double& operator[](Label l) noexcept { return l == Label::jailbreak ? jailbreak : prompt_injection; }
  friend bool operator==(const LabelProbs&, const LabelProbs&) = default;
};

struct Thresholds {
  double jailbreak = 0.5;
  double prompt_injection = 0.5;

  double operator[](Label l) const noexcept { return l == Label::jailbreak ? jailbreak : prompt_injection; }
  bool flags(const LabelProbs& p) const noexcept {
    return p.jailbreak >= jailbreak || p.prompt_injection >= prompt_injection;
  }
};

}  // namespace guardnet
