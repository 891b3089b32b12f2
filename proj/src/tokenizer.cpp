#include "guardnet/tokenizer.hpp"

#include <algorithm>

#include "guardnet/error.hpp"

namespace guardnet {

std::size_t TokenSequence::active() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

TokenSequence tokenize(std::string_view text, std::size_t max_len) {
  if (max_len < 1) throw UsageError("tokenize: max_len must be at least 1");
  const std::size_t n = std::min(text.size(), max_len - 1);
  TokenSequence seq;
  seq.ids.reserve(n + 1);
  seq.ids.push_back(kClsId);
  for (std::size_t i = 0; i < n; ++i) {
    seq.ids.push_back(kByteOffset + static_cast<std::int32_t>(static_cast<unsigned char>(text[i])));
  }
  seq.mask.assign(seq.ids.size(), 1);
  return seq;
}

TokenSequence make_sequence(std::span<const std::int32_t> byte_tokens) {
  TokenSequence seq;
  seq.ids.reserve(byte_tokens.size() + 1);
  seq.ids.push_back(kClsId);
  seq.ids.insert(seq.ids.end(), byte_tokens.begin(), byte_tokens.end());
  seq.mask.assign(seq.ids.size(), 1);
  return seq;
}

TokenSequence pad(const TokenSequence& seq, std::size_t extra) {
  TokenSequence out = seq;
  out.ids.insert(out.ids.end(), extra, kPadId);
  out.mask.insert(out.mask.end(), extra, 0);
  return out;
}

std::string detokenize(const TokenSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const auto id = seq.ids[i];
    if (seq.mask[i] && id >= kByteOffset && id < kVocabSize) out.push_back(static_cast<char>(id - kByteOffset));
  }
  return out;
}

void validate(const TokenSequence& seq, std::size_t max_len) {
  if (seq.ids.empty() || seq.ids[0] != kClsId || seq.mask.empty() || seq.mask[0] != 1) {
    throw UsageError("token sequence must start with an unmasked CLS token");
  }
  if (seq.ids.size() != seq.mask.size()) throw UsageError("token ids and mask differ in length");
  if (seq.ids.size() > max_len) {
    throw UsageError("token sequence length " + std::to_string(seq.ids.size()) + " exceeds max_len " +
                     std::to_string(max_len));
  }
  bool padding = false;
  for (auto m : seq.mask) {
    if (m > 1) throw UsageError("mask entries must be 0 or 1");
    if (m == 0) padding = true;
    else if (padding) throw UsageError("mask must be 1 on a prefix and 0 on the padded suffix");
  }
}

}  // namespace guardnet
