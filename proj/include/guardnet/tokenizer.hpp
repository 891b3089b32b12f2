#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace guardnet {

inline constexpr std::int32_t kClsId = 0;
inline constexpr std::int32_t kPadId = 1;
inline constexpr std::int32_t kUnkId = 2;
inline constexpr std::int32_t kByteOffset = 3;
inline constexpr std::int32_t kVocabSize = 256 + kByteOffset;
inline constexpr std::size_t kDefaultMaxLen = 8192;

// ids[0] is always CLS; mask is 1 over a prefix and 0 over padding.
struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t active() const noexcept;
};

// Byte-level tokenization: CLS, then one id per byte, truncated to max_len.
TokenSequence tokenize(std::string_view text, std::size_t max_len = kDefaultMaxLen);

// CLS followed by an explicit slice of byte tokens; used by segmentation.
TokenSequence make_sequence(std::span<const std::int32_t> byte_tokens);

// Appends `extra` masked PAD positions.
TokenSequence pad(const TokenSequence& seq, std::size_t extra);

// Bytes of the unmasked, non-special positions.
std::string detokenize(const TokenSequence& seq);

// Throws UsageError when the CLS/mask/length invariants do not hold.
void validate(const TokenSequence& seq, std::size_t max_len);

}  // namespace guardnet
