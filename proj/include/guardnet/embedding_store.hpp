#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "guardnet/hash.hpp"
#include "guardnet/tensor.hpp"

namespace guardnet {

/// Frozen hidden states keyed by SHA-256 of the exact UTF-8 text.
///
/// File layout (all integers little-endian):
///   "JGEMB1\n"
///   count: u64, d_model: u32
///   count x { hash: 32 raw bytes, L: u32, H: L*d_model f32 }
/// Row 0 of each H is the CLS state. Records are written in hash order.
class PrecomputedStore {
 public:
  PrecomputedStore() = default;
  explicit PrecomputedStore(std::uint32_t d_model) : d_model_(d_model) {}

  static PrecomputedStore parse(std::string_view bytes);
  static PrecomputedStore load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  // Throws IntegrityError if the hash is already present.
  void insert(std::string_view text, Tensor32 hidden);
  void insert_digest(const Digest& key, Tensor32 hidden);

  // Throws LookupError naming the hex hash when absent.
  const Tensor32& lookup(std::string_view text) const;
  bool contains(std::string_view text) const;

  std::size_t size() const noexcept { return records_.size(); }
  std::uint32_t d_model() const noexcept { return d_model_; }

  friend bool operator==(const PrecomputedStore&, const PrecomputedStore&) = default;

 private:
  std::uint32_t d_model_ = 0;
  std::map<Digest, Tensor32> records_;
};

inline constexpr std::string_view kEmbeddingMagic = "JGEMB1\n";

}  // namespace guardnet
