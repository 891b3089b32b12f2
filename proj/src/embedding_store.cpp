#include "guardnet/embedding_store.hpp"

#include "guardnet/binary_io.hpp"
#include "guardnet/error.hpp"

namespace guardnet {

PrecomputedStore PrecomputedStore::parse(std::string_view bytes) {
  ByteReader in(bytes);
  const std::size_t magic_at = in.offset();
  if (in.remaining() < kEmbeddingMagic.size() || in.bytes(kEmbeddingMagic.size(), "magic") != kEmbeddingMagic) {
    throw FormatError("not an embedding container (bad magic)", magic_at);
  }
  const std::uint64_t count = in.u64("record count");
  const std::size_t d_at = in.offset();
  const std::uint32_t d_model = in.u32("d_model");
  if (d_model == 0) throw FormatError("d_model must be positive", d_at);

  PrecomputedStore store(d_model);
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::size_t record_at = in.offset();
    Digest key{};
    const auto raw = in.bytes(key.size(), "record hash");
    std::copy(raw.begin(), raw.end(), key.begin());
    const std::size_t len_at = in.offset();
    const std::uint32_t len = in.u32("record length");
    if (len == 0) throw FormatError("record has zero rows", len_at);
    const std::size_t n = static_cast<std::size_t>(len) * d_model;
    in.need(n * 4, "hidden states");
    std::vector<float> data(n);
    for (auto& v : data) v = in.f32("hidden states");
    if (store.records_.contains(key)) {
      throw IntegrityError("duplicate text hash " + to_hex(key) + " in record at byte offset " +
                           std::to_string(record_at));
    }
    store.records_.emplace(key, Tensor32({len, d_model}, std::move(data)));
  }
  if (!in.at_end()) throw FormatError("trailing bytes after last record", in.offset());
  return store;
}

PrecomputedStore PrecomputedStore::load(const std::string& path) { return parse(read_file_bytes(path)); }

std::string PrecomputedStore::serialize() const {
  ByteWriter out;
  out.bytes(kEmbeddingMagic);
  out.u64(records_.size());
  out.u32(d_model_);
  for (const auto& [key, hidden] : records_) {
    out.bytes(std::string_view(reinterpret_cast<const char*>(key.data()), key.size()));
    out.u32(static_cast<std::uint32_t>(hidden.rows()));
    for (float v : hidden.values()) out.f32(v);
  }
  return out.take();
}

void PrecomputedStore::save(const std::string& path) const { write_file_bytes(path, serialize()); }

void PrecomputedStore::insert(std::string_view text, Tensor32 hidden) { insert_digest(sha256(text), std::move(hidden)); }

void PrecomputedStore::insert_digest(const Digest& key, Tensor32 hidden) {
  if (hidden.rank() != 2 || hidden.cols() != d_model_ || hidden.rows() == 0) {
    throw DimensionError("hidden states must be L x " + std::to_string(d_model_) + ", got " + shape_str(hidden.shape()));
  }
  if (!records_.emplace(key, std::move(hidden)).second) {
    throw IntegrityError("duplicate text hash " + to_hex(key));
  }
}

const Tensor32& PrecomputedStore::lookup(std::string_view text) const {
  const Digest key = sha256(text);
  auto it = records_.find(key);
  if (it == records_.end()) throw LookupError("no precomputed embedding for text hash " + to_hex(key));
  return it->second;
}

bool PrecomputedStore::contains(std::string_view text) const { return records_.contains(sha256(text)); }

}  // namespace guardnet
