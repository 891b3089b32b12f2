#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "guardnet/binary_io.hpp"
#include "guardnet/encoder.hpp"
#include "guardnet/gradcheck.hpp"
#include "guardnet/hash.hpp"

using namespace guardnet;

namespace {

EncoderConfig small_config(std::size_t d = 16, std::size_t layers = 2) {
  EncoderConfig c;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = 2;
  c.d_ff = 2 * d;
  c.max_len = 32;
  return c;
}

// Non-trivial norms so the encoder output is not layer-norm symmetric.
void randomize_norms(EncoderWeights<double>& w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  EncoderWeights<double>::visit(w, "", [&](const std::string& name, Tensor64& t) {
    if (name.find("gamma") != std::string::npos || name.find("beta") != std::string::npos ||
        name.find(".b") != std::string::npos) {
      for (double& v : t.storage()) v += n(rng);
    }
  });
}

// Larger weights keep every gradient well above finite-difference noise.
void scale_matrices(EncoderWeights<double>& w, double factor) {
  EncoderWeights<double>::visit(w, "", [&](const std::string& name, Tensor64& t) {
    if (name.find("gamma") == std::string::npos && name.find("beta") == std::string::npos) {
      for (double& v : t.storage()) v *= factor;
    }
  });
}

}  // namespace

TEST_CASE("tokenize examples", "[tokenizer]") {
  const TokenSequence empty = tokenize("");
  CHECK(empty.ids == std::vector<std::int32_t>{kClsId});
  CHECK(empty.mask == std::vector<std::uint8_t>{1});

  const TokenSequence a = tokenize("A");
  REQUIRE(a.size() == 2);
  CHECK(a.ids[1] == kByteOffset + 'A');

  const std::string long_text(10000, 'x');
  CHECK(tokenize(long_text, 8192).size() == 8192);
  CHECK(tokenize(long_text).size() == kDefaultMaxLen);
  CHECK_THROWS_AS(tokenize("abc", 0), UsageError);
}

TEST_CASE("token ids stay in the byte range and round-trip", "[tokenizer]") {
  std::string all;
  for (int b = 0; b < 256; ++b) all.push_back(static_cast<char>(b));
  const TokenSequence s = tokenize(all, 1000);
  for (std::size_t i = 1; i < s.size(); ++i) {
    CHECK(s.ids[i] >= kByteOffset);
    CHECK(s.ids[i] < kVocabSize);
  }
  CHECK(detokenize(s) == all);
  CHECK(detokenize(tokenize(all, 11)) == all.substr(0, 10));
  CHECK(detokenize(pad(tokenize("héllo"), 5)) == "héllo");
}

TEST_CASE("sequence validation enforces the mask contract", "[tokenizer]") {
  TokenSequence s = pad(tokenize("abc"), 3);
  CHECK_NOTHROW(validate(s, 16));
  CHECK_THROWS_AS(validate(s, 5), UsageError);
  TokenSequence holes = s;
  holes.mask[5] = 1;
  CHECK_THROWS_AS(validate(holes, 16), UsageError);
  TokenSequence no_cls = s;
  no_cls.ids[0] = kPadId;
  CHECK_THROWS_AS(validate(no_cls, 16), UsageError);
}

TEST_CASE("encoder config validation", "[encoder]") {
  EncoderConfig c = small_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.max_len = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("encode shapes and eval determinism", "[encoder]") {
  std::mt19937_64 rng(1);
  const auto backend = make_toy_backend(small_config(16), rng);
  const TokenSequence seq = tokenize("abc");
  const Encoded<double> a = encode(seq, backend);
  const Encoded<double> b = encode(seq, backend);
  CHECK(a.hidden.shape() == Shape{4, 16});
  CHECK(a.cls.cols() == 16);
  CHECK(a.hidden == b.hidden);
  for (std::size_t j = 0; j < 16; ++j) CHECK(a.cls(0, j) == a.hidden(0, j));

  std::mt19937_64 drop(3);
  const Encoded<double> t1 = encode(seq, backend, ForwardMode::train(drop));
  CHECK_FALSE(t1.hidden == a.hidden);
}

TEST_CASE("masked padding leaves unmasked outputs unchanged", "[encoder]") {
  std::mt19937_64 rng(2);
  auto backend = make_toy_backend(small_config(16), rng);
  randomize_norms(backend.weights(), 5);
  const TokenSequence seq = tokenize("guard rails");
  const TokenSequence padded = pad(seq, 8);

  const Encoded<double> h = encode(seq, backend), hp = encode(padded, backend);
  const auto frozen = backend.cast<float>();
  const Encoded<float> f = encode(seq, frozen), fp = encode(padded, frozen);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(std::abs(h.hidden(i, j) - hp.hidden(i, j)) <= 1e-10);
      CHECK(std::abs(f.hidden(i, j) - fp.hidden(i, j)) <= 1e-5f);
    }
  }
}

TEST_CASE("encoder passes the gradient check on d_model 8, 2 layers", "[encoder][gradcheck]") {
  EncoderConfig cfg = small_config(8, 2);
  cfg.max_len = 6;
  std::mt19937_64 rng(7);
  auto backend = make_toy_backend(cfg, rng);
  scale_matrices(backend.weights(), 5.0);
  randomize_norms(backend.weights(), 8);
  const TokenSequence seq = pad(tokenize("a!c"), 1);

  // The key bias shifts every score of a query by the same amount, so its
  // exact gradient is zero and only an absolute bound is meaningful there.
  std::vector<Tensor64*> params, key_biases;
  EncoderWeights<double>::visit(backend.weights(), "", [&](const std::string& name, Tensor64& t) {
    (name.ends_with(".bk") ? key_biases : params).push_back(&t);
  });
  auto loss = [&](Tape<double>& tape) { return sum(encode_on(tape, backend, seq, ForwardMode::eval()).hidden); };
  const auto report = finite_diff_check(loss, params);
  INFO("worst tensor " << report.worst_tensor << " index " << report.worst_index << " analytic "
                       << report.worst_analytic << " numeric " << report.worst_numeric);
  CHECK(report.checked > 1000);
  CHECK(report.max_rel_err < 1e-4);

  Tape<double> tape;
  Var<double> out = loss(tape);
  tape.backward(out);
  for (Tensor64* bk : key_biases) {
    const Tensor64 g = tape.grad_of(*bk);
    for (double v : g.values()) CHECK(std::abs(v) < 1e-9);
  }
}

TEST_CASE("precomputed store round-trips and reports errors", "[encoder][store]") {
  std::mt19937_64 rng(4);
  const auto toy = make_toy_backend(small_config(8, 1), rng).cast<float>();
  const PrecomputedStore store = export_embeddings(toy, {"hello", "ignore previous instructions", ""});
  CHECK(store.size() == 3);
  CHECK(store.d_model() == 8);

  const std::string bytes = store.serialize();
  CHECK(bytes.substr(0, kEmbeddingMagic.size()) == kEmbeddingMagic);
  const PrecomputedStore back = PrecomputedStore::parse(bytes);
  CHECK(back == store);
  CHECK(back.lookup("hello") == encode(tokenize("hello"), toy).hidden);

  const auto path = std::filesystem::temp_directory_path() / "guardnet_store_test.emb";
  store.save(path.string());
  CHECK(PrecomputedStore::load(path.string()) == store);
  std::filesystem::remove(path);

  try {
    (void)back.lookup("absent");
    FAIL("lookup should throw");
  } catch (const LookupError& e) {
    CHECK(std::string(e.what()).find(sha256_hex("absent")) != std::string::npos);
  }

  CHECK_THROWS_AS(PrecomputedStore::parse("JGEMBX\n" + bytes.substr(7)), FormatError);
  CHECK_THROWS_AS(PrecomputedStore::parse(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(PrecomputedStore::parse(bytes + "x"), FormatError);
  try {
    (void)PrecomputedStore::parse(bytes.substr(0, 20));
    FAIL("truncated parse should throw");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  PrecomputedStore dup(8);
  dup.insert("x", Tensor32({2, 8}));
  CHECK_THROWS_AS(dup.insert("x", Tensor32({2, 8})), IntegrityError);
  CHECK_THROWS_AS(dup.insert("y", Tensor32({2, 4})), DimensionError);

  // A file whose two records carry the same hash is an integrity error.
  ByteWriter w;
  w.bytes(kEmbeddingMagic);
  w.u64(2);
  w.u32(1);
  const Digest h = sha256("same");
  for (int r = 0; r < 2; ++r) {
    w.bytes(std::string_view(reinterpret_cast<const char*>(h.data()), h.size()));
    w.u32(1);
    w.f32(0.5f);
  }
  CHECK_THROWS_AS(PrecomputedStore::parse(w.take()), IntegrityError);
}

TEST_CASE("precomputed backend serves stored states through encode", "[encoder][store]") {
  std::mt19937_64 rng(5);
  const auto toy = make_toy_backend(small_config(8, 1), rng).cast<float>();
  auto store = std::make_shared<const PrecomputedStore>(export_embeddings(toy, {"alpha", "beta"}));
  const auto backend = make_precomputed_backend(store).cast<float>();
  CHECK(backend.precomputed());
  const Encoded<float> e = encode(tokenize("alpha"), backend);
  CHECK(e.hidden == store->lookup("alpha"));
  CHECK(e.cls.cols() == 8);
  CHECK_THROWS_AS(encode(tokenize("gamma"), backend), LookupError);
}
