#include "guardnet/container.hpp"

#include <map>

#include <json.hpp>

#include "guardnet/binary_io.hpp"
#include "guardnet/error.hpp"

namespace guardnet {

using json = nlohmann::json;

namespace {

std::string_view criterion_name(Criterion c) { return c == Criterion::gini ? "gini" : "entropy"; }

json config_json(const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  return json{
      {"encoder",
       {{"vocab_size", e.vocab_size},
        {"d_model", e.d_model},
        {"n_layers", e.n_layers},
        {"n_heads", e.n_heads},
        {"d_ff", e.d_ff},
        {"max_len", e.max_len},
        {"dropout", e.dropout}}},
      {"sharanga_pooling", cfg.sharanga_pooling == PoolKind::mean ? "mean" : "cls"},
      {"pool_dropout", cfg.pool_dropout},
      {"head_width", cfg.head_width},
      {"mahendra_blocks", cfg.mahendra_blocks},
      {"raudra_blocks", cfg.raudra_blocks},
      {"forest",
       {{"n_estimators", cfg.forest.n_estimators},
        {"max_depth", cfg.forest.max_depth},
        {"criterion", criterion_name(cfg.forest.criterion)},
        {"bootstrap", cfg.forest.bootstrap},
        {"feature_subsample", cfg.forest.feature_subsample == FeatureSubsample::sqrt ? "sqrt" : "all"},
        {"min_samples_split", cfg.forest.min_samples_split},
        {"seed", cfg.forest.seed}}},
      {"boost",
       {{"n_rounds", cfg.boost.n_rounds},
        {"max_depth", cfg.boost.max_depth},
        {"shrinkage", cfg.boost.shrinkage},
        {"lambda", cfg.boost.lambda_reg},
        {"min_child_weight", cfg.boost.min_child_weight}}},
      {"seed", cfg.seed},
  };
}

ModelConfig config_from(const json& m) {
  ModelConfig cfg;
  cfg.arch = parse_arch(m.at("arch").get<std::string>());
  const json& c = m.at("config");
  const json& e = c.at("encoder");
  cfg.encoder.vocab_size = e.at("vocab_size").get<std::size_t>();
  cfg.encoder.d_model = e.at("d_model").get<std::size_t>();
  cfg.encoder.n_layers = e.at("n_layers").get<std::size_t>();
  cfg.encoder.n_heads = e.at("n_heads").get<std::size_t>();
  cfg.encoder.d_ff = e.at("d_ff").get<std::size_t>();
  cfg.encoder.max_len = e.at("max_len").get<std::size_t>();
  cfg.encoder.dropout = e.at("dropout").get<double>();
  cfg.sharanga_pooling = c.at("sharanga_pooling").get<std::string>() == "cls" ? PoolKind::cls : PoolKind::mean;
  cfg.pool_dropout = c.at("pool_dropout").get<double>();
  cfg.head_width = c.at("head_width").get<std::size_t>();
  cfg.mahendra_blocks = c.at("mahendra_blocks").get<std::size_t>();
  cfg.raudra_blocks = c.at("raudra_blocks").get<std::size_t>();
  const json& f = c.at("forest");
  cfg.forest.n_estimators = f.at("n_estimators").get<int>();
  cfg.forest.max_depth = f.at("max_depth").get<int>();
  cfg.forest.criterion = parse_criterion(f.at("criterion").get<std::string>());
  cfg.forest.bootstrap = f.at("bootstrap").get<bool>();
  cfg.forest.feature_subsample =
      f.at("feature_subsample").get<std::string>() == "all" ? FeatureSubsample::all : FeatureSubsample::sqrt;
  cfg.forest.min_samples_split = f.at("min_samples_split").get<int>();
  cfg.forest.seed = f.at("seed").get<std::uint64_t>();
  const json& b = c.at("boost");
  cfg.boost.n_rounds = b.at("n_rounds").get<int>();
  cfg.boost.max_depth = b.at("max_depth").get<int>();
  cfg.boost.shrinkage = b.at("shrinkage").get<double>();
  cfg.boost.lambda_reg = b.at("lambda").get<double>();
  cfg.boost.min_child_weight = b.at("min_child_weight").get<double>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  const json& t = m.at("thresholds");
  cfg.thresholds.jailbreak = t.at("jailbreak").get<double>();
  cfg.thresholds.prompt_injection = t.at("prompt_injection").get<double>();
  return cfg;
}

json manifest(const ModelConfig& cfg, bool precomputed) {
  return json{{"format_version", kContainerVersion},
              {"arch", arch_name(cfg.arch)},
              {"labels", {label_name(Label::jailbreak), label_name(Label::prompt_injection)}},
              {"thresholds", {{"jailbreak", cfg.thresholds.jailbreak},
                              {"prompt_injection", cfg.thresholds.prompt_injection}}},
              {"backend", precomputed ? "precomputed" : "toy"},
              {"config", config_json(cfg)}};
}

void write_tree(ByteWriter& w, const Tree& t) {
  w.u32(static_cast<std::uint32_t>(t.nodes.size()));
  for (const auto& n : t.nodes) {
    w.u8(n.is_leaf ? 1 : 0);
    w.i32(n.feature);
    w.f64(n.threshold);
    w.f64(n.value);
    w.f64(n.count_neg);
    w.f64(n.count_pos);
    w.f64(n.gain);
    w.i32(n.left);
    w.i32(n.right);
  }
}

Tree read_tree(ByteReader& r) {
  Tree t;
  const std::size_t start = r.offset();
  const std::uint32_t n = r.u32("tree node count");
  // Each node occupies 53 bytes; reject counts the remaining input cannot hold.
  r.need(static_cast<std::size_t>(n) * 53, "tree nodes");
  t.nodes.resize(n);
  for (auto& node : t.nodes) {
    node.is_leaf = r.u8("node leaf flag") != 0;
    node.feature = r.i32("node feature");
    node.threshold = r.f64("node threshold");
    node.value = r.f64("node value");
    node.count_neg = r.f64("node count");
    node.count_pos = r.f64("node count");
    node.gain = r.f64("node gain");
    node.left = r.i32("node child");
    node.right = r.i32("node child");
  }
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& node = t.nodes[i];
    if (node.is_leaf) continue;
    auto valid = [&](std::int32_t c) { return c > static_cast<std::int32_t>(i) && c < static_cast<std::int32_t>(n); };
    if (!valid(node.left) || !valid(node.right) || node.feature < 0) {
      throw FormatError("tree node " + std::to_string(i) + " has invalid links", start);
    }
  }
  if (t.nodes.empty()) throw FormatError("tree without nodes", start);
  return t;
}

void write_ensemble(ByteWriter& w, const std::optional<Ensemble>& e) {
  if (!e) {
    w.u8(0);
    return;
  }
  if (const auto* f = std::get_if<RandomForest>(&*e)) {
    w.u8(1);
    w.u64(f->n_features);
    w.u32(static_cast<std::uint32_t>(f->trees.size()));
    for (const auto& t : f->trees) write_tree(w, t);
  } else {
    const auto& b = std::get<BoostedEnsemble>(*e);
    w.u8(2);
    w.u64(b.n_features);
    w.f64(b.base_score);
    w.f64(b.shrinkage);
    w.u32(static_cast<std::uint32_t>(b.trees.size()));
    for (const auto& t : b.trees) write_tree(w, t);
  }
}

std::optional<Ensemble> read_ensemble(ByteReader& r) {
  const std::size_t at = r.offset();
  switch (r.u8("ensemble kind")) {
    case 0: return std::nullopt;
    case 1: {
      RandomForest f;
      f.n_features = r.u64("forest feature count");
      const auto n = r.u32("forest tree count");
      for (std::uint32_t i = 0; i < n; ++i) f.trees.push_back(read_tree(r));
      return f;
    }
    case 2: {
      BoostedEnsemble b;
      b.n_features = r.u64("boosted feature count");
      b.base_score = r.f64("boosted base score");
      b.shrinkage = r.f64("boosted shrinkage");
      const auto n = r.u32("boosted tree count");
      for (std::uint32_t i = 0; i < n; ++i) b.trees.push_back(read_tree(r));
      return b;
    }
    default: throw FormatError("unknown ensemble kind", at);
  }
}

}  // namespace

std::string manifest_json(const ModelConfig& cfg) { return manifest(cfg, cfg.encoder.n_layers == 0).dump(); }

ModelConfig config_from_manifest(std::string_view json_text) {
  try {
    return config_from(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid model manifest: ") + e.what());
  }
}

std::string serialize_model(const GuardModel& m) {
  const FrozenModel frozen = freeze(m);
  ByteWriter w;
  w.bytes(kContainerMagic);
  const std::string man = manifest(m.config, m.backend.precomputed()).dump();
  w.u32(static_cast<std::uint32_t>(man.size()));
  w.bytes(man);

  std::vector<std::pair<std::string, const Tensor32*>> arrays;
  frozen.for_each_param([&](const std::string& name, const Tensor32& t) { arrays.emplace_back(name, &t); });
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    w.str16(name);
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (auto dim : t->shape()) w.u64(dim);
    for (float v : t->values()) w.f32(v);
  }

  const auto* trees = std::get_if<TreeHeads>(&m.heads);
  for (std::size_t k = 0; k < kNumLabels; ++k) write_ensemble(w, trees ? trees->per_label[k] : std::nullopt);

  if (m.backend.precomputed()) {
    const std::string store = m.backend.store().serialize();
    w.u8(1);
    w.u64(store.size());
    w.bytes(store);
  } else {
    w.u8(0);
  }
  return w.take();
}

GuardModel parse_model(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(kContainerMagic.size(), "container magic") != kContainerMagic) {
    throw FormatError("not a model container (bad magic)", 0);
  }
  const std::size_t man_at = r.offset();
  const std::uint32_t man_len = r.u32("manifest length");
  const std::string_view man_text = r.bytes(man_len, "manifest");
  json man;
  try {
    man = json::parse(man_text);
  } catch (const json::parse_error&) {
    throw FormatError("manifest is not valid JSON", man_at + 4);
  }
  if (!man.is_object() || !man.contains("format_version") || !man["format_version"].is_number_integer()) {
    throw FormatError("manifest lacks an integer format_version", man_at + 4);
  }
  const auto version = man["format_version"].get<std::int64_t>();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container format_version " + std::to_string(version), man_at + 4);
  }
  ModelConfig cfg;
  bool precomputed = false;
  try {
    cfg = config_from(man);
    precomputed = man.at("backend").get<std::string>() == "precomputed";
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest field error: ") + e.what(), man_at + 4);
  }

  std::map<std::string, std::pair<Tensor32, std::size_t>> arrays;
  const std::uint32_t n_arrays = r.u32("array count");
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    const std::size_t at = r.offset();
    std::string name = r.str16("array name");
    const std::uint32_t rank = r.u32("array rank");
    if (rank == 0 || rank > 2) throw FormatError("array '" + name + "' has unsupported rank", at);
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& dim : shape) {
      dim = r.u64("array dimension");
      if (dim != 0 && count > r.remaining() / dim) throw FormatError("array '" + name + "' exceeds the input", at);
      count *= dim;
    }
    r.need(count * 4, "array data");
    std::vector<float> data(count);
    for (auto& v : data) v = r.f32("array data");
    if (!arrays.emplace(name, std::pair{Tensor32(shape, std::move(data)), at}).second) {
      throw FormatError("duplicate array '" + name + "'", at);
    }
  }

  TreeHeads trees;
  for (std::size_t k = 0; k < kNumLabels; ++k) trees.per_label[k] = read_ensemble(r);

  std::shared_ptr<const PrecomputedStore> store;
  const std::size_t store_at = r.offset();
  if (r.u8("store flag") != 0) {
    const auto len = r.u64("store length");
    try {
      store = std::make_shared<const PrecomputedStore>(PrecomputedStore::parse(r.bytes(len, "embedding store")));
    } catch (const FormatError& e) {
      throw FormatError(std::string("embedded store: ") + e.what(), store_at);
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after container", r.offset());
  if (precomputed != static_cast<bool>(store)) throw FormatError("backend kind does not match store flag", store_at);

  GuardModel m;
  if (precomputed) {
    m = build_model(cfg.arch, cfg, make_precomputed_backend(store, cfg.encoder.max_len));
  } else {
    m = build_model(cfg.arch, cfg);
  }
  std::size_t matched = 0;
  m.for_each_param([&](const std::string& name, Tensor64& t) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError("container is missing array '" + name + "'", r.offset());
    const Tensor32& src = it->second.first;
    if (src.shape() != t.shape()) {
      throw FormatError("array '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                            shape_str(t.shape()),
                        it->second.second);
    }
    t = src.cast<double>();
    ++matched;
  });
  if (matched != arrays.size()) throw FormatError("container holds arrays the model does not use", man_at);
  if (is_tree_arch(cfg.arch)) {
    m.heads = std::move(trees);
  } else if (trees.per_label[0] || trees.per_label[1]) {
    throw FormatError("neural architecture container carries tree ensembles", man_at);
  }
  return m;
}

void save_model(const GuardModel& m, const std::filesystem::path& path) {
  write_file_bytes(path.string(), serialize_model(m));
}

GuardModel load_model(const std::filesystem::path& path) { return parse_model(read_file_bytes(path.string())); }

}  // namespace guardnet
