// guardnet command-line front end.
#include <csignal>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "guardnet/bench.hpp"
#include "guardnet/container.hpp"
#include "guardnet/error.hpp"
#include "guardnet/serve.hpp"
#include "guardnet/training.hpp"

using namespace guardnet;

namespace {

struct Common {
  std::string arch = "sharanga";
  std::string data;
  double val_ratio = 0.1;
  int epochs = -1;
  int batch_size = -1;
  double lr = -1.0;
  double gamma = -1.0;
  std::string label_weights;
  std::uint64_t seed = 0;
  std::string model;
  std::string out;
  std::string format = "markdown";
  std::string threshold;
  std::size_t max_tokens = 0;
  std::size_t overlap = 32;
  // Toy encoder shape.
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_len = 512;
};

std::vector<double> parse_pair(const std::string& s, const char* what) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("cannot parse ") + what + " '" + s + "'");
    }
  }
  return v;
}

TaskWeights parse_weights(const std::string& s) {
  const auto v = parse_pair(s, "--label-weights");
  if (v.size() != 2) throw UsageError("--label-weights takes two numbers: jailbreak,prompt_injection");
  return {v[0], v[1]};
}

std::optional<Thresholds> parse_threshold(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto v = parse_pair(s, "--threshold");
  if (v.size() == 1) return Thresholds{v[0], v[0]};
  if (v.size() == 2) return Thresholds{v[0], v[1]};
  throw UsageError("--threshold takes one value or jailbreak,prompt_injection");
}

SegmentPolicy policy_of(const Common& c) {
  SegmentPolicy p{c.max_tokens, c.overlap};
  if (p.enabled() && p.overlap_tokens >= p.max_tokens) p.overlap_tokens = p.max_tokens / 2;
  p.validate();
  return p;
}

ModelConfig model_config(const Common& c) {
  ModelConfig cfg;
  cfg.arch = parse_arch(c.arch);
  cfg.encoder.d_model = c.d_model;
  cfg.encoder.n_layers = c.layers;
  cfg.encoder.n_heads = c.heads;
  cfg.encoder.d_ff = c.d_ff;
  cfg.encoder.max_len = c.max_len;
  cfg.seed = c.seed;
  cfg.forest.seed = c.seed;
  if (auto t = parse_threshold(c.threshold)) cfg.thresholds = *t;
  return cfg;
}

Recipe recipe_of(const Common& c, Arch arch) {
  Recipe r = default_recipe(arch);
  if (c.epochs >= 0) r.train.epochs = c.epochs;
  if (c.batch_size >= 0) r.train.batch_size = c.batch_size;
  if (c.lr >= 0.0) r.train.peak_lr = c.lr;
  if (c.gamma >= 0.0) r.loss.gamma = c.gamma;
  if (!c.label_weights.empty()) r.loss.task_weights = parse_weights(c.label_weights);
  r.train.seed = c.seed;
  return r;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

std::pair<Dataset, Dataset> load_split(const Common& c) {
  require(c.data, "--data");
  return split(dedup(load_jsonl(c.data)), c.val_ratio, c.seed, true);
}

int cmd_train(const Common& c, const std::string& history_path) {
  require(c.out, "--out");
  const Arch arch = parse_arch(c.arch);
  if (is_tree_arch(arch)) throw UsageError(c.arch + " is fitted with two-stage-fit");
  auto [train_set, val_set] = load_split(c);
  const Recipe r = recipe_of(c, arch);
  TrainResult res = train(build_model(arch, model_config(c)), train_set, val_set, r.train, r.loss);
  save_model(res.model, c.out);
  const std::string hist = history_jsonl(res.history);
  if (!history_path.empty()) write_text(history_path, hist);
  std::cerr << hist << "best epoch " << res.best_epoch << ", model written to " << c.out << "\n";
  return 0;
}

int cmd_two_stage(const Common& c, int n_estimators, int max_depth, int rounds, bool skip_stage1) {
  require(c.out, "--out");
  const Arch arch = parse_arch(c.arch);
  auto [train_set, val_set] = load_split(c);
  TwoStageConfig tc;
  if (c.epochs >= 0) tc.stage1.epochs = c.epochs;
  if (c.batch_size >= 0) tc.stage1.batch_size = c.batch_size;
  if (c.lr >= 0.0) tc.stage1.peak_lr = c.lr;
  tc.stage1.seed = c.seed;
  tc.skip_stage1 = skip_stage1;
  tc.forest.seed = c.seed;
  if (n_estimators > 0) tc.forest.n_estimators = n_estimators;
  if (max_depth > 0) (arch == Arch::vaishnava ? tc.forest.max_depth : tc.boost.max_depth) = max_depth;
  if (rounds > 0) tc.boost.n_rounds = rounds;
  ModelConfig cfg = model_config(c);
  std::mt19937_64 rng(cfg.seed);
  TwoStageResult res = two_stage_fit(arch, cfg, make_toy_backend(cfg.encoder, rng), train_set, val_set, tc);
  save_model(res.model, c.out);
  const Metrics m = metrics(evaluate_confusion(freeze(res.model), val_set));
  std::cerr << history_jsonl(res.stage1_history) << "validation accuracy " << m.accuracy << ", macro F1 "
            << m.macro_f1 << "; model written to " << c.out << "\n";
  return 0;
}

int cmd_grid(const Common& c, const std::vector<double>& lrs, const std::vector<double>& gammas,
             const std::vector<std::string>& weights, int probe_epochs) {
  const Arch arch = parse_arch(c.arch);
  if (is_tree_arch(arch)) throw UsageError("grid-search applies to neural architectures");
  auto [train_set, val_set] = load_split(c);
  GridSpace space;
  if (!lrs.empty()) space.lrs = lrs;
  if (!gammas.empty()) space.gammas = gammas;
  if (!weights.empty()) {
    space.label_weight_pairs.clear();
    for (const auto& w : weights) space.label_weight_pairs.push_back(parse_weights(w));
  }
  space.probe_epochs = probe_epochs;
  Recipe r = recipe_of(c, arch);
  GridResult g = grid_search(space, build_model(arch, model_config(c)), train_set, val_set, r.train);
  write_text(c.out, grid_results_jsonl(g.results));
  std::cerr << "best: lr " << g.best.lr << ", gamma " << g.best.gamma << ", weights " << g.best.weights[0] << ","
            << g.best.weights[1] << ", macro F1 " << g.best.macro_f1 << "\n";
  return 0;
}

GuardModel load_with_threshold(const Common& c) {
  require(c.model, "--model");
  GuardModel m = load_model(c.model);
  if (auto t = parse_threshold(c.threshold)) m.config.thresholds = *t;
  return m;
}

int cmd_eval(const Common& c, const std::vector<std::string>& extra_data, const std::string& model_name) {
  const FrozenModel m = freeze(load_with_threshold(c));
  require(c.data, "--data");
  std::vector<std::string> paths{c.data};
  paths.insert(paths.end(), extra_data.begin(), extra_data.end());
  std::vector<EvalReport> reports;
  for (const auto& p : paths) reports.push_back(evaluate(m, load_jsonl(p), model_name, policy_of(c)));
  write_text(c.out, render_report(reports, parse_report_format(c.format)));
  return 0;
}

int cmd_bench(const Common& c, const std::vector<std::string>& extra_data, const std::string& model_name, int warmup,
              int reps, const std::vector<std::string>& neg_sets, const std::string& pos_set,
              const std::string& consolidated_out) {
  const FrozenModel m = freeze(load_with_threshold(c));
  require(c.data, "--data");
  std::vector<std::string> paths{c.data};
  paths.insert(paths.end(), extra_data.begin(), extra_data.end());
  const SegmentPolicy policy = policy_of(c);
  std::vector<EvalReport> reports;
  for (const auto& p : paths) {
    const Dataset ds = load_jsonl(p);
    reports.push_back(evaluate(m, ds, model_name, policy, latency_bench(m, ds, warmup, reps, policy)));
  }
  const ReportFormat fmt = parse_report_format(c.format);
  write_text(c.out, render_report(reports, fmt));
  if (!pos_set.empty()) {
    write_text(consolidated_out, render_consolidated(consolidated(reports, neg_sets, pos_set), fmt));
  }
  return 0;
}

int cmd_generate(const Common& c, const std::string& kind, int budget, std::size_t marker_n) {
  require(c.out, "--out");
  if (marker_n > 0) {
    MarkerCorpusConfig mc;
    mc.n_samples = marker_n;
    mc.seed = c.seed;
    save_jsonl(marker_corpus(mc), c.out);
    return 0;
  }
  require(c.data, "--data");
  const Dataset src = load_jsonl(c.data);
  PerturbSpec spec;
  spec.kind = parse_perturb_kind(kind);
  spec.budget = budget;
  spec.suffix_pool = default_suffix_pool();
  Dataset out;
  out.name = src.name + ":" + kind;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src.samples[i].text.empty() && spec.kind != PerturbKind::suffix) continue;
    spec.seed = c.seed + i;
    out.samples.push_back(perturb(src.samples[i], spec));
  }
  save_jsonl(dedup(out), c.out);
  return 0;
}

int cmd_stats(const Common& c) {
  require(c.data, "--data");
  const Dataset ds = load_jsonl(c.data);
  const DatasetStats s = stats(ds);
  std::ostringstream os;
  if (c.format == "csv") {
    os << "dataset,total,harmful,harmful_pct,safe,safe_pct\n"
       << ds.name << "," << s.total << "," << s.harmful_count << "," << format_pct(s.harmful_pct) << ","
       << s.safe_count << "," << format_pct(s.safe_pct) << "\n";
  } else {
    os << "| Dataset | Total | Harmful | Safe |\n|---|---|---|---|\n"
       << "| " << ds.name << " | " << s.total << " | " << s.harmful_count << " (" << format_pct(s.harmful_pct)
       << ") | " << s.safe_count << " (" << format_pct(s.safe_pct) << ") |\n";
  }
  write_text(c.out, os.str());
  return 0;
}

ClassifyService* g_service = nullptr;

int cmd_serve(const Common& c, const std::string& host, int port, std::size_t max_body, const std::string& name) {
  auto model = std::make_shared<const FrozenModel>(freeze(load_with_threshold(c)));
  ServeConfig sc;
  sc.host = host;
  sc.port = port;
  sc.max_body_bytes = max_body;
  sc.policy = policy_of(c);
  sc.model_name = name;
  ClassifyService service(model, sc);
  const int bound = service.bind();
  std::cerr << "listening on " << host << ":" << bound << "\n";
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  service.listen();
  g_service = nullptr;
  return 0;
}

int cmd_classify(const Common& c, std::string text, bool from_stdin) {
  const FrozenModel m = freeze(load_with_threshold(c));
  if (from_stdin) text.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  std::cout << to_json(classify(text, m, policy_of(c))) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guardnet: jailbreak and prompt-injection guardrail classifiers"};
  app.require_subcommand(1);
  Common c;

  auto add_data = [&](CLI::App* s) {
    s->add_option("--data", c.data, "JSONL dataset");
    s->add_option("--seed", c.seed, "random seed");
  };
  auto add_training = [&](CLI::App* s) {
    add_data(s);
    s->add_option("--arch", c.arch, "sharanga | mahendra | vaishnava | ashwina | raudra");
    s->add_option("--val-ratio", c.val_ratio, "validation fraction (stratified)");
    s->add_option("--epochs", c.epochs, "training epochs");
    s->add_option("--batch-size", c.batch_size, "mini-batch size");
    s->add_option("--lr", c.lr, "peak learning rate");
    s->add_option("--out", c.out, "output path");
    s->add_option("--threshold", c.threshold, "decision threshold(s) stored in the model");
    s->add_option("--d-model", c.d_model, "toy encoder width");
    s->add_option("--layers", c.layers, "toy encoder layers");
    s->add_option("--heads", c.heads, "toy encoder attention heads");
    s->add_option("--d-ff", c.d_ff, "toy encoder feed-forward width");
    s->add_option("--max-len", c.max_len, "toy encoder positions (including CLS)");
  };
  auto add_inference = [&](CLI::App* s) {
    s->add_option("--model", c.model, "model container")->required();
    s->add_option("--threshold", c.threshold, "threshold override: one value or jailbreak,prompt_injection");
    s->add_option("--max-tokens", c.max_tokens, "segment inputs longer than this many tokens (0 = off)");
    s->add_option("--overlap", c.overlap, "tokens shared by neighbouring segments");
  };

  auto* train_cmd = app.add_subcommand("train", "train a neural architecture");
  add_training(train_cmd);
  train_cmd->add_option("--gamma", c.gamma, "focal gamma (0 = BCE)");
  train_cmd->add_option("--label-weights", c.label_weights, "jailbreak,prompt_injection loss weights");
  std::string history_path;
  train_cmd->add_option("--history", history_path, "write per-epoch JSONL history here");

  auto* two_cmd = app.add_subcommand("two-stage-fit", "fine-tune, freeze, then fit per-label tree ensembles");
  add_training(two_cmd);
  int n_estimators = 0, tree_depth = 0, rounds = 0;
  bool skip_stage1 = false;
  two_cmd->add_option("--n-estimators", n_estimators, "forest size");
  two_cmd->add_option("--max-depth", tree_depth, "tree depth");
  two_cmd->add_option("--rounds", rounds, "boosting rounds");
  two_cmd->add_flag("--skip-stage1", skip_stage1, "use the encoder as initialised");

  auto* grid_cmd = app.add_subcommand("grid-search", "search lr x gamma x label weights by validation macro F1");
  add_training(grid_cmd);
  std::vector<double> grid_lrs, grid_gammas;
  std::vector<std::string> grid_weights;
  int probe_epochs = 3;
  grid_cmd->add_option("--lrs", grid_lrs, "candidate learning rates")->delimiter(',');
  grid_cmd->add_option("--gammas", grid_gammas, "candidate focal gammas")->delimiter(',');
  grid_cmd->add_option("--weight-pairs", grid_weights, "candidate weight pairs, e.g. 1.5,1.0 1.0,1.0");
  grid_cmd->add_option("--probe-epochs", probe_epochs, "epochs per candidate");

  auto* eval_cmd = app.add_subcommand("eval", "accuracy, macro F1, FPR and FNR on one or more datasets");
  add_inference(eval_cmd);
  add_data(eval_cmd);
  std::vector<std::string> extra_data;
  std::string model_name = "guardnet";
  eval_cmd->add_option("--also", extra_data, "further datasets");
  eval_cmd->add_option("--name", model_name, "model name in the report");
  eval_cmd->add_option("--format", c.format, "markdown | csv");
  eval_cmd->add_option("--out", c.out, "report path (stdout when omitted)");

  auto* bench_cmd = app.add_subcommand("bench", "evaluation plus single-threaded latency");
  add_inference(bench_cmd);
  add_data(bench_cmd);
  int warmup = 1, reps = 3;
  std::vector<std::string> neg_sets;
  std::string pos_set, consolidated_out;
  bench_cmd->add_option("--also", extra_data, "further datasets");
  bench_cmd->add_option("--name", model_name, "model name in the report");
  bench_cmd->add_option("--format", c.format, "markdown | csv");
  bench_cmd->add_option("--out", c.out, "report path (stdout when omitted)");
  bench_cmd->add_option("--warmup", warmup, "untimed passes over each dataset");
  bench_cmd->add_option("--reps", reps, "timed passes over each dataset");
  bench_cmd->add_option("--neg-sets", neg_sets, "negative-only dataset names for the consolidated FPR");
  bench_cmd->add_option("--pos-set", pos_set, "positive-only dataset name for the consolidated F1");
  bench_cmd->add_option("--consolidated-out", consolidated_out, "consolidated report path");

  auto* gen_cmd = app.add_subcommand("generate", "perturbation variants or a synthetic marker corpus");
  add_data(gen_cmd);
  std::string kind = "fuzz";
  int budget = 2;
  std::size_t marker_n = 0;
  gen_cmd->add_option("--kind", kind, "fuzz | token_swap | suffix");
  gen_cmd->add_option("--budget", budget, "edits per sample");
  gen_cmd->add_option("--marker-corpus", marker_n, "write a synthetic corpus of this many samples instead");
  gen_cmd->add_option("--out", c.out, "output JSONL")->required();

  auto* stats_cmd = app.add_subcommand("stats", "harmful/safe counts and percentages");
  add_data(stats_cmd);
  stats_cmd->add_option("--format", c.format, "markdown | csv");
  stats_cmd->add_option("--out", c.out, "output path (stdout when omitted)");

  auto* serve_cmd = app.add_subcommand("serve", "HTTP service: POST /v1/classify, GET /v1/health");
  add_inference(serve_cmd);
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_body = 1 << 20;
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "port (0 picks a free one)");
  serve_cmd->add_option("--max-body", max_body, "request size limit in bytes");
  serve_cmd->add_option("--name", model_name, "model name reported by /v1/health");

  auto* classify_cmd = app.add_subcommand("classify", "classify one text");
  add_inference(classify_cmd);
  std::string text;
  bool from_stdin = false;
  classify_cmd->add_option("--text", text, "input text");
  classify_cmd->add_flag("--stdin", from_stdin, "read the text from standard input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*train_cmd) return cmd_train(c, history_path);
    if (*two_cmd) return cmd_two_stage(c, n_estimators, tree_depth, rounds, skip_stage1);
    if (*grid_cmd) return cmd_grid(c, grid_lrs, grid_gammas, grid_weights, probe_epochs);
    if (*eval_cmd) return cmd_eval(c, extra_data, model_name);
    if (*bench_cmd) return cmd_bench(c, extra_data, model_name, warmup, reps, neg_sets, pos_set, consolidated_out);
    if (*gen_cmd) return cmd_generate(c, kind, budget, marker_n);
    if (*stats_cmd) return cmd_stats(c);
    if (*serve_cmd) return cmd_serve(c, host, port, max_body, model_name);
    if (*classify_cmd) return cmd_classify(c, text, from_stdin);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
