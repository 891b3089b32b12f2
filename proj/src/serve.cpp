#include "guardnet/serve.hpp"

#include <algorithm>
#include <chrono>

#include <httplib.h>
#include <json.hpp>

#include "guardnet/error.hpp"

namespace guardnet {

using json = nlohmann::json;

void SegmentPolicy::validate() const {
  if (enabled() && overlap_tokens >= max_tokens) {
    throw ConfigError("overlap (" + std::to_string(overlap_tokens) + ") must be smaller than max tokens (" +
                      std::to_string(max_tokens) + ")");
  }
}

std::vector<TokenSequence> segment(std::string_view text, const SegmentPolicy& policy, std::size_t max_len) {
  policy.validate();
  if (!policy.enabled() || text.size() <= policy.max_tokens) return {tokenize(text, max_len)};
  if (policy.max_tokens + 1 > max_len) {
    throw ConfigError("max tokens " + std::to_string(policy.max_tokens) + " plus CLS exceeds the model's max_len " +
                      std::to_string(max_len));
  }
  const std::size_t stride = policy.max_tokens - policy.overlap_tokens;
  const std::size_t len = text.size();
  std::vector<std::int32_t> bytes(len);
  for (std::size_t i = 0; i < len; ++i) {
    bytes[i] = kByteOffset + static_cast<std::int32_t>(static_cast<unsigned char>(text[i]));
  }
  std::vector<TokenSequence> out;
  for (std::size_t start = 0;; start += stride) {
    const std::size_t end = std::min(len, start + policy.max_tokens);
    out.push_back(make_sequence(std::span<const std::int32_t>(bytes).subspan(start, end - start)));
    if (end == len) break;
  }
  return out;
}

ClassifyResponse classify(std::string_view text, const FrozenModel& model, const SegmentPolicy& policy,
                          const std::optional<Thresholds>& override_thresholds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto chunks = segment(text, policy, model.config.encoder.max_len);
  LabelProbs agg;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const ForwardResult r = forward(model, chunks[i]);
    for (Label l : kLabels) agg[l] = i == 0 ? r.probs[l] : std::max(agg[l], r.probs[l]);
  }
  const Thresholds& th = override_thresholds ? *override_thresholds : model.config.thresholds;
  ClassifyResponse resp;
  resp.jailbreak = agg.jailbreak;
  resp.prompt_injection = agg.prompt_injection;
  resp.malicious = th.flags(agg);
  resp.segments_used = chunks.size();
  resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return resp;
}

std::string to_json(const ClassifyResponse& r) {
  return json{{"jailbreak", r.jailbreak},
              {"prompt_injection", r.prompt_injection},
              {"malicious", r.malicious},
              {"segments_used", r.segments_used},
              {"latency_ms", r.latency_ms}}
      .dump();
}

namespace {

std::string error_body(std::string_view msg) { return json{{"error", msg}}.dump(); }

std::optional<Thresholds> parse_override(const json& req) {
  auto it = req.find("threshold_override");
  if (it == req.end() || it->is_null()) return std::nullopt;
  auto check = [](double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("threshold_override values must lie in [0, 1]");
    return v;
  };
  if (it->is_number()) {
    const double v = check(it->get<double>());
    return Thresholds{v, v};
  }
  if (it->is_object()) {
    Thresholds t;
    for (auto& [key, val] : it->items()) {
      if (!val.is_number()) throw UsageError("threshold_override." + key + " must be a number");
      if (key == "jailbreak") t.jailbreak = check(val.get<double>());
      else if (key == "prompt_injection") t.prompt_injection = check(val.get<double>());
      else throw UsageError("unknown label '" + key + "' in threshold_override");
    }
    return t;
  }
  throw UsageError("threshold_override must be a number or an object of per-label numbers");
}

}  // namespace

ClassifyService::ClassifyService(std::shared_ptr<const FrozenModel> model, ServeConfig cfg)
    : cfg_(std::move(cfg)), model_(std::move(model)), server_(std::make_unique<httplib::Server>()) {
  if (!model_) throw UsageError("service needs a model");
  cfg_.policy.validate();
  server_->set_payload_max_length(cfg_.max_body_bytes);
  server_->Post("/v1/classify", [this](const httplib::Request& req, httplib::Response& res) {
    auto [status, body] = handle_classify(req.body);
    res.status = status;
    res.set_content(body, "application/json");
  });
  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    auto [status, body] = handle_health();
    res.status = status;
    res.set_content(body, "application/json");
  });
}

ClassifyService::~ClassifyService() { stop(); }

void ClassifyService::swap_model(std::shared_ptr<const FrozenModel> model) {
  if (!model) throw UsageError("cannot swap in an empty model");
  std::lock_guard lock(mu_);
  model_ = std::move(model);
}

std::shared_ptr<const FrozenModel> ClassifyService::model() const {
  std::lock_guard lock(mu_);
  return model_;
}

int ClassifyService::bind() {
  const int port = cfg_.port == 0 ? server_->bind_to_any_port(cfg_.host) : cfg_.port;
  if (cfg_.port != 0 && !server_->bind_to_port(cfg_.host, cfg_.port)) {
    throw UsageError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  }
  if (port < 0) throw UsageError("cannot bind " + cfg_.host);
  return port;
}

void ClassifyService::listen() { server_->listen_after_bind(); }

void ClassifyService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

std::pair<int, std::string> ClassifyService::handle_classify(std::string_view body) const {
  if (body.size() > cfg_.max_body_bytes) return {413, error_body("request body exceeds the configured limit")};
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error& e) {
    return {400, error_body(std::string("malformed JSON: ") + e.what())};
  }
  if (!req.is_object()) return {400, error_body("request must be a single JSON object")};
  auto text = req.find("text");
  if (text == req.end() || !text->is_string()) return {400, error_body("field 'text' must be a string")};
  try {
    const auto th = parse_override(req);
    const auto m = model();
    return {200, to_json(classify(text->get_ref<const std::string&>(), *m, cfg_.policy, th))};
  } catch (const UsageError& e) {
    return {400, error_body(e.what())};
  } catch (const DataError& e) {
    return {422, error_body(e.what())};
  }
}

std::pair<int, std::string> ClassifyService::handle_health() const {
  const auto m = model();
  return {200, json{{"status", "ok"}, {"model", cfg_.model_name}, {"arch", arch_name(m->arch())}}.dump()};
}

}  // namespace guardnet
