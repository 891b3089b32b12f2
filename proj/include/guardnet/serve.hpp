#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "guardnet/model.hpp"

namespace httplib {
class Server;
}

namespace guardnet {

// max_tokens counts content tokens per chunk; each chunk also gets a CLS token.
// max_tokens == 0 disables segmentation.
struct SegmentPolicy {
  std::size_t max_tokens = 0;
  std::size_t overlap_tokens = 32;

  bool enabled() const noexcept { return max_tokens > 0; }
  void validate() const;
};

std::vector<TokenSequence> segment(std::string_view text, const SegmentPolicy& policy,
                                   std::size_t max_len = kDefaultMaxLen);

struct ClassifyResponse {
  double jailbreak = 0.0;
  double prompt_injection = 0.0;
  bool malicious = false;
  std::size_t segments_used = 0;
  double latency_ms = 0.0;
};

/// Per-label max of the segment probabilities, then thresholds (overrides
/// win over the model's configured values).
ClassifyResponse classify(std::string_view text, const FrozenModel& model, const SegmentPolicy& policy = {},
                          const std::optional<Thresholds>& override_thresholds = std::nullopt);

std::string to_json(const ClassifyResponse& r);

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_body_bytes = 1 << 20;
  SegmentPolicy policy;
  std::string model_name = "guardnet";
};

/// HTTP front end: POST /v1/classify, GET /v1/health. Requests share one
/// immutable frozen model; swap_model replaces it between requests.
class ClassifyService {
 public:
  ClassifyService(std::shared_ptr<const FrozenModel> model, ServeConfig cfg);
  ~ClassifyService();
  ClassifyService(const ClassifyService&) = delete;
  ClassifyService& operator=(const ClassifyService&) = delete;

  void swap_model(std::shared_ptr<const FrozenModel> model);
  std::shared_ptr<const FrozenModel> model() const;

  // Binds and returns the bound port (an ephemeral one when cfg.port == 0).
  int bind();
  // Blocks until stop() is called. bind() must have succeeded.
  void listen();
  void stop();

  // Handler bodies, callable without a socket: returns (status, json body).
  std::pair<int, std::string> handle_classify(std::string_view body) const;
  std::pair<int, std::string> handle_health() const;

 private:
  ServeConfig cfg_;
  mutable std::mutex mu_;
  std::shared_ptr<const FrozenModel> model_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace guardnet
