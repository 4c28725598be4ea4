// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP backends speaking the OpenAI-compatible chat/embeddings protocol, and
// the name-based registry used by the pipeline.

#include "evisearch/backend.hpp"
#include "evisearch/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>

namespace evisearch::live {

struct BackendConfig {
  std::string name = "mock";  // mock | openai-compatible | gemini-flash
  std::string model;
  std::string endpoint;     // base URL, e.g. https://host/v1
  std::string api_key_env;  // name of the environment variable holding the key
  int max_in_flight = 4;
  int retry_limit = backend::kDefaultRetryLimit;
  double timeout_seconds = 120.0;

  bool operator==(const BackendConfig&) const = default;
};

BackendConfig backend_config_from_json(const nlohmann::json& j, BackendConfig defaults = {});
nlohmann::json to_json(const BackendConfig& c);

/// Bounds concurrent requests of one backend instance.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit < 1 ? 1 : limit) {}
  void acquire();
  void release();
  int peak() const;

 private:
  int limit_;
  int active_ = 0;
  int peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

/// Request body for POST {endpoint}/chat/completions.
nlohmann::json build_chat_payload(const backend::ModelRequest& request, const std::string& model);
/// Reads the first choice and the usage block. Throws ParseError on an unexpected shape.
backend::RawResponse parse_chat_response(const nlohmann::json& body);

class ChatCompletionsBackend : public backend::ModelBackend {
 public:
  explicit ChatCompletionsBackend(BackendConfig config);
  backend::RawResponse complete(const backend::ModelRequest& request) override;
  std::string name() const override { return config_.name; }
  int peak_in_flight() const { return limiter_.peak(); }

 private:
  BackendConfig config_;
  std::string api_key_;
  InFlightLimiter limiter_;
};

/// POST {endpoint}/embeddings; vectors are returned in input order.
class HttpEmbedder : public retrieval::EmbeddingProvider {
 public:
  explicit HttpEmbedder(BackendConfig config);
  std::vector<retrieval::EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string name() const override { return config_.name + ":" + config_.model; }

 private:
  BackendConfig config_;
  std::string api_key_;
  InFlightLimiter limiter_;
};

/// Throws ValidationError for an unknown name or a live backend without endpoint/model.
std::unique_ptr<backend::ModelBackend> make_backend(const BackendConfig& config);
/// "hash" (or "mock") gives the offline HashEmbedder; other names use HttpEmbedder.
std::unique_ptr<retrieval::EmbeddingProvider> make_embedder(const BackendConfig& config);

}  // namespace evisearch::live
