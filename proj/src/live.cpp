// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/live.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/mock.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace evisearch::live {

using backend::ModelRequest;
using backend::Part;
using backend::RawResponse;
using nlohmann::json;

BackendConfig backend_config_from_json(const json& j, BackendConfig c) {
  if (!j.is_object()) throw ParseError("backend config must be an object");
  c.name = j.value("name", c.name);
  c.model = j.value("model", c.model);
  c.endpoint = j.value("endpoint", c.endpoint);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.retry_limit = j.value("retry_limit", c.retry_limit);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  if (c.max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
  if (c.retry_limit < 0 || c.retry_limit > 10) throw ValidationError("retry_limit must be within 0..10");
  return c;
}

json to_json(const BackendConfig& c) {
  return {{"name", c.name},
          {"model", c.model},
          {"endpoint", c.endpoint},
          {"api_key_env", c.api_key_env},
          {"max_in_flight", c.max_in_flight},
          {"retry_limit", c.retry_limit},
          {"timeout_seconds", c.timeout_seconds}};
}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return active_ < limit_; });
  ++active_;
  peak_ = std::max(peak_, active_);
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_one();
}

int InFlightLimiter::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

namespace {

struct Slot {
  explicit Slot(InFlightLimiter& l) : limiter(l) { limiter.acquire(); }
  ~Slot() { limiter.release(); }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;
  InFlightLimiter& limiter;
};

std::string mime_for(const std::string& path) {
  auto ends = [&](std::string_view s) { return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0; };
  if (ends(".jpg") || ends(".jpeg")) return "image/jpeg";
  if (ends(".webp")) return "image/webp";
  return "image/png";
}

json content_part(const Part& p) {
  switch (p.kind) {
    case Part::Kind::kText:
      return {{"type", "text"}, {"text", p.text}};
    case Part::Kind::kDocument:
      return {{"type", "text"}, {"text", "Document " + p.ref + ":\n" + p.text}};
    case Part::Kind::kImage: {
      std::ifstream in(p.ref, std::ios::binary);
      if (!in) return {{"type", "text"}, {"text", "[page image unavailable: " + p.ref + "]"}};
      std::ostringstream buf;
      buf << in.rdbuf();
      return {{"type", "image_url"},
              {"image_url", {{"url", "data:" + mime_for(p.ref) + ";base64," + httplib::detail::base64_encode(buf.str())}}}};
    }
  }
  return nullptr;
}

json user_message(const std::vector<Part>& parts) {
  json content = json::array();
  for (const auto& p : parts) content.push_back(content_part(p));
  return {{"role", "user"}, {"content", content}};
}

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string base;    // path prefix without trailing slash
};

Url split_url(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw ValidationError("endpoint must be an absolute URL: " + endpoint);
  const auto slash = endpoint.find('/', scheme + 3);
  Url u;
  u.origin = endpoint.substr(0, slash);
  u.base = slash == std::string::npos ? "" : endpoint.substr(slash);
  while (!u.base.empty() && u.base.back() == '/') u.base.pop_back();
  return u;
}

std::string read_key(const BackendConfig& c) {
  if (c.api_key_env.empty()) return {};
  const char* v = std::getenv(c.api_key_env.c_str());
  return v != nullptr ? v : "";
}

json post_json(const BackendConfig& c, const std::string& key, const std::string& path, const json& body) {
  const Url url = split_url(c.endpoint);
  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(c.timeout_seconds);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  httplib::Headers headers;
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
  auto res = client.Post(url.base + path, headers, body.dump(), "application/json");
  if (!res) throw RetryableError("request to " + c.endpoint + path + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw RetryableError("HTTP " + std::to_string(res->status) + " from " + c.endpoint + path + ": " +
                         res->body.substr(0, 500));
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded()) throw RetryableError("non-JSON response from " + c.endpoint + path);
  return parsed;
}

}  // namespace

json build_chat_payload(const ModelRequest& req, const std::string& model) {
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", req.system_prompt}});
  if (!req.user_content.empty()) messages.push_back(user_message(req.user_content));
  for (std::size_t i = 0; i < req.turns.size(); ++i) {
    const auto& t = req.turns[i];
    if (!t.preface.empty()) messages.push_back(user_message(t.preface));
    const std::string id = t.call.id.empty() ? "call_" + std::to_string(i) : t.call.id;
    messages.push_back({{"role", "assistant"},
                        {"content", nullptr},
                        {"tool_calls",
                         {{{"id", id},
                           {"type", "function"},
                           {"function", {{"name", t.call.name}, {"arguments", t.call.arguments.dump()}}}}}}});
    messages.push_back({{"role", "tool"}, {"tool_call_id", id}, {"content", t.result}});
    if (!t.attachments.empty()) messages.push_back(user_message(t.attachments));
  }
  if (!req.follow_up.empty()) messages.push_back(user_message(req.follow_up));

  json body = {{"model", model}, {"messages", messages}, {"temperature", req.temperature}};
  if (req.mode == backend::Mode::kToolLoop) {
    json tools = json::array();
    for (const auto& t : req.tools)
      tools.push_back({{"type", "function"},
                       {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    body["tools"] = tools;
    body["tool_choice"] = "required";
    body["parallel_tool_calls"] = false;
  } else {
    body["response_format"] = {{"type", "json_schema"},
                               {"json_schema", {{"name", "output"}, {"schema", req.output_schema}, {"strict", true}}}};
  }
  return body;
}

RawResponse parse_chat_response(const json& body) {
  RawResponse r;
  try {
    const json& msg = body.at("choices").at(0).at("message");
    if (auto tc = msg.find("tool_calls"); tc != msg.end() && tc->is_array() && !tc->empty()) {
      const json& call = tc->at(0);
      r.is_tool_call = true;
      r.tool_call_id = call.value("id", "");
      r.tool_name = call.at("function").at("name").get<std::string>();
      const json& args = call.at("function").at("arguments");
      r.text = args.is_string() ? args.get<std::string>() : args.dump();
    } else {
      const json& content = msg.at("content");
      r.text = content.is_string() ? content.get<std::string>() : "";
    }
    if (auto u = body.find("usage"); u != body.end() && u->is_object()) {
      r.input_tokens = u->value("prompt_tokens", std::int64_t{0});
      r.output_tokens = u->value("completion_tokens", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("unexpected chat completion shape: ") + e.what());
  }
  return r;
}

ChatCompletionsBackend::ChatCompletionsBackend(BackendConfig config)
    : config_(std::move(config)), api_key_(read_key(config_)), limiter_(config_.max_in_flight) {
  split_url(config_.endpoint);
}

RawResponse ChatCompletionsBackend::complete(const ModelRequest& request) {
  const json body = build_chat_payload(request, config_.model);
  json reply;
  {
    Slot slot(limiter_);
    reply = post_json(config_, api_key_, "/chat/completions", body);
  }
  try {
    return parse_chat_response(reply);
  } catch (const ParseError& e) {
    throw RetryableError(e.what());
  }
}

HttpEmbedder::HttpEmbedder(BackendConfig config)
    : config_(std::move(config)), api_key_(read_key(config_)), limiter_(config_.max_in_flight) {
  split_url(config_.endpoint);
}

std::vector<retrieval::EmbeddingVector> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  json reply;
  {
    Slot slot(limiter_);
    reply = post_json(config_, api_key_, "/embeddings", json{{"model", config_.model}, {"input", texts}});
  }
  std::vector<retrieval::EmbeddingVector> out(texts.size());
  std::vector<bool> filled(texts.size(), false);
  try {
    const json& data = reply.at("data");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t at = data[i].value("index", i);
      if (at >= out.size() || filled[at]) throw ParseError("embedding index out of range or repeated");
      out[at] = data[i].at("embedding").get<std::vector<double>>();
      filled[at] = true;
    }
  } catch (const json::exception& e) {
    throw RetryableError(std::string("unexpected embeddings shape: ") + e.what());
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end())
    throw RetryableError("embedding response is missing vectors");
  return out;
}

std::unique_ptr<backend::ModelBackend> make_backend(const BackendConfig& config) {
  if (config.name == "mock") return std::make_unique<mock::HeuristicBackend>();
  BackendConfig c = config;
  if (c.name == "gemini-flash") {
    if (c.endpoint.empty()) c.endpoint = "https://generativelanguage.googleapis.com/v1beta/openai";
    if (c.model.empty()) c.model = "gemini-2.5-flash";
    if (c.api_key_env.empty()) c.api_key_env = "GEMINI_API_KEY";
  } else if (c.name != "openai-compatible") {
    throw ValidationError("unknown backend '" + c.name + "'");
  }
  if (c.endpoint.empty() || c.model.empty())
    throw ValidationError("backend '" + c.name + "' needs an endpoint and a model");
  return std::make_unique<ChatCompletionsBackend>(std::move(c));
}

std::unique_ptr<retrieval::EmbeddingProvider> make_embedder(const BackendConfig& config) {
  if (config.name == "hash" || config.name == "mock") {
    std::size_t dim = 256;
    if (!config.model.empty()) {
      try {
        dim = static_cast<std::size_t>(std::stoul(config.model));
      } catch (const std::exception&) {
        throw ValidationError("hash embedder model must be a dimension, got '" + config.model + "'");
      }
    }
    return std::make_unique<retrieval::HashEmbedder>(dim);
  }
  if (config.name != "openai-compatible") throw ValidationError("unknown embedder '" + config.name + "'");
  if (config.endpoint.empty() || config.model.empty())
    throw ValidationError("embedder '" + config.name + "' needs an endpoint and a model");
  return std::make_unique<HttpEmbedder>(config);
}

}  // namespace evisearch::live
