#pragma once

// Chat-completion client for any endpoint speaking the common JSON wire
// format:
//   POST {base}/chat/completions
//     {model, messages:[{role, content}], temperature, max_tokens, logprobs}
//   -> {choices:[{message:{content}, logprobs:{content:[{token, logprob}]}}],
//       usage:{completion_tokens}}
// Teacher-forced rescoring uses POST {base}/completions with echo=true and is
// switched off for the rest of the client's life on the first rejection.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dora/errors.hpp"
#include "dora/policy.hpp"

namespace dora {

struct RemoteConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string api_key;
  std::string model;
  int retries = 2;
  std::chrono::milliseconds backoff{500};
  std::chrono::seconds timeout{120};
  bool rescoring = true;

  /// DORA_API_BASE, DORA_API_KEY, DORA_MODEL. Missing base or model is a
  /// configuration error.
  static RemoteConfig from_environment() {
    RemoteConfig c;
    auto get = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? std::string(v) : std::string{};
    };
    c.base_url = get("DORA_API_BASE");
    c.api_key = get("DORA_API_KEY");
    c.model = get("DORA_MODEL");
    if (c.base_url.empty()) throw ConfigError("remote backend: DORA_API_BASE is not set");
    if (c.model.empty()) throw ConfigError("remote backend: DORA_MODEL is not set");
    return c;
  }
};

/// "https://host:port/v1" -> {"https://host:port", "/v1"}
inline std::pair<std::string, std::string> split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("remote backend: base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

inline nlohmann::json build_chat_request(const std::string& model, const PolicyRequest& request, bool logprobs) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.context) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", model},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens},
          {"logprobs", logprobs}};
}

inline PolicyReply parse_chat_response(const nlohmann::json& j) {
  try {
    const auto& choice = j.at("choices").at(0);
    PolicyReply reply;
    const auto& content = choice.at("message").at("content");
    reply.text = content.is_null() ? std::string{} : content.get<std::string>();
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (auto toks = lp->find("content"); toks != lp->end() && toks->is_array()) {
        std::vector<TokenLogprob> tokens;
        for (const auto& t : *toks) tokens.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        reply.token_logprobs = std::move(tokens);
      }
    }
    if (auto usage = j.find("usage"); usage != j.end() && usage->contains("completion_tokens")) {
      reply.token_count = usage->at("completion_tokens").get<int>();
    } else if (reply.token_logprobs) {
      reply.token_count = static_cast<int>(reply.token_logprobs->size());
    }
    return reply;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed chat-completion response: ") + e.what());
  }
}

/// Plain-text rendering of a chat context used as the rescoring prefix.
inline std::string render_plain_prompt(const std::vector<Message>& context) {
  std::string out;
  for (const auto& m : context) out += m.role + ": " + m.content + "\n";
  out += "assistant: ";
  return out;
}

/// Log-probabilities of the tokens that start inside
/// [prefix_len, prefix_len + continuation_len) of an echoed completion.
inline std::vector<double> parse_echo_logprobs(const nlohmann::json& j, std::size_t prefix_len,
                                               std::size_t continuation_len) {
  try {
    const auto& lp = j.at("choices").at(0).at("logprobs");
    const auto& offsets = lp.at("text_offset");
    const auto& values = lp.at("token_logprobs");
    std::vector<double> out;
    for (std::size_t i = 0; i < offsets.size() && i < values.size(); ++i) {
      const auto off = offsets[i].get<std::size_t>();
      if (off < prefix_len || off >= prefix_len + continuation_len || values[i].is_null()) continue;
      out.push_back(values[i].get<double>());
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed echo response: ") + e.what());
  }
}

class RemotePolicy final : public PolicyBackend {
 public:
  explicit RemotePolicy(RemoteConfig config) : config_(std::move(config)) {
    auto [host, prefix] = split_base_url(config_.base_url);
    host_ = std::move(host);
    prefix_ = std::move(prefix);
    rescoring_ = config_.rescoring;
  }

  PolicyReply complete(const PolicyRequest& request) override {
    const auto body = build_chat_request(config_.model, request, true).dump();
    const auto response = post_with_retries("/chat/completions", body);
    if (!response) throw BackendError("chat completion rejected by endpoint");
    return parse_chat_response(*response);
  }

  std::optional<std::vector<double>> rescore(const std::vector<Message>& context, std::string_view continuation,
                                             double temperature) override {
    if (!rescoring_.load()) return std::nullopt;
    const std::string prefix = render_plain_prompt(context);
    const nlohmann::json body = {{"model", config_.model},   {"prompt", prefix + std::string(continuation)},
                                 {"max_tokens", 1},          {"echo", true},
                                 {"logprobs", 1},            {"temperature", temperature}};
    std::optional<nlohmann::json> response;
    try {
      response = post_with_retries("/completions", body.dump());
    } catch (const BackendError&) {
      return std::nullopt;
    }
    if (!response) {
      rescoring_ = false;
      return std::nullopt;
    }
    auto lps = parse_echo_logprobs(*response, prefix.size(), continuation.size());
    if (lps.empty()) return std::nullopt;
    return lps;
  }

  bool supports_rescoring() const override { return rescoring_.load(); }

  const RemoteConfig& config() const { return config_; }

 private:
  // nullopt for a non-retryable 4xx rejection; throws BackendError once
  // transient failures (connection errors, 429, 5xx) exhaust the retries.
  std::optional<nlohmann::json> post_with_retries(const std::string& path, const std::string& body) const {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
      httplib::Client client(host_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      httplib::Headers headers;
      if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
      auto res = client.Post(prefix_ + path, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status >= 400) return std::nullopt;
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded()) throw BackendError("endpoint returned non-JSON body");
      return j;
    }
    throw BackendError("remote backend failed after retries: " + last_error);
  }

  RemoteConfig config_;
  std::string host_;
  std::string prefix_;
  std::atomic<bool> rescoring_{true};
};

}  // namespace dora
