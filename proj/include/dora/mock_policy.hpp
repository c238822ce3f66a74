#pragma once

// Deterministic scripted backend. Replies are queued per prompt kind and
// consumed in order; a request whose queue (and the wildcard queue) is empty
// throws ScriptExhausted unless the script loops.

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dora/errors.hpp"
#include "dora/policy.hpp"

namespace dora {

struct ScriptedReply {
  std::string text;
  std::optional<std::vector<TokenLogprob>> tokens;
  /// When set, consuming this entry throws BackendError with this message.
  std::optional<std::string> transport_error;
};

/// Splits `line` into `logprobs.size()` contiguous character chunks so the
/// synthesized tokens concatenate back to the line.
inline std::vector<TokenLogprob> chunk_tokens(std::string_view line, const std::vector<double>& logprobs) {
  require(!logprobs.empty(), "chunk_tokens: empty log-probability list");
  require(logprobs.size() <= line.size(), "chunk_tokens: more log-probabilities than characters");
  std::vector<TokenLogprob> out;
  const std::size_t n = logprobs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i * line.size() / n, e = (i + 1) * line.size() / n;
    out.push_back({std::string(line.substr(b, e - b)), logprobs[i]});
  }
  return out;
}

/// A candidate-list reply built from (line, per-token log-probabilities)
/// pairs, with zero-cost newline tokens between lines.
inline ScriptedReply scripted_lines(const std::vector<std::pair<std::string, std::vector<double>>>& lines) {
  ScriptedReply r;
  std::vector<TokenLogprob> tokens;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) {
      r.text += '\n';
      tokens.push_back({"\n", 0.0});
    }
    r.text += lines[i].first;
    for (auto& t : chunk_tokens(lines[i].first, lines[i].second)) tokens.push_back(std::move(t));
  }
  r.tokens = std::move(tokens);
  return r;
}

inline ScriptedReply scripted_text(std::string text, const std::vector<double>& logprobs = {}) {
  ScriptedReply r;
  if (!logprobs.empty()) r.tokens = chunk_tokens(text, logprobs);
  r.text = std::move(text);
  return r;
}

/// Parsed script document; shareable, each ScriptedPolicy gets its own copy
/// of the queues.
struct MockScript {
  std::map<std::string, std::vector<ScriptedReply>> replies;  // key: prompt kind name or "any"
  std::map<std::string, std::vector<double>> rescore_table;
  bool loop = false;

  void add(PromptKind kind, ScriptedReply reply) { replies[to_string(kind)].push_back(std::move(reply)); }
  void add_any(ScriptedReply reply) { replies["any"].push_back(std::move(reply)); }

  /// Schema:
  ///   {"loop": bool?,
  ///    "replies": [{"kind": "mode|candidates|greedy|lambda|mab|any",
  ///                 "text": str?, "logprobs": [num]?, "tokens": [[str, num]]?,
  ///                 "lines": [{"text": str, "logprobs": [num]}]?, "error": str?}],
  ///    "rescore": {"<action text>": [num]}?}
  static MockScript from_json(const nlohmann::json& j) {
    MockScript s;
    if (!j.is_object()) throw ConfigError("mock script: top level must be an object");
    s.loop = j.value("loop", false);
    for (const auto& e : j.value("replies", nlohmann::json::array())) {
      const auto kind = e.value("kind", std::string("any"));
      if (kind != "any" && !prompt_kind_from_string(kind)) throw ConfigError("mock script: unknown kind '" + kind + "'");
      ScriptedReply r;
      if (e.contains("error")) {
        r.transport_error = e.at("error").get<std::string>();
      } else if (e.contains("lines")) {
        std::vector<std::pair<std::string, std::vector<double>>> lines;
        for (const auto& l : e.at("lines")) {
          lines.emplace_back(l.at("text").get<std::string>(), l.value("logprobs", std::vector<double>{0.0}));
        }
        r = scripted_lines(lines);
      } else {
        r.text = e.value("text", std::string{});
        if (e.contains("tokens")) {
          std::vector<TokenLogprob> toks;
          std::string joined;
          for (const auto& t : e.at("tokens")) {
            toks.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
            joined += toks.back().token;
          }
          if (!e.contains("text")) r.text = joined;
          r.tokens = std::move(toks);
        } else if (e.contains("logprobs")) {
          r.tokens = chunk_tokens(r.text, e.at("logprobs").get<std::vector<double>>());
        }
      }
      s.replies[kind].push_back(std::move(r));
    }
    if (j.contains("rescore")) {
      for (const auto& [action, lps] : j.at("rescore").items()) s.rescore_table[action] = lps.get<std::vector<double>>();
    }
    return s;
  }

  static MockScript load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("mock script not found: " + path.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("mock script is not valid JSON: " + path.string());
    return from_json(j);
  }
};

class ScriptedPolicy final : public PolicyBackend {
 public:
  explicit ScriptedPolicy(MockScript script, bool record_requests = false)
      : script_(std::move(script)), record_requests_(record_requests) {
    for (const auto& [kind, list] : script_.replies) cursor_[kind] = 0;
  }

  PolicyReply complete(const PolicyRequest& request) override {
    std::lock_guard lock(mu_);
    ++calls_[request.prompt_kind];
    if (record_requests_) requests_.push_back(request);
    const ScriptedReply* r = next(to_string(request.prompt_kind));
    if (r == nullptr) r = next("any");
    if (r == nullptr) {
      throw ScriptExhausted(std::string("mock policy script exhausted for prompt kind '") +
                            to_string(request.prompt_kind) + "'");
    }
    if (r->transport_error) throw BackendError(*r->transport_error);
    PolicyReply reply;
    reply.text = r->text;
    reply.token_logprobs = r->tokens;
    reply.token_count = r->tokens ? static_cast<int>(r->tokens->size()) : static_cast<int>(r->text.size() / 4 + 1);
    return reply;
  }

  std::optional<std::vector<double>> rescore(const std::vector<Message>&, std::string_view continuation,
                                             double) override {
    std::lock_guard lock(mu_);
    ++rescore_calls_;
    if (auto it = script_.rescore_table.find(normalize_action(continuation)); it != script_.rescore_table.end()) {
      return it->second;
    }
    return std::nullopt;
  }

  bool supports_rescoring() const override { return !script_.rescore_table.empty(); }

  int calls(PromptKind kind) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(kind);
    return it == calls_.end() ? 0 : it->second;
  }

  int total_calls() const {
    std::lock_guard lock(mu_);
    int n = 0;
    for (const auto& [k, v] : calls_) n += v;
    return n;
  }

  int rescore_calls() const {
    std::lock_guard lock(mu_);
    return rescore_calls_;
  }

  std::vector<PolicyRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  const ScriptedReply* next(const std::string& kind) {
    auto it = script_.replies.find(kind);
    if (it == script_.replies.end() || it->second.empty()) return nullptr;
    auto& pos = cursor_[kind];
    if (pos >= it->second.size()) {
      if (!script_.loop) return nullptr;
      pos = 0;
    }
    return &it->second[pos++];
  }

  MockScript script_;
  bool record_requests_;
  std::map<std::string, std::size_t> cursor_;
  mutable std::mutex mu_;
  std::map<PromptKind, int> calls_;
  int rescore_calls_ = 0;
  std::vector<PolicyRequest> requests_;
};

}  // namespace dora
