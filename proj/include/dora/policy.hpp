#pragma once

// Policy backend interface and the prompt-level operations built on it:
// mode decision, candidate list generation, greedy action, lambda choice.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dora/errors.hpp"
#include "dora/lambda_control.hpp"
#include "dora/prompts.hpp"
#include "dora/scoring.hpp"

namespace dora {

struct Message {
  std::string role;
  std::string content;

  bool operator==(const Message&) const = default;
};

enum class PromptKind { ModeDecision, CandidateList, GreedyAction, LambdaDecision, MabAnswer };

inline const char* to_string(PromptKind k) {
  switch (k) {
    case PromptKind::ModeDecision: return "mode";
    case PromptKind::CandidateList: return "candidates";
    case PromptKind::GreedyAction: return "greedy";
    case PromptKind::LambdaDecision: return "lambda";
    case PromptKind::MabAnswer: return "mab";
  }
  return "unknown";
}

inline std::optional<PromptKind> prompt_kind_from_string(std::string_view s) {
  for (auto k : {PromptKind::ModeDecision, PromptKind::CandidateList, PromptKind::GreedyAction,
                 PromptKind::LambdaDecision, PromptKind::MabAnswer}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct PolicyRequest {
  std::vector<Message> context;
  double temperature = 0.0;
  int max_candidates = 1;
  PromptKind prompt_kind = PromptKind::GreedyAction;
  int max_tokens = 256;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct PolicyReply {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  int token_count = 0;
};

/// Anything that can answer a chat-style request. Implementations must
/// tolerate concurrent calls.
class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;

  virtual PolicyReply complete(const PolicyRequest& request) = 0;

  /// Teacher-forced per-token log-probabilities of `continuation` given
  /// `context`, or nullopt when the transport cannot provide them.
  virtual std::optional<std::vector<double>> rescore(const std::vector<Message>& context,
                                                     std::string_view continuation, double temperature) {
    (void)context;
    (void)continuation;
    (void)temperature;
    return std::nullopt;
  }

  virtual bool supports_rescoring() const { return false; }
};

// ---------------------------------------------------------------------------
// Text helpers

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string_view trim_right(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Shortest round-trip decimal form, independent of locale.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

namespace detail {

inline bool is_quote(char c) { return c == '"' || c == '\'' || c == '`'; }

// Length of a list marker ("-", "*", "+", "•", "12.", "3)", "(4)") at the
// start of `s`, including the whitespace after it; 0 when absent.
inline std::size_t list_marker_length(std::string_view s) {
  std::size_t n = 0;
  if (s.starts_with("\xE2\x80\xA2")) {
    n = 3;
  } else if (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '+')) {
    n = 1;
  } else {
    std::size_t i = 0;
    const bool paren = !s.empty() && s[0] == '(';
    if (paren) ++i;
    const std::size_t digits_start = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == digits_start || i >= s.size()) return 0;
    if (paren ? s[i] != ')' : (s[i] != '.' && s[i] != ')')) return 0;
    n = i + 1;
  }
  if (n < s.size() && !is_space(s[n])) return 0;
  while (n < s.size() && is_space(s[n])) ++n;
  return n;
}

}  // namespace detail

/// Byte range [first, second) of `line` left after repeatedly removing
/// surrounding whitespace, list markers and matching quote pairs.
inline std::pair<std::size_t, std::size_t> strip_decorations(std::string_view line) {
  std::size_t b = 0, e = line.size();
  for (;;) {
    const std::size_t b0 = b, e0 = e;
    while (b < e && is_space(line[b])) ++b;
    while (e > b && is_space(line[e - 1])) --e;
    b += detail::list_marker_length(line.substr(b, e - b));
    if (e - b >= 2 && detail::is_quote(line[b]) && line[e - 1] == line[b]) {
      ++b;
      --e;
    }
    if (b == b0 && e == e0) break;
  }
  return {b, e};
}

/// Canonical action text: decorations stripped, ASCII lowercased, internal
/// whitespace collapsed to single spaces. Idempotent.
inline std::string normalize_action(std::string_view line) {
  const auto [b, e] = strip_decorations(line);
  std::string out;
  out.reserve(e - b);
  bool pending_space = false;
  for (std::size_t i = b; i < e; ++i) {
    const char c = line[i];
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  // Lowercasing and collapsing can expose a new decoration (e.g. a marker
  // that was followed by a tab); iterate to a fixpoint.
  if (const auto [b2, e2] = strip_decorations(out); b2 != 0 || e2 != out.size()) return normalize_action(out);
  return out;
}

/// Per-line token log-probabilities sliced out of a multi-line reply.
/// Tokens overlapping only newlines, whitespace or list markers are left out.
/// Returns one vector per line of `text` (possibly empty), or nullopt when
/// the tokens do not concatenate to `text`.
inline std::optional<std::vector<std::vector<double>>> slice_line_logprobs(std::string_view text,
                                                                           const std::vector<TokenLogprob>& tokens) {
  std::string joined;
  std::vector<std::size_t> starts;
  for (const auto& t : tokens) {
    starts.push_back(joined.size());
    joined += t.token;
  }
  if (joined != text) return std::nullopt;

  std::vector<std::vector<double>> per_line;
  std::size_t line_begin = 0;
  while (line_begin <= text.size()) {
    std::size_t line_end = text.find('\n', line_begin);
    if (line_end == std::string_view::npos) line_end = text.size();
    const auto [cb, ce] = strip_decorations(text.substr(line_begin, line_end - line_begin));
    const std::size_t content_begin = line_begin + cb, content_end = line_begin + ce;
    std::vector<double> lps;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t tb = starts[i], te = tb + tokens[i].token.size();
      if (te <= content_begin || tb >= content_end || te == tb) continue;
      if (trim(tokens[i].token).empty()) continue;
      lps.push_back(std::min(0.0, tokens[i].logprob));
    }
    per_line.push_back(std::move(lps));
    if (line_end == text.size()) break;
    line_begin = line_end + 1;
  }
  return per_line;
}

/// Splits a candidate-list reply into at most `max_candidates` unique,
/// non-empty actions in reply order. Log-probabilities are sliced from the
/// reply tokens when present.
inline std::vector<CandidateAction> parse_candidate_list(const PolicyReply& reply, int max_candidates) {
  require(max_candidates >= 1, "parse_candidate_list: n_C must be >= 1");
  std::optional<std::vector<std::vector<double>>> sliced;
  if (reply.token_logprobs) sliced = slice_line_logprobs(reply.text, *reply.token_logprobs);

  std::vector<CandidateAction> out;
  std::set<std::string> seen;
  std::string_view text = reply.text;
  std::size_t line_index = 0, begin = 0;
  while (begin <= text.size() && static_cast<int>(out.size()) < max_candidates) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(begin, end - begin);
    std::string canonical = normalize_action(line);
    if (!canonical.empty() && seen.insert(canonical).second) {
      CandidateAction c;
      const auto [b, e] = strip_decorations(line);
      c.raw = std::string(line.substr(b, e - b));
      c.text = std::move(canonical);
      if (sliced && line_index < sliced->size() && !(*sliced)[line_index].empty()) {
        c.token_logprobs = (*sliced)[line_index];
        c.source = LogprobSource::Sliced;
      }
      out.push_back(std::move(c));
    }
    if (end == text.size()) break;
    begin = end + 1;
    ++line_index;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mode decision

enum class Mode { Greedy, Explore };

inline const char* to_string(Mode m) { return m == Mode::Explore ? "EXPLORE" : "GREEDY"; }

struct ModeDecision {
  Mode mode = Mode::Greedy;
  bool parsed = false;
  int tokens = 0;
};

/// EXPLORE only for an exact {"mode":"EXPLORE"} object; every other reply
/// (including malformed ones) is GREEDY.
inline ModeDecision parse_mode_reply(std::string_view raw) {
  ModeDecision d;
  const auto j = nlohmann::json::parse(trim(raw), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return d;
  const auto it = j.find("mode");
  if (it == j.end() || !it->is_string()) return d;
  const auto& v = it->get_ref<const std::string&>();
  if (v == "EXPLORE") {
    d.mode = Mode::Explore;
    d.parsed = true;
  } else if (v == "GREEDY") {
    d.parsed = true;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Multi-armed bandit answer envelope

inline constexpr std::array<std::string_view, 5> kArmColors = {"blue", "green", "red", "yellow", "purple"};

/// Accepts exactly `<Answer>I will press COLOR button</Answer>` (COLOR
/// case-insensitive, surrounding whitespace ignored). Returns the arm index.
inline std::optional<int> parse_mab_answer(std::string_view reply, int num_arms = 5) {
  constexpr std::string_view prefix = "<Answer>I will press ";
  constexpr std::string_view suffix = " button</Answer>";
  const auto s = trim(reply);
  if (!s.starts_with(prefix) || !s.ends_with(suffix) || s.size() <= prefix.size() + suffix.size()) {
    return std::nullopt;
  }
  const auto color = s.substr(prefix.size(), s.size() - prefix.size() - suffix.size());
  const int limit = std::min<int>(num_arms, static_cast<int>(kArmColors.size()));
  for (int i = 0; i < limit; ++i) {
    const auto& name = kArmColors[static_cast<std::size_t>(i)];
    if (name.size() == color.size() &&
        std::equal(name.begin(), name.end(), color.begin(), [](char a, char b) {
          return a == std::tolower(static_cast<unsigned char>(b));
        })) {
      return i;
    }
  }
  return std::nullopt;
}

inline std::string mab_answer(int arm) {
  return "<Answer>I will press " + std::string(kArmColors.at(static_cast<std::size_t>(arm))) + " button</Answer>";
}

// ---------------------------------------------------------------------------
// Prompt-level operations

struct CandidateList {
  std::vector<CandidateAction> candidates;
  int tokens = 0;
  int rescore_calls = 0;
};

struct LambdaChoice {
  double lambda = 0.0;
  bool parsed = false;
  int attempts = 0;
  int tokens = 0;
};

struct GreedyChoice {
  CandidateAction action;
  int tokens = 0;
};

/// Wraps a backend with the prompt templates that turn a context into each
/// kind of request.
class PolicyClient {
 public:
  PolicyClient(std::shared_ptr<PolicyBackend> backend, std::shared_ptr<const PromptLibrary> prompts)
      : backend_(std::move(backend)), prompts_(std::move(prompts)) {
    require(backend_ != nullptr, "PolicyClient: null backend");
    require(prompts_ != nullptr, "PolicyClient: null prompt library");
  }

  PolicyBackend& backend() const { return *backend_; }
  const PromptLibrary& prompts() const { return *prompts_; }

  ModeDecision decide_mode(const std::vector<Message>& context, double tau_d) const {
    auto reply = backend_->complete(make_request(context, PromptKind::ModeDecision, tau_d,
                                                 prompts_->get(prompt_names::kModeDecision)));
    auto d = parse_mode_reply(reply.text);
    d.tokens = reply.token_count;
    return d;
  }

  /// Candidate list of at most `n_candidates` unique actions. When the
  /// backend can rescore, each candidate's log-probabilities come from
  /// teacher-forced decoding of its text; otherwise they are sliced from the
  /// list reply. Candidates left without any get a single 0.0 entry.
  CandidateList generate_candidates(const std::vector<Message>& context, int n_candidates, double tau_c) const {
    require(n_candidates >= 1, "generate_candidates: n_C must be >= 1");
    auto request = make_request(context, PromptKind::CandidateList, tau_c,
                                prompts_->render(prompt_names::kCandidateGeneration,
                                                 {{"n", std::to_string(n_candidates)}}));
    request.max_candidates = n_candidates;
    request.max_tokens = 24 * n_candidates;
    auto reply = backend_->complete(request);

    CandidateList out;
    out.tokens = reply.token_count;
    out.candidates = parse_candidate_list(reply, n_candidates);
    if (backend_->supports_rescoring()) {
      for (auto& c : out.candidates) {
        ++out.rescore_calls;
        if (auto lps = backend_->rescore(context, c.raw, tau_c); lps && !lps->empty()) {
          c.token_logprobs.clear();
          for (double x : *lps) c.token_logprobs.push_back(std::min(0.0, x));
          c.source = LogprobSource::Rescored;
        }
      }
    }
    for (auto& c : out.candidates) {
      if (c.token_logprobs.empty()) {
        c.token_logprobs = {0.0};
        c.source = LogprobSource::None;
      }
    }
    return out;
  }

  /// Temperature-0 action: the first non-empty line of the reply.
  GreedyChoice greedy_action(const std::vector<Message>& context,
                             PromptKind kind = PromptKind::GreedyAction, double temperature = 0.0) const {
    require(!context.empty(), "greedy_action: empty context");
    PolicyRequest request;
    request.context = context;
    request.temperature = temperature;
    request.prompt_kind = kind;
    request.max_tokens = 64;
    auto reply = backend_->complete(request);
    GreedyChoice out;
    out.tokens = reply.token_count;
    if (auto parsed = parse_candidate_list(reply, 1); !parsed.empty()) out.action = std::move(parsed.front());
    return out;
  }

  /// Lambda chosen by the policy. Makes 1 + `source.retries` attempts before
  /// settling on the fallback; the result is always inside the bounds.
  LambdaChoice sample_lambda(const std::vector<Message>& context, const PolicySampledLambda& source,
                             double tau_lambda) const {
    const auto instruction = prompts_->render(prompt_names::kLambdaDecision,
                                              {{"lambda_min", format_number(source.bounds.min)},
                                               {"lambda_max", format_number(source.bounds.max)}});
    LambdaChoice out;
    for (int attempt = 0; attempt <= source.retries; ++attempt) {
      auto request = make_request(context, PromptKind::LambdaDecision, tau_lambda, instruction);
      request.max_tokens = 32;
      auto reply = backend_->complete(request);
      ++out.attempts;
      out.tokens += reply.token_count;
      if (auto v = try_parse_lambda(trim(reply.text))) {
        out.lambda = source.bounds.clamp(*v);
        out.parsed = true;
        return out;
      }
    }
    out.lambda = source.bounds.clamp(source.fallback);
    return out;
  }

 private:
  static PolicyRequest make_request(const std::vector<Message>& context, PromptKind kind, double temperature,
                                    std::string instruction) {
    require(!context.empty(), "policy request: empty context");
    PolicyRequest r;
    r.context = context;
    r.context.push_back({"user", std::move(instruction)});
    r.temperature = temperature;
    r.prompt_kind = kind;
    r.max_tokens = 32;
    return r;
  }

  std::shared_ptr<PolicyBackend> backend_;
  std::shared_ptr<const PromptLibrary> prompts_;
};

}  // namespace dora
