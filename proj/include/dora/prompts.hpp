#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

#include "dora/errors.hpp"

#ifndef DORA_DEFAULT_PROMPT_DIR
#define DORA_DEFAULT_PROMPT_DIR "assets/prompts"
#endif

namespace dora {

namespace prompt_names {
inline constexpr std::string_view kMabSystem = "mab_system";
inline constexpr std::string_view kMabHistory = "mab_history";
inline constexpr std::string_view kZeroShotSystem = "zero_shot_system";
inline constexpr std::string_view kPromptExploreSystem = "prompt_explore_system";
inline constexpr std::string_view kZeroShotCot = "zero_shot_cot";
inline constexpr std::string_view kTreeOfThought = "tree_of_thought";
inline constexpr std::string_view kReactSystem = "react_system";
inline constexpr std::string_view kModeDecision = "mode_decision";
inline constexpr std::string_view kCandidateGeneration = "candidate_generation";
inline constexpr std::string_view kLambdaDecision = "lambda_decision";
}  // namespace prompt_names

/// Replaces every `{{key}}` in `tmpl`. Unknown placeholders are left as-is;
/// single braces are literal text.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    if (auto it = vars.find(key); it != vars.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

/// Prompt templates loaded from `<dir>/<name>.txt` on first use.
class PromptLibrary {
 public:
  explicit PromptLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {}

  /// DORA_PROMPT_DIR if set, else the directory baked in at build time.
  static std::filesystem::path default_directory() {
    if (const char* env = std::getenv("DORA_PROMPT_DIR"); env && *env) return env;
    return DORA_DEFAULT_PROMPT_DIR;
  }
  static PromptLibrary from_environment() { return PromptLibrary(default_directory()); }

  const std::filesystem::path& directory() const { return dir_; }

  std::string get(std::string_view name) const {
    std::lock_guard lock(mu_);
    const std::string key(name);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const auto path = dir_ / (key + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("prompt template not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return cache_.emplace(key, std::move(text)).first->second;
  }

  std::string render(std::string_view name, const std::map<std::string, std::string>& vars) const {
    return render_template(get(name), vars);
  }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::string> cache_;
};

}  // namespace dora
