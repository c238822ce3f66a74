#pragma once

// Reads per-run JSONL artifacts and renders the CSV tables.
//
// summary.csv            agent,mean_avg_reward,suffix_fail_freq,best_arm_frac,cum_regret,invalid_count,runs,failed_runs
// bandit_runs.csv        agent,run,seed,best_arm,mean_avg_reward,cum_regret,best_arm_frac,suffix_failure,invalid_count,failed
// arm_selections.csv     agent,run,t,<one column per arm colour>,invalid   (cumulative counts after t steps)
// best_arm_fraction.csv  agent,t,best_arm_fraction                         (mean over completed runs)
// keymaze_summary.csv    agent,runs,failed_runs,mean_score,success_rate,mean_steps,mean_unique_states,
//                        loops_encountered,loops_recovered,recovery_rate,mean_tokens
// keymaze_runs.csv       agent,run,seed,steps,final_score,terminal,unique_states,loops_encountered,
//                        loops_recovered,tokens,failed
//
// Aggregates use completed runs only; failed_runs > 0 marks an incomplete batch.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dora/bandit.hpp"
#include "dora/errors.hpp"
#include "dora/policy.hpp"
#include "dora/telemetry.hpp"

namespace dora::harness {

inline constexpr int kSchemaVersion = 1;

/// 6 significant digits, C locale.
inline std::string csv_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  if (ec != std::errc{}) throw std::runtime_error("csv_number: formatting failed");
  return std::string(buf, end);
}

struct BanditRunData {
  std::string agent;
  int run_index = 0;
  std::uint64_t seed = 0;
  BanditInstance instance;
  std::vector<int> pulls;
  std::vector<int> rewards;
  bool failed = false;
  BanditMetrics metrics;
};

struct KeyMazeRunData {
  std::string agent;
  int run_index = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> observations;  // per step, then the final one
  std::vector<std::string> actions;
  double final_score = 0.0;
  bool terminal = false;
  bool failed = false;
  int tokens = 0;
  LoopStats loops;
};

struct LoadedRuns {
  std::vector<BanditRunData> bandit;
  std::vector<KeyMazeRunData> keymaze;
};

namespace detail {

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read " + path.string());
  std::vector<nlohmann::json> lines;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    const auto where = path.filename().string() + ":" + std::to_string(n);
    if (j.is_discarded() || !j.is_object()) throw SchemaError(where + ": not a JSON object");
    auto v = j.find("schema_version");
    if (v == j.end() || !v->is_number_integer()) throw SchemaError(where + ": missing schema_version");
    if (v->get<int>() != kSchemaVersion) {
      throw SchemaError(where + ": schema_version " + v->dump() + ", expected " + std::to_string(kSchemaVersion));
    }
    if (!j.contains("type")) throw SchemaError(where + ": missing type");
    lines.push_back(std::move(j));
  }
  if (lines.empty() || lines.front().at("type") != "run_header") {
    throw SchemaError(path.filename().string() + ": first record is not a run_header");
  }
  return lines;
}

inline void load_bandit(const std::vector<nlohmann::json>& lines, LoadedRuns& out) {
  const auto& h = lines.front();
  BanditRunData r;
  r.agent = h.at("agent").get<std::string>();
  r.run_index = h.at("run").get<int>();
  r.seed = h.at("seed").get<std::uint64_t>();
  r.instance.arm_means = h.at("arm_means").get<std::vector<double>>();
  r.instance.best_arm = h.at("best_arm").get<int>();
  r.instance.horizon = h.at("horizon").get<int>();
  r.instance.gap = h.at("gap").get<double>();
  bool ended = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& j = lines[i];
    if (j.at("type") == "step") {
      const auto& arm = j.at("arm");
      r.pulls.push_back(arm.is_null() ? kInvalidArm : arm.get<int>());
      r.rewards.push_back(j.at("reward").get<int>());
    } else if (j.at("type") == "run_end") {
      ended = true;
      r.failed = j.at("failed").get<bool>();
    }
  }
  if (!ended) r.failed = true;
  if (!r.failed && static_cast<int>(r.pulls.size()) != r.instance.horizon) r.failed = true;
  r.metrics = compute_metrics(r.pulls, r.rewards, r.instance);
  out.bandit.push_back(std::move(r));
}

inline void load_keymaze(const std::vector<nlohmann::json>& lines, LoadedRuns& out) {
  const auto& h = lines.front();
  KeyMazeRunData r;
  r.agent = h.at("agent").get<std::string>();
  r.run_index = h.at("run").get<int>();
  r.seed = h.at("seed").get<std::uint64_t>();
  bool ended = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& j = lines[i];
    if (j.at("type") == "step") {
      r.observations.push_back(j.at("observation").get<std::string>());
      r.actions.push_back(j.at("chosen_action").get<std::string>());
      r.tokens += j.at("tokens").get<int>();
    } else if (j.at("type") == "run_end") {
      ended = true;
      r.failed = j.at("failed").get<bool>();
      r.final_score = j.at("final_score").get<double>();
      r.terminal = j.at("terminal").get<bool>();
      const auto fin = j.at("final_observation").get<std::string>();
      if (!fin.empty()) r.observations.push_back(fin);
    }
  }
  if (!ended) r.failed = true;
  if (r.observations.size() > r.actions.size() + 1) r.observations.resize(r.actions.size() + 1);
  r.loops = loop_stats(r.observations, r.actions);
  out.keymaze.push_back(std::move(r));
}

}  // namespace detail

/// Every run_*.jsonl in `dir`, sorted by file name. An empty or missing
/// directory is an error.
inline LoadedRuns load_runs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("report: not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with("run_") && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  if (files.empty()) throw ConfigError("report: no run artifacts in " + dir.string());
  std::sort(files.begin(), files.end());
  LoadedRuns out;
  for (const auto& f : files) {
    const auto lines = detail::read_jsonl(f);
    try {
      const auto suite = lines.front().at("suite").get<std::string>();
      if (suite == "bandit") detail::load_bandit(lines, out);
      else if (suite == "keymaze") detail::load_keymaze(lines, out);
      else throw SchemaError(f.filename().string() + ": unknown suite '" + suite + "'");
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(f.filename().string() + ": " + e.what());
    }
  }
  return out;
}

using ReportFiles = std::map<std::string, std::string>;

namespace detail {

// Agents in order of first appearance.
template <class Runs>
std::vector<std::string> agent_order(const Runs& runs) {
  std::vector<std::string> order;
  for (const auto& r : runs) {
    if (std::find(order.begin(), order.end(), r.agent) == order.end()) order.push_back(r.agent);
  }
  return order;
}

inline void render_bandit(const std::vector<BanditRunData>& runs, ReportFiles& files) {
  const int arms = runs.front().instance.num_arms();
  for (const auto& r : runs) {
    if (r.instance.num_arms() != arms) throw SchemaError("report: bandit runs disagree on the number of arms");
  }

  std::ostringstream summary, per_run, selections, curve;
  summary << "agent,mean_avg_reward,suffix_fail_freq,best_arm_frac,cum_regret,invalid_count,runs,failed_runs\n";
  per_run << "agent,run,seed,best_arm,mean_avg_reward,cum_regret,best_arm_frac,suffix_failure,invalid_count,failed\n";
  selections << "agent,run,t";
  for (int a = 0; a < arms; ++a) selections << ',' << kArmColors.at(static_cast<std::size_t>(a));
  selections << ",invalid\n";
  curve << "agent,t,best_arm_fraction\n";

  for (const auto& agent : agent_order(runs)) {
    int total = 0, failed = 0;
    double reward = 0, suffix = 0, frac = 0, regret = 0, invalid = 0;
    int horizon = 0;
    std::vector<double> best_frac_sum;
    for (const auto& r : runs) {
      if (r.agent != agent) continue;
      ++total;
      const auto& m = r.metrics;
      per_run << r.agent << ',' << r.run_index << ',' << r.seed << ',' << r.instance.best_arm << ','
              << csv_number(m.mean_avg_reward) << ',' << csv_number(m.cumulative_regret) << ','
              << csv_number(m.best_arm_fraction) << ',' << (m.suffix_failure ? 1 : 0) << ',' << m.invalid_count << ','
              << (r.failed ? 1 : 0) << '\n';

      std::vector<int> counts(static_cast<std::size_t>(arms), 0);
      int bad = 0;
      for (std::size_t t = 0; t < r.pulls.size(); ++t) {
        if (r.pulls[t] == kInvalidArm) ++bad;
        else ++counts[static_cast<std::size_t>(r.pulls[t])];
        selections << r.agent << ',' << r.run_index << ',' << t + 1;
        for (int c : counts) selections << ',' << c;
        selections << ',' << bad << '\n';
      }

      if (r.failed) {
        ++failed;
        continue;
      }
      reward += m.mean_avg_reward;
      suffix += m.suffix_failure ? 1.0 : 0.0;
      frac += m.best_arm_fraction;
      regret += m.cumulative_regret;
      invalid += m.invalid_count;
      horizon = std::max(horizon, static_cast<int>(r.pulls.size()));
      best_frac_sum.resize(static_cast<std::size_t>(horizon), 0.0);
      int best = 0;
      for (std::size_t t = 0; t < r.pulls.size(); ++t) {
        if (r.pulls[t] == r.instance.best_arm) ++best;
        best_frac_sum[t] += static_cast<double>(best) / static_cast<double>(t + 1);
      }
    }
    const int done = total - failed;
    auto avg = [done](double v) { return done == 0 ? std::string("nan") : csv_number(v / done); };
    summary << agent << ',' << avg(reward) << ',' << avg(suffix) << ',' << avg(frac) << ',' << avg(regret) << ','
            << avg(invalid) << ',' << total << ',' << failed << '\n';
    for (std::size_t t = 0; t < best_frac_sum.size(); ++t) {
      curve << agent << ',' << t + 1 << ',' << csv_number(best_frac_sum[t] / done) << '\n';
    }
  }
  files["summary.csv"] = summary.str();
  files["bandit_runs.csv"] = per_run.str();
  files["arm_selections.csv"] = selections.str();
  files["best_arm_fraction.csv"] = curve.str();
}

inline void render_keymaze(const std::vector<KeyMazeRunData>& runs, ReportFiles& files) {
  std::ostringstream summary, per_run;
  summary << "agent,runs,failed_runs,mean_score,success_rate,mean_steps,mean_unique_states,loops_encountered,"
             "loops_recovered,recovery_rate,mean_tokens\n";
  per_run << "agent,run,seed,steps,final_score,terminal,unique_states,loops_encountered,loops_recovered,tokens,failed\n";
  for (const auto& agent : agent_order(runs)) {
    int total = 0, failed = 0;
    double score = 0, success = 0, steps = 0, unique = 0, tokens = 0;
    LoopStats loops;
    for (const auto& r : runs) {
      if (r.agent != agent) continue;
      ++total;
      per_run << r.agent << ',' << r.run_index << ',' << r.seed << ',' << r.actions.size() << ','
              << csv_number(r.final_score) << ',' << (r.terminal ? 1 : 0) << ',' << r.loops.unique_states << ','
              << r.loops.loops_encountered << ',' << r.loops.loops_recovered << ',' << r.tokens << ','
              << (r.failed ? 1 : 0) << '\n';
      if (r.failed) {
        ++failed;
        continue;
      }
      score += r.final_score;
      success += r.terminal ? 1.0 : 0.0;
      steps += static_cast<double>(r.actions.size());
      unique += r.loops.unique_states;
      tokens += r.tokens;
      loops += r.loops;
    }
    const int done = total - failed;
    auto avg = [done](double v) { return done == 0 ? std::string("nan") : csv_number(v / done); };
    summary << agent << ',' << total << ',' << failed << ',' << avg(score) << ',' << avg(success) << ',' << avg(steps)
            << ',' << avg(unique) << ',' << loops.loops_encountered << ',' << loops.loops_recovered << ','
            << csv_number(loops.recovery_rate) << ',' << avg(tokens) << '\n';
  }
  files["keymaze_summary.csv"] = summary.str();
  files["keymaze_runs.csv"] = per_run.str();
}

}  // namespace detail

inline ReportFiles render_report(const LoadedRuns& runs) {
  ReportFiles files;
  if (!runs.bandit.empty()) detail::render_bandit(runs.bandit, files);
  if (!runs.keymaze.empty()) detail::render_keymaze(runs.keymaze, files);
  return files;
}

/// Loads and renders everything before the first write, so a bad input
/// leaves `out_dir` untouched.
inline ReportFiles write_report(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir) {
  auto files = render_report(load_runs(in_dir));
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, content] : files) {
    std::ofstream out(out_dir / name, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("report: cannot write " + (out_dir / name).string());
  }
  return files;
}

}  // namespace dora::harness
