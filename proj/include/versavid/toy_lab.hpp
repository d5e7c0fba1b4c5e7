#pragma once
// Desk-scale GRPO environments: a format bandit that must learn the tagged
// answer grammar, and a caption toy where event-level precision can be gamed.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "versavid/error.hpp"
#include "versavid/grpo.hpp"
#include "versavid/reward.hpp"
#include "versavid/toy_policy.hpp"

namespace versavid {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t step_seed(std::uint64_t seed, std::uint64_t step) {
  return splitmix64(seed ^ splitmix64(step + 1));
}

// ─── Trace ────────────────────────────────────────────────────────────────

struct TraceRecord {
  std::size_t step = 0;
  double mean_total_reward = 0.0;
  double objective = 0.0;
  double surrogate = 0.0;
  double kl_term = 0.0;
  double clipped_fraction = 0.0;
  std::size_t degenerate_groups = 0;
  std::size_t invalid_format = 0;
  // Summed total reward of malformed responses; zero under format gating.
  double invalid_format_reward = 0.0;
};

struct TraceSummary {
  double best_mean_reward = 0.0;
  double final_mean_reward = 0.0;
  std::optional<std::size_t> steps_to_95pct;
  double target_reward = 1.0;
};

struct TrainingTrace {
  std::vector<TraceRecord> records;
  TraceSummary summary;
};

struct TrainOptions {
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  double target_reward = 1.0;
  // Moving-average window for best/final reward and steps_to_95pct.
  std::size_t window = 20;
};

/// Scored response: total reward plus whether the format gate was passed.
struct ToyReward {
  double total = 0.0;
  bool format_valid = true;
};

using ToyRewardFn = std::function<ToyReward(const TokenSequence&)>;

/// GRPO on one prompt: sample a group from the current policy, score it,
/// take `updates_per_group` ascent steps, repeat. The reference policy for the
/// KL term is the initial policy.
inline TrainingTrace run_grpo(ToyPolicy& policy, const GrpoConfig& config, const ToyRewardFn& reward,
                              const TrainOptions& options) {
  config.validate();
  const ToyPolicy reference = policy;
  TrainingTrace trace;
  trace.summary.target_reward = options.target_reward;
  std::vector<double> means;
  means.reserve(options.steps);

  for (std::size_t step = 0; step < options.steps; ++step) {
    const auto samples = sample_responses(policy, config.group_size, config.sample_temperature,
                                          step_seed(options.seed, step));
    GroupRollout group;
    group.question_id = "toy";
    TraceRecord rec;
    rec.step = step;
    for (const auto& s : samples) {
      const auto r = reward(s.tokens);
      if (!r.format_valid) {
        ++rec.invalid_format;
        rec.invalid_format_reward += r.total;
      }
      group.responses.push_back(s.tokens);
      group.rewards.push_back(r.total);
      group.old_logprobs.push_back(s.logprob);
    }
    if (config.kl_lambda > 0.0) {
      std::vector<double> ref;
      for (const auto& s : samples) {
        ref.push_back(sequence_logprob(reference, s.tokens, config.sample_temperature));
      }
      group.ref_logprobs = std::move(ref);
    }
    for (std::size_t u = 0; u < config.updates_per_group; ++u) {
      const auto grad = grpo_gradient(group, policy, config);
      if (u == 0) {
        const auto rep = grpo_objective(group, policy, config);
        rec.objective = rep.objective;
        rec.surrogate = rep.surrogate;
        rec.kl_term = rep.kl_term;
        rec.clipped_fraction = rep.clipped_fraction;
        rec.degenerate_groups = rep.degenerate ? 1 : 0;
      }
      policy = update_step(policy, grad, config.learning_rate);
    }
    double sum = 0.0;
    for (double r : group.rewards) sum += r;
    rec.mean_total_reward = sum / static_cast<double>(group.size());
    means.push_back(rec.mean_total_reward);
    trace.records.push_back(rec);
  }

  const std::size_t w = std::max<std::size_t>(1, std::min(options.window, means.size()));
  double running = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    running += means[i];
    if (i >= w) running -= means[i - w];
    if (i + 1 >= w) {
      const double avg = running / static_cast<double>(w);
      trace.summary.best_mean_reward = std::max(trace.summary.best_mean_reward, avg);
      if (!trace.summary.steps_to_95pct && avg >= 0.95 * options.target_reward) {
        trace.summary.steps_to_95pct = i + 1;
      }
    }
  }
  if (!means.empty()) trace.summary.final_mean_reward = running / static_cast<double>(w);
  return trace;
}

// ─── Format bandit ────────────────────────────────────────────────────────

/// MCQA prompt with a fixed truth letter. Responses are token strings joined
/// by spaces and scored by the full reward engine (format gate + MCQA channel).
struct FormatBanditEnv {
  std::vector<std::string> alphabet;
  std::string stop_token = "<eos>";
  std::size_t max_len = 3;
  char truth = 'B';
  Conditioning conditioning = Conditioning::PreviousToken;

  static FormatBanditEnv defaults() {
    FormatBanditEnv env;
    env.alphabet = {"<think>reasoning</think>", "<answer>A</answer>", "<answer>B</answer>",
                    "<answer>C</answer>", "<think>", "</think>", "<answer>", "</answer>",
                    "A", "B", "C", "<eos>"};
    return env;
  }

  void validate() const {
    if (std::find(alphabet.begin(), alphabet.end(), stop_token) == alphabet.end()) {
      throw Error(ErrorCode::InvalidConfig, "stop token missing from alphabet");
    }
    if (truth < 'A' || truth > 'E') throw Error(ErrorCode::InvalidConfig, "truth must be A-E");
    if (max_len == 0) throw Error(ErrorCode::InvalidConfig, "max_len must be positive");
  }

  ToyPolicy initial_policy() const {
    validate();
    const auto stop = static_cast<std::size_t>(
        std::find(alphabet.begin(), alphabet.end(), stop_token) - alphabet.begin());
    return ToyPolicy(alphabet, max_len, conditioning, stop);
  }

  std::string render(const ToyPolicy& policy, const TokenSequence& tokens) const {
    std::string out;
    for (auto t : tokens) {
      if (policy.stop_token() && t == *policy.stop_token()) break;
      if (!out.empty()) out += ' ';
      out += policy.alphabet()[t];
    }
    return out;
  }
};

inline RewardBreakdown score_bandit_response(const FormatBanditEnv& env, const McqaExtractor& extract,
                                             const std::string& raw) {
  const auto parsed = parse_format(raw);
  const double task = parsed.format_valid ? score_mcqa(extract(*parsed.answer), env.truth) : 0.0;
  return score_total(parsed, TaskKind::MCQA, task);
}

inline TrainingTrace run_format_bandit(const GrpoConfig& config, const FormatBanditEnv& env,
                                       const TrainOptions& options,
                                       ToyPolicy* final_policy = nullptr) {
  auto policy = env.initial_policy();
  const RewardConfig reward_config;
  const McqaExtractor extract(reward_config.mcqa_pattern);
  const ToyPolicy shape = policy;
  auto reward = [&](const TokenSequence& tokens) {
    const auto b = score_bandit_response(env, extract, env.render(shape, tokens));
    return ToyReward{b.total, b.format == 1};
  };
  auto trace = run_grpo(policy, config, reward, options);
  if (final_policy) *final_policy = policy;
  return trace;
}

// ─── Caption toy ──────────────────────────────────────────────────────────

/// An emittable unit: one policy token that contributes a fixed bundle of events.
struct CaptionToken {
  std::string name;
  std::vector<std::string> events;
};

struct CaptionToyEnv {
  std::vector<CaptionToken> tokens;
  EventSet truth_events;
  EventSet distractor_events;
  std::string stop_token = "<eos>";

  /// Four truth events; the fourth is only reachable through a noisy token
  /// that also emits two distractors. Including it pays under alpha = 0.5 and
  /// loses under alpha = 1.
  static CaptionToyEnv defaults() {
    CaptionToyEnv env;
    env.truth_events = EventSet({"a man enters the kitchen", "he fills a pot with water",
                                 "he places the pot on the stove", "he adds the chicken"});
    env.distractor_events =
        EventSet({"a dog barks outside", "the lights flicker", "a woman answers the phone"});
    env.tokens = {
        {"enter", {"a man enters the kitchen"}},
        {"fill", {"he fills a pot with water"}},
        {"stove", {"he places the pot on the stove"}},
        {"chicken_noisy", {"he adds the chicken", "a dog barks outside", "the lights flicker"}},
        {"phone", {"a woman answers the phone"}},
    };
    return env;
  }

  void validate() const {
    if (truth_events.size() < 2) throw Error(ErrorCode::EmptyTruth, "caption toy needs >= 2 truth events");
    std::set<std::string> truth(truth_events.events().begin(), truth_events.events().end());
    std::set<std::string> known = truth;
    for (const auto& d : distractor_events.events()) {
      if (truth.count(d)) throw Error(ErrorCode::InvalidConfig, "truth and distractors overlap: " + d);
      known.insert(d);
    }
    if (tokens.empty()) throw Error(ErrorCode::InvalidConfig, "caption toy needs tokens");
    for (const auto& t : tokens) {
      if (t.name == stop_token) throw Error(ErrorCode::InvalidConfig, "token named like stop token");
      const EventSet emitted(t.events);
      for (const auto& e : emitted.events()) {
        if (!known.count(e)) throw Error(ErrorCode::InvalidConfig, "token event not declared: " + e);
      }
    }
  }

  std::vector<std::string> alphabet() const {
    std::vector<std::string> a;
    for (const auto& t : tokens) a.push_back(t.name);
    a.push_back(stop_token);
    return a;
  }

  ToyPolicy initial_policy() const {
    validate();
    return ToyPolicy(alphabet(), tokens.size() + 1, Conditioning::PreviousToken, tokens.size());
  }

  /// Distinct emitted token indices (stop excluded), sorted.
  std::vector<std::size_t> emission(const TokenSequence& seq) const {
    std::set<std::size_t> s;
    for (auto t : seq) {
      if (t >= tokens.size()) break;
      s.insert(t);
    }
    return {s.begin(), s.end()};
  }

  EventSet emitted_events(const std::vector<std::size_t>& token_set) const {
    std::vector<std::string> ev;
    for (auto t : token_set) ev.insert(ev.end(), tokens[t].events.begin(), tokens[t].events.end());
    return EventSet(ev);
  }

  AutoDqScore score(const std::vector<std::size_t>& token_set, double alpha) const {
    return score_autodq(emitted_events(token_set), truth_events, exact_event_match, alpha);
  }
};

struct CaptionOptimum {
  std::vector<std::size_t> tokens;
  std::size_t event_count = 0;
  double reward = 0.0;
};

/// Exhaustive search over token subsets. Ties: smaller set, then lexicographic.
inline CaptionOptimum brute_force_caption_optimum(const CaptionToyEnv& env, double alpha) {
  env.validate();
  const std::size_t n = env.tokens.size();
  if (n > 20 || env.truth_events.size() + env.distractor_events.size() > 20) {
    throw Error(ErrorCode::TooLarge, "too many tokens or events to enumerate");
  }
  std::optional<CaptionOptimum> best;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) subset.push_back(i);
    }
    CaptionOptimum c{subset, env.emitted_events(subset).size(), env.score(subset, alpha).reward};
    const bool better =
        !best || c.reward > best->reward + 1e-12 ||
        (std::abs(c.reward - best->reward) <= 1e-12 &&
         (c.tokens.size() < best->tokens.size() ||
          (c.tokens.size() == best->tokens.size() && c.tokens < best->tokens)));
    if (better) best = std::move(c);
  }
  return *best;
}

struct CaptionToyResult {
  TrainingTrace trace;
  std::vector<std::size_t> modal_tokens;
  std::size_t modal_event_count = 0;
  double modal_reward = 0.0;
  double modal_share = 0.0;
};

inline CaptionToyResult run_caption_toy(const GrpoConfig& config, const CaptionToyEnv& env,
                                        double alpha, const TrainOptions& options,
                                        std::size_t modal_samples = 2000) {
  auto policy = env.initial_policy();
  auto reward = [&](const TokenSequence& seq) {
    return ToyReward{env.score(env.emission(seq), alpha).reward, true};
  };
  CaptionToyResult out;
  out.trace = run_grpo(policy, config, reward, options);

  std::map<std::vector<std::size_t>, std::size_t> counts;
  std::size_t drawn = 0;
  const auto seed = step_seed(options.seed, options.steps + 1);
  while (drawn < modal_samples) {
    const auto batch = std::min<std::size_t>(std::max<std::size_t>(modal_samples - drawn, 2), 256);
    for (const auto& s : sample_responses(policy, batch, config.sample_temperature, seed + drawn)) {
      ++counts[env.emission(s.tokens)];
    }
    drawn += batch;
  }
  std::size_t best = 0;
  for (const auto& [set, c] : counts) {
    if (c > best) {
      best = c;
      out.modal_tokens = set;
    }
  }
  out.modal_share = static_cast<double>(best) / static_cast<double>(drawn);
  out.modal_event_count = env.emitted_events(out.modal_tokens).size();
  out.modal_reward = env.score(out.modal_tokens, alpha).reward;
  return out;
}

}  // namespace versavid
