#pragma once
// Judge prompts, verdict parsing, cached/retrying dispatch to a judge backend,
// and the offline event matcher that stands in for the caption judge.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "versavid/error.hpp"
#include "versavid/reward.hpp"
#include "versavid/task.hpp"
#include "versavid/text.hpp"

namespace versavid {

// ─── Prompt templates ──────────────────────────────────────────────────────
// Kept byte-identical to prompts/*.txt (checked by the test suite).

inline constexpr std::string_view kDarkEventJudgeTemplate =
    "You are an evaluator tasked with determining if a given response matches the Ground "
    "Truth (GT) provided. Your job is to compare the response and GT carefully and return "
    "a value based on their consistency.\n"
    "\n"
    "Instructions:\n"
    "1. Read the Response and GT carefully: Ensure you understand both the response and "
    "the GT completely.\n"
    "2. Evaluate the Consistency:\n"
    "*Score 2: If the response semantically covers the GT entirely, even if the response "
    "is longer.\n"
    "*Score 1: If the response partially covers the GT, but does not fully encompass it.\n"
    "*Score 0: If the response is entirely different and irrelevant from the GT or the "
    "response is None.\n"
    "\n"
    "Response: {model response}\n"
    "GT: {ground truth}\n"
    "\n"
    "Your judgment:";

// "Groung" is reproduced as published.
inline constexpr std::string_view kMixVidJudgeTemplate =
    "Given a question along with its ground truth and a generated answer, please judge "
    "whether the generated answer is True or False. If the ground truth or the generated "
    "answer is ambiguous, consider it as False.\n"
    "\n"
    "Question: {question}\n"
    "Groung truth: {ground truth}\n"
    "Generated answer: {model response}\n"
    "\n"
    "Your judgment:";

inline constexpr std::string_view kReasoningSuffix =
    "Output the thinking process in <think> </think> and final answer in <answer> "
    "</answer> tags, i.e., <think> reasoning process here </think> <answer> answer here "
    "</answer>.";

inline std::string elicit_reasoning(std::string_view original_prompt) {
  std::string out(original_prompt);
  if (!out.empty() && !std::isspace(static_cast<unsigned char>(out.back()))) out += ' ';
  out += kReasoningSuffix;
  return out;
}

namespace detail {

// Single left-to-right pass; substituted text is never rescanned.
inline std::string fill_slots(std::string_view tmpl,
                              const std::vector<std::pair<std::string_view, std::string_view>>& slots) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [name, value] : slots) {
        if (tmpl.substr(i, name.size()) == name) {
          out += value;
          i += name.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl[i++]);
  }
  return out;
}

inline void require_nonempty(std::string_view value, std::string_view what) {
  if (value.empty()) throw Error(ErrorCode::EmptyInput, std::string(what) + " is empty");
}

}  // namespace detail

inline std::string render_dark_prompt(std::string_view response, std::string_view ground_truth) {
  detail::require_nonempty(response, "response");
  detail::require_nonempty(ground_truth, "ground truth");
  return detail::fill_slots(kDarkEventJudgeTemplate,
                            {{"{model response}", response}, {"{ground truth}", ground_truth}});
}

inline std::string render_mix_prompt(std::string_view question, std::string_view ground_truth,
                                     std::string_view response) {
  detail::require_nonempty(question, "question");
  detail::require_nonempty(ground_truth, "ground truth");
  detail::require_nonempty(response, "response");
  return detail::fill_slots(kMixVidJudgeTemplate, {{"{question}", question},
                                                   {"{ground truth}", ground_truth},
                                                   {"{model response}", response}});
}

// ─── Requests and verdicts ────────────────────────────────────────────────

struct JudgeRequest {
  TaskKind task_kind = TaskKind::DarkEventInfer;
  std::optional<std::string> question;
  std::string ground_truth;
  std::string response;
  std::string rendered_prompt;

  std::string cache_key() const {
    return std::string(to_string(task_kind)) + '\x1f' + rendered_prompt;
  }
};

inline JudgeRequest make_judge_request(TaskKind kind, std::optional<std::string> question,
                                       std::string ground_truth, std::string response) {
  JudgeRequest r;
  r.task_kind = kind;
  switch (kind) {
    case TaskKind::DarkEventInfer:
      r.rendered_prompt = render_dark_prompt(response, ground_truth);
      break;
    case TaskKind::MixVidQA:
      r.rendered_prompt = render_mix_prompt(question.value_or(""), ground_truth, response);
      break;
    default:
      throw Error(ErrorCode::InvalidConfig,
                  "task kind " + std::string(to_string(kind)) + " is not judge-scored");
  }
  r.question = std::move(question);
  r.ground_truth = std::move(ground_truth);
  r.response = std::move(response);
  return r;
}

struct JudgeVerdict {
  TaskKind task_kind = TaskKind::DarkEventInfer;
  std::optional<JudgeTier> tier;
  std::optional<bool> correct;
  std::string raw_output;
  // Set when the verdict is the conservative lowest tier after an unparseable reply.
  bool fallback = false;

  double reward(const TierValues& tiers = {}) const {
    if (tier) return score_dark_event(*tier, tiers);
    return score_mixvid(correct.value_or(false));
  }
};

inline JudgeVerdict lowest_tier_verdict(TaskKind kind, std::string raw_output) {
  JudgeVerdict v;
  v.task_kind = kind;
  v.raw_output = std::move(raw_output);
  v.fallback = true;
  if (kind == TaskKind::DarkEventInfer) {
    v.tier = JudgeTier::Error;
  } else {
    v.correct = false;
  }
  return v;
}

/// DarkEventInfer: first standalone single digit in {0,1,2}.
/// MixVidQA: first standalone "true"/"false", case-insensitive.
inline JudgeVerdict parse_verdict(std::string_view raw, TaskKind kind) {
  JudgeVerdict v;
  v.task_kind = kind;
  v.raw_output = std::string(raw);
  if (kind == TaskKind::DarkEventInfer) {
    std::size_t i = 0;
    while (i < raw.size()) {
      if (!text::is_word_char(raw[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < raw.size() && text::is_word_char(raw[j])) ++j;
      const auto token = raw.substr(i, j - i);
      if (token.size() == 1 && token[0] >= '0' && token[0] <= '2') {
        v.tier = token[0] == '2'   ? JudgeTier::FullyCorrect
                 : token[0] == '1' ? JudgeTier::Partial
                                   : JudgeTier::Error;
        return v;
      }
      i = j;
    }
  } else if (kind == TaskKind::MixVidQA) {
    for (const auto& w : text::words(raw)) {
      if (w == "true" || w == "false") {
        v.correct = (w == "true");
        return v;
      }
    }
  } else {
    throw Error(ErrorCode::InvalidConfig, "no verdict format for this task kind");
  }
  throw Error(ErrorCode::UnparseableVerdict, "cannot read a verdict from '" + v.raw_output + "'");
}

// ─── Backends ─────────────────────────────────────────────────────────────

struct JudgeBackendConfig {
  std::string endpoint_url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model_name = "Qwen2-72B-Instruct";
  double timeout_s = 60.0;
  int max_retries = 2;
  double temperature = 0.0;
  int concurrency_limit = 4;

  void validate() const {
    if (max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be >= 0");
    if (concurrency_limit < 1) throw Error(ErrorCode::InvalidConfig, "concurrency_limit must be >= 1");
    if (!(timeout_s > 0)) throw Error(ErrorCode::InvalidConfig, "timeout must be > 0");
  }
};

/// Raised by backends for connection-level failures; the gateway retries these.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  /// Returns the judge model's raw text output for the request.
  virtual std::string complete(const JudgeRequest& request) = 0;
};

/// Deterministic offline judge for tests and dry runs. Rules are synthetic:
/// normalized equality is the top tier, token F1 >= 0.5 is partial (False for
/// MixVidQA), anything else is the error tier.
class MockJudgeBackend : public JudgeBackend {
 public:
  std::string complete(const JudgeRequest& request) override {
    const bool equal =
        text::normalize_event(request.response) == text::normalize_event(request.ground_truth);
    const double f1 = text::token_f1(request.ground_truth, request.response);
    if (request.task_kind == TaskKind::MixVidQA) return equal ? "True" : "False";
    if (equal) return "Score: 2";
    if (f1 >= 0.5) return "Score: 1";
    return "Score: 0";
  }
};

/// Thread-safe JSONL sink for judge traffic.
class AuditLog {
 public:
  explicit AuditLog(std::ostream& out) : out_(out) {}

  void write(const nlohmann::json& record) {
    std::lock_guard lock(mu_);
    out_ << record.dump() << '\n';
  }

 private:
  std::mutex mu_;
  std::ostream& out_;
};

/// Cached, retrying front end over a backend. Identical requests (by content)
/// reach the backend at most once, also when issued concurrently.
class JudgeGateway {
 public:
  JudgeGateway(std::shared_ptr<JudgeBackend> backend, JudgeBackendConfig config,
               AuditLog* audit = nullptr)
      : backend_(std::move(backend)), config_(std::move(config)), audit_(audit) {
    config_.validate();
  }

  JudgeVerdict judge(const JudgeRequest& request) {
    if (request.rendered_prompt.empty()) {
      throw Error(ErrorCode::EmptyInput, "judge request has no rendered prompt");
    }
    const auto key = request.cache_key();
    std::promise<JudgeVerdict> promise;
    std::shared_future<JudgeVerdict> future;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) {
        future = it->second;
      } else {
        future = promise.get_future().share();
        cache_.emplace(key, future);
        owner = true;
      }
    }
    if (!owner) return future.get();
    try {
      promise.set_value(dispatch(request));
    } catch (...) {
      {
        std::lock_guard lock(mu_);
        cache_.erase(key);
      }
      promise.set_exception(std::current_exception());
    }
    return future.get();
  }

  /// Judges all requests with up to concurrency_limit workers; output order
  /// follows input order. Rethrows the first failure after all workers stop.
  std::vector<JudgeVerdict> judge_all(const std::vector<JudgeRequest>& requests) {
    std::vector<std::optional<JudgeVerdict>> slots(requests.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        try {
          slots[i] = judge(requests[i]);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(config_.concurrency_limit),
                                         requests.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    std::vector<JudgeVerdict> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

  std::size_t backend_calls() const { return calls_.load(); }
  const JudgeBackendConfig& config() const { return config_; }

 private:
  JudgeVerdict dispatch(const JudgeRequest& request) {
    const int attempts = config_.max_retries + 1;
    std::optional<std::string> last_unparseable;
    std::string last_transport;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      std::string raw;
      try {
        ++calls_;
        raw = backend_->complete(request);
      } catch (const TransportError& e) {
        last_transport = e.what();
        last_unparseable.reset();
        log(request, attempt, nullptr, &last_transport);
        continue;
      }
      log(request, attempt, &raw, nullptr);
      try {
        return parse_verdict(raw, request.task_kind);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnparseableVerdict) throw;
        last_unparseable = raw;
      }
    }
    if (last_unparseable) return lowest_tier_verdict(request.task_kind, *last_unparseable);
    throw Error(ErrorCode::BackendUnavailable,
                "judge backend failed after " + std::to_string(attempts) +
                    " attempts: " + last_transport);
  }

  void log(const JudgeRequest& request, int attempt, const std::string* raw,
           const std::string* error) {
    if (!audit_) return;
    nlohmann::json rec{{"task_kind", to_string(request.task_kind)},
                       {"attempt", attempt},
                       {"prompt", request.rendered_prompt}};
    if (raw) rec["raw_output"] = *raw;
    if (error) rec["error"] = *error;
    audit_->write(rec);
  }

  std::shared_ptr<JudgeBackend> backend_;
  JudgeBackendConfig config_;
  AuditLog* audit_;
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_future<JudgeVerdict>> cache_;
  std::atomic<std::size_t> calls_{0};
};

/// Judges a request, mapping any backend failure to the lowest tier so a GRPO
/// group always receives a full set of rewards.
inline JudgeVerdict judge_or_lowest(JudgeGateway& gateway, const JudgeRequest& request) {
  try {
    return gateway.judge(request);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BackendUnavailable) throw;
    return lowest_tier_verdict(request.task_kind, e.what());
  }
}

// ─── Offline event matching ───────────────────────────────────────────────

/// Greedy one-to-one matching by descending token F1; ties go to the lower
/// truth index, then the lower predicted index.
inline std::vector<MatchPair> local_event_match(const EventSet& predicted, const EventSet& truth,
                                                double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "match threshold must be in (0,1]");
  }
  std::vector<MatchPair> candidates;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double f1 = text::token_f1(truth.events()[t], predicted.events()[p]);
      if (f1 >= threshold) candidates.push_back({p, t, f1});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const MatchPair& a, const MatchPair& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.truth != b.truth) return a.truth < b.truth;
    return a.predicted < b.predicted;
  });
  std::vector<bool> used_p(predicted.size()), used_t(truth.size());
  std::vector<MatchPair> out;
  for (const auto& c : candidates) {
    if (used_p[c.predicted] || used_t[c.truth]) continue;
    used_p[c.predicted] = used_t[c.truth] = true;
    out.push_back(c);
  }
  return out;
}

inline EventMatcher make_local_matcher(double threshold) {
  return [threshold](const EventSet& predicted, const EventSet& truth) {
    return local_event_match(predicted, truth, threshold);
  };
}

}  // namespace versavid
