#pragma once
// Rule-based rewards: format gating, MCQA extraction, judge tiers, event-level
// recall/precision, temporal/speculative keyword bonus, caption reward.

#include <algorithm>
#include <cctype>
#include <functional>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "versavid/error.hpp"
#include "versavid/task.hpp"
#include "versavid/text.hpp"

namespace versavid {

// ─── Format ────────────────────────────────────────────────────────────────

struct ParsedResponse {
  std::string raw;
  std::optional<std::string> think;
  std::optional<std::string> answer;
  bool format_valid = false;
};

namespace detail {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

inline std::size_t skip_space(std::string_view s, std::size_t i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

inline bool contains_any_tag(std::string_view s) {
  for (auto tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    if (s.find(tag) != std::string_view::npos) return true;
  }
  return false;
}

// Reads `open` inner `close` starting at i; inner must be tag-free.
inline std::optional<std::string> read_block(std::string_view s, std::size_t& i,
                                             std::string_view open, std::string_view close) {
  if (s.substr(i, open.size()) != open) return std::nullopt;
  const auto inner_begin = i + open.size();
  const auto close_pos = s.find(close, inner_begin);
  if (close_pos == std::string_view::npos) return std::nullopt;
  const auto inner = s.substr(inner_begin, close_pos - inner_begin);
  if (contains_any_tag(inner)) return std::nullopt;
  i = close_pos + close.size();
  return std::string(inner);
}

}  // namespace detail

/// Accepts exactly: ws <think>T</think> ws <answer>A</answer> ws, where T and A
/// contain no tag strings. Anything else is invalid and carries no parts.
inline ParsedResponse parse_format(std::string_view raw) {
  ParsedResponse out;
  out.raw = std::string(raw);
  std::size_t i = detail::skip_space(raw, 0);
  auto think = detail::read_block(raw, i, detail::kThinkOpen, detail::kThinkClose);
  if (!think) return out;
  i = detail::skip_space(raw, i);
  auto answer = detail::read_block(raw, i, detail::kAnswerOpen, detail::kAnswerClose);
  if (!answer) return out;
  if (detail::skip_space(raw, i) != raw.size()) return out;
  out.think = std::move(think);
  out.answer = std::move(answer);
  out.format_valid = true;
  return out;
}

// ─── Configuration ─────────────────────────────────────────────────────────

/// Temporal (T) and speculation (S) phrase sets, stored in canonical lowercase
/// word-joined form.
class KeywordSets {
 public:
  KeywordSets() = default;

  KeywordSets(const std::vector<std::string>& temporal,
              const std::vector<std::string>& speculation) {
    for (const auto& p : temporal) temporal_.insert(canonical(p));
    for (const auto& p : speculation) speculation_.insert(canonical(p));
    for (const auto& p : temporal_) {
      if (speculation_.count(p)) {
        throw Error(ErrorCode::InvalidConfig, "keyword '" + p + "' is in both sets");
      }
    }
  }

  static KeywordSets defaults() {
    return KeywordSets(
        {"start with", "then", "next", "after", "begin with", "followed by", "following",
         "subsequently", "initially", "first", "second", "finally", "lastly"},
        {"possibly", "likely", "appears to", "seems to", "might", "may", "potentially",
         "probably", "implying", "perhaps", "presumably"});
  }

  const std::set<std::string>& temporal() const { return temporal_; }
  const std::set<std::string>& speculation() const { return speculation_; }

  static std::string canonical(std::string_view phrase) {
    const auto ws = text::words(phrase);
    if (ws.empty()) throw Error(ErrorCode::InvalidConfig, "empty keyword phrase");
    std::string out;
    for (const auto& w : ws) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  }

 private:
  std::set<std::string> temporal_;
  std::set<std::string> speculation_;
};

struct TierValues {
  double fully_correct = 2.0;
  double partial = 1.0;
  double error = 0.0;
};

struct RewardConfig {
  double alpha = 0.5;
  double beta = 0.2;
  int gamma = 2;
  TierValues tier_values;
  KeywordSets keyword_sets = KeywordSets::defaults();
  std::string mcqa_pattern = R"(\b([A-Ea-e])\b)";
  // Count every occurrence instead of distinct set members. Off by default.
  bool count_keyword_occurrences = false;
  // Token-F1 threshold for the offline event matcher used in caption scoring.
  double event_match_threshold = 0.5;

  void validate() const {
    if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be >= 0");
    if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidConfig, "beta must be >= 0");
    if (gamma < 0) throw Error(ErrorCode::InvalidConfig, "gamma must be >= 0");
    if (!(tier_values.fully_correct > tier_values.partial &&
          tier_values.partial > tier_values.error)) {
      throw Error(ErrorCode::InvalidConfig, "tier values must be strictly decreasing");
    }
    if (!(event_match_threshold > 0.0 && event_match_threshold <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "event_match_threshold must be in (0,1]");
    }
    try {
      std::regex re(mcqa_pattern);
      if (re.mark_count() < 1) {
        throw Error(ErrorCode::InvalidConfig, "mcqa_pattern needs one capture group");
      }
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::InvalidConfig, std::string("mcqa_pattern: ") + e.what());
    }
  }
};

// ─── MCQA / judge-tier channels ───────────────────────────────────────────

/// Compiled MCQA option extractor; reuse it when scoring many answers.
class McqaExtractor {
 public:
  explicit McqaExtractor(const std::string& pattern)
      : re_(pattern, std::regex::ECMAScript | std::regex::icase) {}

  std::optional<char> operator()(std::string_view answer) const {
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(answer.begin(), answer.end(), m, re_) || m.size() < 2 ||
        m[1].length() == 0) {
      return std::nullopt;
    }
    return static_cast<char>(std::toupper(static_cast<unsigned char>(*m[1].first)));
  }

 private:
  std::regex re_;
};

inline std::optional<char> extract_mcqa_choice(std::string_view answer,
                                               const RewardConfig& config) {
  return McqaExtractor(config.mcqa_pattern)(answer);
}

inline double score_mcqa(std::optional<char> choice, char truth) {
  return choice && *choice == truth ? 1.0 : 0.0;
}

enum class JudgeTier { FullyCorrect, Partial, Error };

inline std::string_view to_string(JudgeTier tier) {
  switch (tier) {
    case JudgeTier::FullyCorrect: return "fully_correct";
    case JudgeTier::Partial: return "partial";
    case JudgeTier::Error: return "error";
  }
  return "?";
}

inline double score_dark_event(JudgeTier tier, const TierValues& values = {}) {
  switch (tier) {
    case JudgeTier::FullyCorrect: return values.fully_correct;
    case JudgeTier::Partial: return values.partial;
    case JudgeTier::Error: return values.error;
  }
  return values.error;
}

inline double score_mixvid(bool correct) { return correct ? 1.0 : 0.0; }

// ─── Events and AutoDQ ─────────────────────────────────────────────────────

/// Normalized, duplicate-free list of short event clauses.
class EventSet {
 public:
  EventSet() = default;

  explicit EventSet(const std::vector<std::string>& events) {
    for (const auto& e : events) {
      auto norm = text::normalize_event(e);
      if (norm.empty()) throw Error(ErrorCode::InvalidEvent, "event is empty after normalization");
      if (std::find(events_.begin(), events_.end(), norm) == events_.end()) {
        events_.push_back(std::move(norm));
      }
    }
  }

  /// Splits caption text into sentence-level events; empty fragments are dropped.
  static EventSet from_caption(std::string_view caption) {
    std::vector<std::string> parts;
    std::string cur;
    auto flush = [&] {
      if (!text::normalize_event(cur).empty()) parts.push_back(cur);
      cur.clear();
    };
    for (char c : caption) {
      if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
        flush();
      } else {
        cur.push_back(c);
      }
    }
    flush();
    return EventSet(parts);
  }

  const std::vector<std::string>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

 private:
  std::vector<std::string> events_;
};

struct MatchPair {
  std::size_t predicted;
  std::size_t truth;
  double score;
};

/// One-to-one mapping between predicted and truth events.
using EventMatcher =
    std::function<std::vector<MatchPair>(const EventSet& predicted, const EventSet& truth)>;

inline std::vector<MatchPair> exact_event_match(const EventSet& predicted, const EventSet& truth) {
  std::vector<MatchPair> out;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      if (predicted.events()[p] == truth.events()[t]) {
        out.push_back({p, t, 1.0});
        break;
      }
    }
  }
  return out;
}

struct AutoDqScore {
  double recall = 0.0;
  double precision = 0.0;
  double reward = 0.0;
};

inline AutoDqScore score_autodq(const EventSet& predicted, const EventSet& truth,
                                const EventMatcher& matcher, double alpha) {
  if (truth.empty()) throw Error(ErrorCode::EmptyTruth, "ground-truth event set is empty");
  AutoDqScore s;
  if (predicted.empty()) return s;
  const auto pairs = matcher(predicted, truth);
  std::set<std::size_t> matched_truth, matched_pred;
  for (const auto& m : pairs) {
    matched_truth.insert(m.truth);
    matched_pred.insert(m.predicted);
  }
  s.recall = static_cast<double>(matched_truth.size()) / static_cast<double>(truth.size());
  s.precision = static_cast<double>(matched_pred.size()) / static_cast<double>(predicted.size());
  s.reward = s.recall + alpha * s.precision;
  return s;
}

// ─── Keywords and caption ─────────────────────────────────────────────────

/// Negative count of speculation phrases if any is present, otherwise the
/// temporal phrase count capped at gamma.
inline int score_keywords(std::string_view caption, const KeywordSets& sets, int gamma,
                          bool count_occurrences = false) {
  const auto hay = text::boundary_form(caption);
  auto tally = [&](const std::set<std::string>& phrases) {
    int n = 0;
    for (const auto& p : phrases) {
      const auto hits = text::count_occurrences(hay, " " + p + " ");
      n += static_cast<int>(count_occurrences ? hits : (hits > 0 ? 1 : 0));
    }
    return n;
  };
  const int speculative = tally(sets.speculation());
  if (speculative > 0) return -speculative;
  return std::min(tally(sets.temporal()), gamma);
}

inline double score_caption(double recall, double precision, int keywords,
                            const RewardConfig& config) {
  return (recall + config.alpha * precision) + config.beta * static_cast<double>(keywords);
}

// ─── Total ─────────────────────────────────────────────────────────────────

struct CaptionComponents {
  double recall = 0.0;
  double precision = 0.0;
  int keywords = 0;
};

struct RewardBreakdown {
  int format = 0;
  TaskKind task_kind = TaskKind::MCQA;
  double task_reward = 0.0;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<int> keywords;
  double total = 0.0;
};

/// Multiplicative gating: the sample's single task channel only counts when
/// the response is well-formed.
inline RewardBreakdown score_total(const ParsedResponse& parsed, TaskKind kind,
                                   double task_reward,
                                   std::optional<CaptionComponents> caption = std::nullopt) {
  RewardBreakdown b;
  b.format = parsed.format_valid ? 1 : 0;
  b.task_kind = kind;
  b.task_reward = task_reward;
  if (caption) {
    b.recall = caption->recall;
    b.precision = caption->precision;
    b.keywords = caption->keywords;
  }
  b.total = b.format == 1 ? task_reward : 0.0;
  return b;
}

inline double f1_score(double recall, double precision) {
  const double denom = recall + precision;
  return denom > 0.0 ? 2.0 * recall * precision / denom : 0.0;
}

}  // namespace versavid
