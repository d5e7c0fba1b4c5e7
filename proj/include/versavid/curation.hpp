#pragma once
// Render-free dataset curation: masked-event (dark screen) and interleaved
// two-clip samples as edit decision lists, plus GRPO pre-filtering of
// sampled response groups.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "versavid/error.hpp"
#include "versavid/task.hpp"

namespace versavid {

/// Media time in integer microseconds; sums of segment durations are exact.
class TimeUs {
 public:
  constexpr TimeUs() = default;
  constexpr explicit TimeUs(std::int64_t us) : us_(us) {}

  static TimeUs from_seconds(double s) {
    if (!std::isfinite(s)) throw Error(ErrorCode::InvalidTimeline, "non-finite time");
    return TimeUs(static_cast<std::int64_t>(std::llround(s * 1e6)));
  }

  constexpr std::int64_t count() const { return us_; }
  constexpr double seconds() const { return static_cast<double>(us_) / 1e6; }

  constexpr TimeUs operator+(TimeUs o) const { return TimeUs(us_ + o.us_); }
  constexpr TimeUs operator-(TimeUs o) const { return TimeUs(us_ - o.us_); }
  constexpr TimeUs& operator+=(TimeUs o) {
    us_ += o.us_;
    return *this;
  }
  constexpr auto operator<=>(const TimeUs&) const = default;

 private:
  std::int64_t us_ = 0;
};

inline constexpr TimeUs kMixSegmentMin{1'500'000};
inline constexpr TimeUs kMixSegmentMax{2'000'000};
inline constexpr TimeUs kMixMinRemainder{250'000};

inline constexpr std::string_view kDarkEventQuestion =
    "Part of this video is hidden by a black screen. What happens during the black-screen "
    "segment?";

struct EventAnnotation {
  std::string label;
  TimeUs start;
  TimeUs end;
};

struct VideoTimeline {
  std::string video_id;
  TimeUs duration;
  std::vector<EventAnnotation> events;

  void validate() const {
    if (video_id.empty()) throw Error(ErrorCode::InvalidTimeline, "empty video_id");
    if (duration <= TimeUs{0}) throw Error(ErrorCode::InvalidTimeline, video_id + ": duration must be positive");
    TimeUs prev_end{0};
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      const auto where = video_id + " event " + std::to_string(i);
      if (e.label.empty()) throw Error(ErrorCode::InvalidTimeline, where + ": empty label");
      if (e.start < TimeUs{0} || !(e.start < e.end)) {
        throw Error(ErrorCode::InvalidTimeline, where + ": need 0 <= start < end");
      }
      if (e.end > duration) throw Error(ErrorCode::InvalidTimeline, where + ": ends after the video");
      if (e.start < prev_end) throw Error(ErrorCode::InvalidTimeline, where + ": unsorted or overlapping");
      prev_end = e.end;
    }
  }
};

/// One output segment. A BLACK segment has no source; its interval is [0, duration).
struct Segment {
  std::optional<std::string> source;
  TimeUs src_start;
  TimeUs src_end;

  bool is_black() const { return !source.has_value(); }
  TimeUs duration() const { return src_end - src_start; }

  static Segment black(TimeUs duration) { return {std::nullopt, TimeUs{0}, duration}; }
};

struct EdlQa {
  std::string question;
  std::string answer;
  std::optional<std::string> masked_label;
};

struct EditDecisionList {
  std::string output_id;
  std::vector<Segment> segments;
  std::optional<EdlQa> qa;

  TimeUs total_duration() const {
    TimeUs t{0};
    for (const auto& s : segments) t += s.duration();
    return t;
  }
};

struct QaRecord {
  std::string sample_id;
  TaskKind task_kind = TaskKind::MixVidQA;
  std::string question;
  std::string answer;
  std::string source_ref;
};

/// Unbiased index in [0, n) from a 64-bit engine.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const auto bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

inline TimeUs uniform_time(std::mt19937_64& rng, TimeUs lo, TimeUs hi) {
  const auto span = static_cast<std::size_t>(hi.count() - lo.count() + 1);
  return lo + TimeUs(static_cast<std::int64_t>(uniform_index(rng, span)));
}

// ─── DarkEventInfer ───────────────────────────────────────────────────────

/// Replaces event `index` with a black segment of identical duration.
inline EditDecisionList build_dark_event_sample(const VideoTimeline& timeline, std::size_t index) {
  timeline.validate();
  if (timeline.events.size() < 2) {
    throw Error(ErrorCode::InsufficientContext,
                timeline.video_id + ": need >= 2 events so context remains visible");
  }
  if (index >= timeline.events.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "event index " + std::to_string(index));
  }
  const auto& masked = timeline.events[index];
  EditDecisionList edl;
  edl.output_id = timeline.video_id + "#dark" + std::to_string(index);
  if (masked.start > TimeUs{0}) edl.segments.push_back({timeline.video_id, TimeUs{0}, masked.start});
  edl.segments.push_back(Segment::black(masked.end - masked.start));
  if (masked.end < timeline.duration) {
    edl.segments.push_back({timeline.video_id, masked.end, timeline.duration});
  }
  edl.qa = EdlQa{std::string(kDarkEventQuestion), masked.label, masked.label};
  return edl;
}

/// Masks one event chosen uniformly at random.
inline EditDecisionList build_dark_event_sample_seeded(const VideoTimeline& timeline,
                                                       std::uint64_t seed) {
  if (timeline.events.size() < 2) {
    throw Error(ErrorCode::InsufficientContext,
                timeline.video_id + ": need >= 2 events so context remains visible");
  }
  std::mt19937_64 rng(seed);
  return build_dark_event_sample(timeline, uniform_index(rng, timeline.events.size()));
}

// ─── MixVidQA ─────────────────────────────────────────────────────────────

/// Alternates 1.5-2.0 s pieces of two clips, each clip read front to back.
/// A clip's final remainder may be shorter and is dropped under 0.25 s.
inline EditDecisionList build_mixvid_sample(const VideoTimeline& clip_a, const VideoTimeline& clip_b,
                                            std::uint64_t seed, const QaRecord& qa) {
  for (const auto* c : {&clip_a, &clip_b}) {
    if (c->video_id.empty() || c->duration < kMixSegmentMin) {
      throw Error(ErrorCode::ClipTooShort, c->video_id + " is shorter than 1.5 s");
    }
  }
  if (clip_a.video_id == clip_b.video_id) {
    throw Error(ErrorCode::InvalidQaReference, "both clips are " + clip_a.video_id);
  }
  if (qa.source_ref != clip_a.video_id && qa.source_ref != clip_b.video_id) {
    throw Error(ErrorCode::InvalidQaReference,
                "QA " + qa.sample_id + " references '" + qa.source_ref + "'");
  }
  std::mt19937_64 rng(seed);
  const VideoTimeline* clips[2] = {&clip_a, &clip_b};
  TimeUs cursor[2] = {TimeUs{0}, TimeUs{0}};
  std::size_t current = uniform_index(rng, 2);

  EditDecisionList edl;
  edl.output_id = clip_a.video_id + "+" + clip_b.video_id + "#" + qa.sample_id;
  auto remaining = [&](std::size_t k) { return clips[k]->duration - cursor[k]; };
  while (remaining(0) > TimeUs{0} || remaining(1) > TimeUs{0}) {
    if (remaining(current) <= TimeUs{0}) current = 1 - current;
    const auto want = uniform_time(rng, kMixSegmentMin, kMixSegmentMax);
    const auto take = std::min(want, remaining(current));
    const auto start = cursor[current];
    cursor[current] += take;
    const bool is_final = remaining(current) == TimeUs{0};
    if (!(is_final && take < kMixMinRemainder)) {
      edl.segments.push_back({clips[current]->video_id, start, cursor[current]});
    }
    current = 1 - current;
  }
  edl.qa = EdlQa{qa.question, qa.answer, std::nullopt};
  return edl;
}

// ─── Pre-filtering ────────────────────────────────────────────────────────

inline constexpr std::size_t kPrefilterGroupSize = 5;

enum class PrefilterReason { AllCorrect, AllIncorrect, LowVariance, Kept };

inline std::string_view to_string(PrefilterReason r) {
  switch (r) {
    case PrefilterReason::AllCorrect: return "all_correct";
    case PrefilterReason::AllIncorrect: return "all_incorrect";
    case PrefilterReason::LowVariance: return "low_variance";
    case PrefilterReason::Kept: return "kept";
  }
  return "?";
}

enum class DispersionStat { Variance, StdDev };

struct PrefilterDecision {
  std::string sample_id;
  bool kept = false;
  PrefilterReason reason = PrefilterReason::Kept;
  std::optional<std::size_t> correct_count;
  std::optional<std::vector<double>> f1_list;
  std::optional<double> variance;
  // Value compared against the threshold (variance or its square root).
  std::optional<double> statistic;
};

/// Drops groups that are uniformly correct or uniformly incorrect.
inline PrefilterDecision prefilter_qa(std::string sample_id, std::span<const bool> verdicts) {
  if (verdicts.size() != kPrefilterGroupSize) {
    throw Error(ErrorCode::WrongGroupSize, sample_id + ": expected 5 verdicts, got " +
                                               std::to_string(verdicts.size()));
  }
  PrefilterDecision d;
  d.sample_id = std::move(sample_id);
  const auto n = static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), true));
  d.correct_count = n;
  if (n == kPrefilterGroupSize) {
    d.reason = PrefilterReason::AllCorrect;
  } else if (n == 0) {
    d.reason = PrefilterReason::AllIncorrect;
  } else {
    d.reason = PrefilterReason::Kept;
    d.kept = true;
  }
  return d;
}

inline double population_variance(std::span<const double> xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size());
}

/// Keeps a caption sample iff the dispersion of its five F1 scores reaches the threshold.
inline PrefilterDecision prefilter_caption(std::string sample_id, std::span<const double> f1_scores,
                                           double threshold = 0.2,
                                           DispersionStat stat = DispersionStat::Variance) {
  if (f1_scores.size() != kPrefilterGroupSize) {
    throw Error(ErrorCode::WrongGroupSize, sample_id + ": expected 5 F1 scores, got " +
                                               std::to_string(f1_scores.size()));
  }
  for (double f : f1_scores) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw Error(ErrorCode::OutOfRangeScore, sample_id + ": F1 " + std::to_string(f) + " outside [0,1]");
    }
  }
  PrefilterDecision d;
  d.sample_id = std::move(sample_id);
  d.f1_list = std::vector<double>(f1_scores.begin(), f1_scores.end());
  d.variance = population_variance(f1_scores);
  d.statistic = stat == DispersionStat::Variance ? *d.variance : std::sqrt(*d.variance);
  d.kept = *d.statistic >= threshold;
  d.reason = d.kept ? PrefilterReason::Kept : PrefilterReason::LowVariance;
  return d;
}

}  // namespace versavid
