#pragma once
// JSON (de)serialization for configs and run records.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "versavid/curation.hpp"
#include "versavid/error.hpp"
#include "versavid/grpo.hpp"
#include "versavid/judge.hpp"
#include "versavid/render.hpp"
#include "versavid/reward.hpp"
#include "versavid/toy_lab.hpp"

namespace versavid {

using nlohmann::json;

namespace detail {

template <class T>
T value_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

inline void require_object(const json& j, std::string_view what) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, std::string(what) + " must be a JSON object");
}

template <class F>
auto schema_guard(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string(what) + ": " + e.what());
  }
}

}  // namespace detail

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::SchemaError, "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::SchemaError, path + " is not valid JSON");
  return j;
}

// ─── Reward ───────────────────────────────────────────────────────────────

inline RewardConfig reward_config_from_json(const json& j) {
  detail::require_object(j, "reward config");
  return detail::schema_guard("reward config", [&] {
    RewardConfig c;
    c.alpha = detail::value_or(j, "alpha", c.alpha);
    c.beta = detail::value_or(j, "beta", c.beta);
    c.gamma = detail::value_or(j, "gamma", c.gamma);
    if (j.contains("tier_values")) {
      const auto& t = j.at("tier_values");
      c.tier_values.fully_correct = detail::value_or(t, "fully_correct", c.tier_values.fully_correct);
      c.tier_values.partial = detail::value_or(t, "partial", c.tier_values.partial);
      c.tier_values.error = detail::value_or(t, "error", c.tier_values.error);
    }
    if (j.contains("temporal_keywords") || j.contains("speculation_keywords")) {
      const auto d = KeywordSets::defaults();
      auto temporal = detail::value_or(j, "temporal_keywords",
                                       std::vector<std::string>(d.temporal().begin(), d.temporal().end()));
      auto speculation = detail::value_or(
          j, "speculation_keywords", std::vector<std::string>(d.speculation().begin(), d.speculation().end()));
      c.keyword_sets = KeywordSets(temporal, speculation);
    }
    c.mcqa_pattern = detail::value_or(j, "mcqa_pattern", c.mcqa_pattern);
    c.count_keyword_occurrences =
        detail::value_or(j, "count_keyword_occurrences", c.count_keyword_occurrences);
    c.event_match_threshold = detail::value_or(j, "event_match_threshold", c.event_match_threshold);
    c.validate();
    return c;
  });
}

inline json to_json(const RewardConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"tier_values",
           {{"fully_correct", c.tier_values.fully_correct},
            {"partial", c.tier_values.partial},
            {"error", c.tier_values.error}}},
          {"temporal_keywords", c.keyword_sets.temporal()},
          {"speculation_keywords", c.keyword_sets.speculation()},
          {"mcqa_pattern", c.mcqa_pattern},
          {"count_keyword_occurrences", c.count_keyword_occurrences},
          {"event_match_threshold", c.event_match_threshold}};
}

/// Fixed field names; caption-only components are null for other tasks.
inline json to_json(const RewardBreakdown& b) {
  json j{{"format", b.format},
         {"task_kind", to_string(b.task_kind)},
         {"task_reward", b.task_reward},
         {"recall", nullptr},
         {"precision", nullptr},
         {"keywords", nullptr},
         {"total", b.total}};
  if (b.recall) j["recall"] = *b.recall;
  if (b.precision) j["precision"] = *b.precision;
  if (b.keywords) j["keywords"] = *b.keywords;
  return j;
}

// ─── Judge ────────────────────────────────────────────────────────────────

inline JudgeBackendConfig judge_config_from_json(const json& j) {
  detail::require_object(j, "judge config");
  return detail::schema_guard("judge config", [&] {
    JudgeBackendConfig c;
    c.endpoint_url = detail::value_or(j, "endpoint_url", c.endpoint_url);
    c.model_name = detail::value_or(j, "model_name", c.model_name);
    c.timeout_s = detail::value_or(j, "timeout_s", c.timeout_s);
    c.max_retries = detail::value_or(j, "max_retries", c.max_retries);
    c.temperature = detail::value_or(j, "temperature", c.temperature);
    c.concurrency_limit = detail::value_or(j, "concurrency_limit", c.concurrency_limit);
    c.validate();
    return c;
  });
}

inline json to_json(const JudgeBackendConfig& c) {
  return {{"endpoint_url", c.endpoint_url}, {"model_name", c.model_name},
          {"timeout_s", c.timeout_s},       {"max_retries", c.max_retries},
          {"temperature", c.temperature},   {"concurrency_limit", c.concurrency_limit}};
}

// ─── GRPO and toy lab ─────────────────────────────────────────────────────

inline GrpoConfig grpo_config_from_json(const json& j) {
  detail::require_object(j, "grpo config");
  return detail::schema_guard("grpo config", [&] {
    GrpoConfig c;
    c.group_size = detail::value_or(j, "group_size", c.group_size);
    c.clip_epsilon = detail::value_or(j, "clip_epsilon", c.clip_epsilon);
    c.kl_lambda = detail::value_or(j, "kl_lambda", c.kl_lambda);
    c.learning_rate = detail::value_or(j, "learning_rate", c.learning_rate);
    c.sample_temperature = detail::value_or(j, "sample_temperature", c.sample_temperature);
    c.std_floor = detail::value_or(j, "std_floor", c.std_floor);
    c.updates_per_group = detail::value_or(j, "updates_per_group", c.updates_per_group);
    c.validate();
    return c;
  });
}

inline json to_json(const GrpoConfig& c) {
  return {{"group_size", c.group_size},
          {"clip_epsilon", c.clip_epsilon},
          {"kl_lambda", c.kl_lambda},
          {"learning_rate", c.learning_rate},
          {"sample_temperature", c.sample_temperature},
          {"std_floor", c.std_floor},
          {"updates_per_group", c.updates_per_group}};
}

inline json to_json(const TraceRecord& r) {
  return {{"step", r.step},
          {"mean_reward", r.mean_total_reward},
          {"objective", r.objective},
          {"surrogate", r.surrogate},
          {"kl_term", r.kl_term},
          {"clipped_fraction", r.clipped_fraction},
          {"degenerate_groups", r.degenerate_groups},
          {"invalid_format", r.invalid_format},
          {"invalid_format_reward", r.invalid_format_reward}};
}

inline TraceRecord trace_record_from_json(const json& j) {
  return detail::schema_guard("trace record", [&] {
    TraceRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.mean_total_reward = j.at("mean_reward").get<double>();
    r.objective = detail::value_or(j, "objective", 0.0);
    r.surrogate = detail::value_or(j, "surrogate", 0.0);
    r.kl_term = detail::value_or(j, "kl_term", 0.0);
    r.clipped_fraction = detail::value_or(j, "clipped_fraction", 0.0);
    r.degenerate_groups = detail::value_or<std::size_t>(j, "degenerate_groups", 0);
    return r;
  });
}

inline json to_json(const TraceSummary& s) {
  json j{{"best_mean_reward", s.best_mean_reward},
         {"final_mean_reward", s.final_mean_reward},
         {"target_reward", s.target_reward},
         {"steps_to_95pct", nullptr}};
  if (s.steps_to_95pct) j["steps_to_95pct"] = *s.steps_to_95pct;
  return j;
}

inline Conditioning conditioning_from_string(const std::string& s) {
  if (s == "previous_token") return Conditioning::PreviousToken;
  if (s == "position") return Conditioning::Position;
  throw Error(ErrorCode::SchemaError, "conditioning must be previous_token or position");
}

inline FormatBanditEnv format_bandit_from_json(const json& j) {
  return detail::schema_guard("format bandit env", [&] {
    auto env = FormatBanditEnv::defaults();
    env.alphabet = detail::value_or(j, "alphabet", env.alphabet);
    env.stop_token = detail::value_or(j, "stop_token", env.stop_token);
    env.max_len = detail::value_or(j, "max_len", env.max_len);
    const auto truth = detail::value_or(j, "truth", std::string(1, env.truth));
    if (truth.size() != 1) throw Error(ErrorCode::SchemaError, "truth must be a single letter");
    env.truth = truth[0];
    env.conditioning = conditioning_from_string(detail::value_or(j, "conditioning", std::string("previous_token")));
    env.validate();
    return env;
  });
}

inline json to_json(const FormatBanditEnv& env) {
  return {{"kind", "format_bandit"},
          {"alphabet", env.alphabet},
          {"stop_token", env.stop_token},
          {"max_len", env.max_len},
          {"truth", std::string(1, env.truth)},
          {"conditioning", env.conditioning == Conditioning::PreviousToken ? "previous_token" : "position"}};
}

inline CaptionToyEnv caption_toy_from_json(const json& j) {
  return detail::schema_guard("caption toy env", [&] {
    if (!j.contains("tokens")) return CaptionToyEnv::defaults();
    CaptionToyEnv env;
    for (const auto& t : j.at("tokens")) {
      env.tokens.push_back({t.at("name").get<std::string>(), t.at("events").get<std::vector<std::string>>()});
    }
    env.truth_events = EventSet(j.at("truth_events").get<std::vector<std::string>>());
    env.distractor_events = EventSet(detail::value_or(j, "distractor_events", std::vector<std::string>{}));
    env.stop_token = detail::value_or(j, "stop_token", env.stop_token);
    env.validate();
    return env;
  });
}

inline json to_json(const CaptionToyEnv& env) {
  json tokens = json::array();
  for (const auto& t : env.tokens) tokens.push_back({{"name", t.name}, {"events", t.events}});
  return {{"kind", "caption_toy"},
          {"tokens", tokens},
          {"truth_events", env.truth_events.events()},
          {"distractor_events", env.distractor_events.events()},
          {"stop_token", env.stop_token}};
}

// ─── Curation ─────────────────────────────────────────────────────────────

inline VideoTimeline timeline_from_json(const json& j) {
  detail::require_object(j, "timeline");
  return detail::schema_guard("timeline", [&] {
    VideoTimeline t;
    t.video_id = j.at("video_id").get<std::string>();
    t.duration = TimeUs::from_seconds(j.at("duration_s").get<double>());
    for (const auto& e : detail::value_or(j, "events", json::array())) {
      t.events.push_back({e.at("label").get<std::string>(),
                          TimeUs::from_seconds(e.at("start_s").get<double>()),
                          TimeUs::from_seconds(e.at("end_s").get<double>())});
    }
    t.validate();
    return t;
  });
}

inline json to_json(const VideoTimeline& t) {
  json events = json::array();
  for (const auto& e : t.events) {
    events.push_back({{"label", e.label}, {"start_s", e.start.seconds()}, {"end_s", e.end.seconds()}});
  }
  return {{"video_id", t.video_id}, {"duration_s", t.duration.seconds()}, {"events", events}};
}

inline json to_json(const EditDecisionList& edl) {
  json segs = json::array();
  for (const auto& s : edl.segments) {
    segs.push_back({{"source", s.is_black() ? std::string("BLACK") : *s.source},
                    {"src_start_s", s.src_start.seconds()},
                    {"src_end_s", s.src_end.seconds()}});
  }
  json qa = nullptr;
  if (edl.qa) {
    qa = {{"question", edl.qa->question}, {"answer", edl.qa->answer}, {"masked_label", nullptr}};
    if (edl.qa->masked_label) qa["masked_label"] = *edl.qa->masked_label;
  }
  return {{"output_id", edl.output_id},
          {"duration_s", edl.total_duration().seconds()},
          {"segments", segs},
          {"qa", qa}};
}

inline EditDecisionList edl_from_json(const json& j) {
  return detail::schema_guard("edit decision list", [&] {
    EditDecisionList edl;
    edl.output_id = j.at("output_id").get<std::string>();
    for (const auto& s : j.at("segments")) {
      const auto src = s.at("source").get<std::string>();
      Segment seg{src == "BLACK" ? std::nullopt : std::optional<std::string>(src),
                  TimeUs::from_seconds(s.at("src_start_s").get<double>()),
                  TimeUs::from_seconds(s.at("src_end_s").get<double>())};
      edl.segments.push_back(std::move(seg));
    }
    if (j.contains("qa") && !j.at("qa").is_null()) {
      const auto& q = j.at("qa");
      EdlQa qa{q.at("question").get<std::string>(), q.at("answer").get<std::string>(), std::nullopt};
      if (q.contains("masked_label") && !q.at("masked_label").is_null()) {
        qa.masked_label = q.at("masked_label").get<std::string>();
      }
      edl.qa = std::move(qa);
    }
    return edl;
  });
}

inline QaRecord qa_record_from_json(const json& j) {
  detail::require_object(j, "QA record");
  return detail::schema_guard("QA record", [&] {
    QaRecord q;
    q.sample_id = j.at("sample_id").get<std::string>();
    q.task_kind = task_kind_from_string(detail::value_or(j, "task_kind", std::string("MixVidQA")));
    q.question = j.at("question").get<std::string>();
    q.answer = j.at("answer").get<std::string>();
    q.source_ref = j.at("source_ref").get<std::string>();
    return q;
  });
}

inline json to_json(const QaRecord& q) {
  return {{"sample_id", q.sample_id},
          {"task_kind", to_string(q.task_kind)},
          {"question", q.question},
          {"answer", q.answer},
          {"source_ref", q.source_ref}};
}

inline json to_json(const PrefilterDecision& d) {
  json stats = json::object();
  if (d.correct_count) stats["correct_count"] = *d.correct_count;
  if (d.f1_list) stats["f1_list"] = *d.f1_list;
  if (d.variance) stats["variance"] = *d.variance;
  if (d.statistic) stats["statistic"] = *d.statistic;
  return {{"sample_id", d.sample_id}, {"kept", d.kept}, {"reason", to_string(d.reason)}, {"stats", stats}};
}

inline RenderAdapterConfig render_adapter_from_json(const json& j) {
  detail::require_object(j, "render adapter config");
  return detail::schema_guard("render adapter config", [&] {
    RenderAdapterConfig c;
    c.executable = j.at("executable").get<std::string>();
    c.probe_executable = detail::value_or(j, "probe_executable", std::string());
    c.media_dir = detail::value_or(j, "media_dir", std::string("."));
    c.media_ext = detail::value_or(j, "media_ext", c.media_ext);
    c.work_dir = detail::value_or(j, "work_dir", std::string("render"));
    c.fps = detail::value_or(j, "fps", c.fps);
    c.cut_args = j.at("cut_args").get<std::vector<std::string>>();
    c.black_args = j.at("black_args").get<std::vector<std::string>>();
    c.concat_args = j.at("concat_args").get<std::vector<std::string>>();
    c.probe_args = j.at("probe_args").get<std::vector<std::string>>();
    return c;
  });
}

}  // namespace versavid
