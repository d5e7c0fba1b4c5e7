#pragma once
// Command implementations behind the `versavid` executable. Each command reads
// JSON/JSONL inputs, writes deterministic outputs into a run directory, and
// records its resolved configuration in manifest.json.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "versavid/curation.hpp"
#include "versavid/error.hpp"
#include "versavid/grpo.hpp"
#include "versavid/json_io.hpp"
#include "versavid/judge.hpp"
#include "versavid/remote_judge.hpp"
#include "versavid/reward.hpp"
#include "versavid/toy_lab.hpp"

namespace versavid::cli {

namespace fs = std::filesystem;

struct CommandResult {
  int exit_code = 0;
  json summary;
};

// ─── Run-directory plumbing ───────────────────────────────────────────────

struct JsonlLine {
  std::size_t line_no = 0;
  json value;
  std::optional<std::string> parse_error;
};

inline std::vector<JsonlLine> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::SchemaError, "cannot open " + path.string());
  std::vector<JsonlLine> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::is_blank(line)) continue;
    JsonlLine l;
    l.line_no = n;
    l.value = json::parse(line, nullptr, false);
    if (l.value.is_discarded()) l.parse_error = "line " + std::to_string(n) + " is not valid JSON";
    out.push_back(std::move(l));
  }
  return out;
}

/// Collects line-level outputs and errors for one command invocation.
class RunWriter {
 public:
  RunWriter(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    fs::create_directories(dir_);
  }

  std::ofstream open(const std::string& name) {
    std::ofstream f(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::SchemaError, "cannot write " + (dir_ / name).string());
    return f;
  }

  void error(std::size_t line_no, const std::string& sample_id, ErrorCode code, const std::string& msg) {
    errors_.push_back({{"line", line_no}, {"sample_id", sample_id}, {"error", to_string(code)}, {"message", msg}});
  }

  std::size_t error_count() const { return errors_.size(); }

  /// Writes errors.jsonl and manifest.json; returns the exit code.
  int finish(json config, json summary, bool aborted = false) {
    {
      auto f = open("errors.jsonl");
      for (const auto& e : errors_) f << e.dump() << '\n';
    }
    summary["errors"] = errors_.size();
    summary["aborted"] = aborted;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    json manifest{{"command", command_}, {"config", std::move(config)}, {"summary", summary},
                  {"created_at", ts.str()}};
    auto f = open("manifest.json");
    f << manifest.dump(2) << '\n';
    summary_ = std::move(summary);
    return (errors_.empty() && !aborted) ? 0 : 1;
  }

  const json& summary() const { return summary_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<json> errors_;
  json summary_;
};

inline std::string sample_id_of(const json& j) {
  if (j.is_object() && j.contains("sample_id") && j["sample_id"].is_string()) return j["sample_id"];
  if (j.is_object() && j.contains("video_id") && j["video_id"].is_string()) return j["video_id"];
  return "";
}

// ─── curate-dark ──────────────────────────────────────────────────────────

struct CurateDarkOptions {
  fs::path input;
  fs::path out;
  std::uint64_t seed = 0;
  bool review_export = false;
};

inline std::string review_line(const EditDecisionList& edl) {
  std::ostringstream s;
  s << "== " << edl.output_id << "  (" << std::fixed << std::setprecision(3)
    << edl.total_duration().seconds() << " s)\n";
  for (const auto& seg : edl.segments) {
    s << "   " << std::setw(10) << (seg.is_black() ? std::string("BLACK") : *seg.source) << "  "
      << seg.src_start.seconds() << " -> " << seg.src_end.seconds() << "\n";
  }
  if (edl.qa) s << "   Q: " << edl.qa->question << "\n   A: " << edl.qa->answer << "\n";
  s << "   reviewer verdict: [ ] accept  [ ] reject\n\n";
  return s.str();
}

inline CommandResult curate_dark(const CurateDarkOptions& opt) {
  RunWriter run(opt.out, "curate-dark");
  auto edl_out = run.open("edl.jsonl");
  auto qa_out = run.open("qa.jsonl");
  auto skipped_out = run.open("skipped.jsonl");
  std::ofstream review;
  if (opt.review_export) review = run.open("review.txt");

  std::size_t built = 0, skipped = 0, index = 0;
  for (const auto& line : read_jsonl(opt.input)) {
    const auto id = sample_id_of(line.value);
    if (line.parse_error) {
      run.error(line.line_no, id, ErrorCode::SchemaError, *line.parse_error);
      continue;
    }
    try {
      const auto timeline = timeline_from_json(line.value);
      const auto edl = build_dark_event_sample_seeded(timeline, step_seed(opt.seed, index++));
      edl_out << to_json(edl).dump() << '\n';
      QaRecord qa{edl.output_id, TaskKind::DarkEventInfer, edl.qa->question, edl.qa->answer, timeline.video_id};
      qa_out << to_json(qa).dump() << '\n';
      if (opt.review_export) review << review_line(edl);
      ++built;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InsufficientContext) {
        skipped_out << json{{"line", line.line_no}, {"video_id", id}, {"reason", to_string(e.code())}}.dump() << '\n';
        ++skipped;
      } else {
        run.error(line.line_no, id, e.code(), e.what());
      }
    }
  }
  json summary{{"built", built}, {"skipped", skipped}};
  const int code = run.finish({{"input", opt.input.string()}, {"seed", opt.seed},
                               {"review_export", opt.review_export}},
                              summary);
  return {code, run.summary()};
}

// ─── curate-mix ───────────────────────────────────────────────────────────

struct CurateMixOptions {
  fs::path clips;
  fs::path qa;
  fs::path out;
  std::uint64_t seed = 0;
  bool review_export = false;
};

inline CommandResult curate_mix(const CurateMixOptions& opt) {
  RunWriter run(opt.out, "curate-mix");
  auto edl_out = run.open("edl.jsonl");
  auto qa_out = run.open("qa.jsonl");
  auto skipped_out = run.open("skipped.jsonl");
  std::ofstream review;
  if (opt.review_export) review = run.open("review.txt");

  std::vector<VideoTimeline> clips;
  std::map<std::string, std::size_t> by_id;
  std::size_t skipped = 0;
  for (const auto& line : read_jsonl(opt.clips)) {
    const auto id = sample_id_of(line.value);
    if (line.parse_error) {
      run.error(line.line_no, id, ErrorCode::SchemaError, "clips: " + *line.parse_error);
      continue;
    }
    try {
      auto clip = timeline_from_json(line.value);
      if (clip.duration < kMixSegmentMin) {
        skipped_out << json{{"clip", clip.video_id}, {"reason", to_string(ErrorCode::ClipTooShort)}}.dump() << '\n';
        ++skipped;
        continue;
      }
      by_id[clip.video_id] = clips.size();
      clips.push_back(std::move(clip));
    } catch (const Error& e) {
      run.error(line.line_no, id, e.code(), std::string("clips: ") + e.what());
    }
  }

  std::size_t built = 0, index = 0;
  for (const auto& line : read_jsonl(opt.qa)) {
    const auto id = sample_id_of(line.value);
    if (line.parse_error) {
      run.error(line.line_no, id, ErrorCode::SchemaError, "qa: " + *line.parse_error);
      continue;
    }
    try {
      const auto qa = qa_record_from_json(line.value);
      auto it = by_id.find(qa.source_ref);
      if (it == by_id.end()) {
        skipped_out << json{{"sample_id", qa.sample_id}, {"reason", "source clip unavailable"}}.dump() << '\n';
        ++skipped;
        continue;
      }
      std::vector<std::size_t> partners;
      for (std::size_t k = 0; k < clips.size(); ++k) {
        if (k != it->second) partners.push_back(k);
      }
      if (partners.empty()) {
        skipped_out << json{{"sample_id", qa.sample_id}, {"reason", "no partner clip"}}.dump() << '\n';
        ++skipped;
        continue;
      }
      const auto seed = step_seed(opt.seed, index++);
      std::mt19937_64 rng(seed);
      const auto& partner = clips[partners[uniform_index(rng, partners.size())]];
      const auto edl = build_mixvid_sample(clips[it->second], partner, seed, qa);
      edl_out << to_json(edl).dump() << '\n';
      auto out_qa = qa;
      out_qa.sample_id = edl.output_id;
      qa_out << to_json(out_qa).dump() << '\n';
      if (opt.review_export) review << review_line(edl);
      ++built;
    } catch (const Error& e) {
      run.error(line.line_no, id, e.code(), std::string("qa: ") + e.what());
    }
  }
  json summary{{"built", built}, {"skipped", skipped}};
  const int code = run.finish({{"clips", opt.clips.string()}, {"qa", opt.qa.string()}, {"seed", opt.seed},
                               {"review_export", opt.review_export}},
                              summary);
  return {code, run.summary()};
}

// ─── prefilter ────────────────────────────────────────────────────────────

struct PrefilterOptions {
  fs::path responses;
  fs::path out;
  std::string task = "qa";  // "qa" or "caption"
  double threshold = 0.2;
  DispersionStat stat = DispersionStat::Variance;
};

inline CommandResult prefilter(const PrefilterOptions& opt) {
  if (opt.task != "qa" && opt.task != "caption") {
    throw Error(ErrorCode::InvalidConfig, "task must be qa or caption");
  }
  RunWriter run(opt.out, "prefilter");
  auto out = run.open("decisions.jsonl");
  std::map<std::string, std::size_t> counts{
      {"kept", 0}, {"dropped_all_correct", 0}, {"dropped_all_incorrect", 0}, {"dropped_low_variance", 0}};
  for (const auto& line : read_jsonl(opt.responses)) {
    const auto id = sample_id_of(line.value);
    if (line.parse_error) {
      run.error(line.line_no, id, ErrorCode::SchemaError, *line.parse_error);
      continue;
    }
    try {
      const auto decision = detail::schema_guard("prefilter record", [&] {
        if (opt.task == "qa") {
          // vector<bool> is not contiguous, so copy into a plain array.
          const auto v = line.value.at("verdicts").get<std::vector<bool>>();
          std::unique_ptr<bool[]> flags(new bool[v.size()]);
          std::copy(v.begin(), v.end(), flags.get());
          return prefilter_qa(id, std::span<const bool>(flags.get(), v.size()));
        }
        const auto f1 = line.value.at("f1").get<std::vector<double>>();
        return prefilter_caption(id, f1, opt.threshold, opt.stat);
      });
      out << to_json(decision).dump() << '\n';
      switch (decision.reason) {
        case PrefilterReason::Kept: ++counts["kept"]; break;
        case PrefilterReason::AllCorrect: ++counts["dropped_all_correct"]; break;
        case PrefilterReason::AllIncorrect: ++counts["dropped_all_incorrect"]; break;
        case PrefilterReason::LowVariance: ++counts["dropped_low_variance"]; break;
      }
    } catch (const Error& e) {
      run.error(line.line_no, id, e.code(), e.what());
    }
  }
  json summary(counts);
  {
    auto f = run.open("summary.json");
    f << summary.dump(2) << '\n';
  }
  const int code = run.finish({{"responses", opt.responses.string()}, {"task", opt.task},
                               {"threshold", opt.threshold},
                               {"stat", opt.stat == DispersionStat::Variance ? "variance" : "std"}},
                              summary);
  return {code, run.summary()};
}

// ─── score ────────────────────────────────────────────────────────────────

struct ScoreOptions {
  fs::path responses;
  fs::path truth;
  fs::path out;
  std::optional<fs::path> reward_config;
  std::string judge = "mock";  // "mock" or "remote"
  std::optional<fs::path> judge_config;
  // Injected backend (tests); overrides `judge` when set.
  std::shared_ptr<JudgeBackend> backend;
};

struct GroundTruth {
  TaskKind task_kind = TaskKind::MCQA;
  std::optional<std::string> question;
  std::string answer;
  std::vector<std::string> events;
};

inline GroundTruth ground_truth_from_json(const json& j) {
  return detail::schema_guard("ground truth", [&] {
    GroundTruth g;
    g.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    if (j.contains("question") && j["question"].is_string()) g.question = j["question"].get<std::string>();
    g.answer = detail::value_or(j, "answer", std::string());
    g.events = detail::value_or(j, "events", std::vector<std::string>{});
    return g;
  });
}

/// Pending score for one response; judge-scored tasks fill `request`.
struct ScoreItem {
  std::size_t line_no = 0;
  std::string sample_id;
  ParsedResponse parsed;
  TaskKind kind = TaskKind::MCQA;
  std::optional<RewardBreakdown> done;
  std::optional<JudgeRequest> request;
  bool judge_fallback = false;
};

inline ScoreItem prepare_score(std::size_t line_no, std::string sample_id, const std::string& raw,
                               const GroundTruth& gt, const RewardConfig& rc, const McqaExtractor& extract) {
  ScoreItem item;
  item.line_no = line_no;
  item.sample_id = std::move(sample_id);
  item.parsed = parse_format(raw);
  item.kind = gt.task_kind;
  const auto& p = item.parsed;
  if (!p.format_valid) {
    item.done = score_total(p, gt.task_kind, 0.0);
    return item;
  }
  const std::string answer = text::trim(*p.answer);
  switch (gt.task_kind) {
    case TaskKind::MCQA: {
      const auto truth = text::trim(gt.answer);
      if (truth.size() != 1 || std::toupper(static_cast<unsigned char>(truth[0])) < 'A' ||
          std::toupper(static_cast<unsigned char>(truth[0])) > 'E') {
        throw Error(ErrorCode::SchemaError, "MCQA ground truth must be a letter A-E");
      }
      const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(truth[0])));
      item.done = score_total(p, TaskKind::MCQA, score_mcqa(extract(answer), letter));
      break;
    }
    case TaskKind::Caption: {
      const EventSet truth(gt.events);
      const auto predicted = EventSet::from_caption(answer);
      const auto dq = score_autodq(predicted, truth, make_local_matcher(rc.event_match_threshold), rc.alpha);
      const int kw = score_keywords(answer, rc.keyword_sets, rc.gamma, rc.count_keyword_occurrences);
      item.done = score_total(p, TaskKind::Caption, score_caption(dq.recall, dq.precision, kw, rc),
                              CaptionComponents{dq.recall, dq.precision, kw});
      break;
    }
    case TaskKind::DarkEventInfer:
    case TaskKind::MixVidQA: {
      if (gt.answer.empty()) throw Error(ErrorCode::SchemaError, "ground truth answer is empty");
      if (gt.task_kind == TaskKind::MixVidQA && gt.question.value_or("").empty()) {
        throw Error(ErrorCode::SchemaError, "MixVidQA ground truth needs a question");
      }
      if (answer.empty()) {
        // Empty answers are scored as the lowest tier without a judge call.
        const auto v = lowest_tier_verdict(gt.task_kind, "");
        item.done = score_total(p, gt.task_kind, v.reward(rc.tier_values));
        item.judge_fallback = true;
      } else {
        item.request = make_judge_request(gt.task_kind, gt.question, gt.answer, answer);
      }
      break;
    }
  }
  return item;
}

inline CommandResult score(const ScoreOptions& opt) {
  RunWriter run(opt.out, "score");
  const auto rc = opt.reward_config ? reward_config_from_json(read_json_file(opt.reward_config->string()))
                                    : RewardConfig{};
  rc.validate();
  const auto jc = opt.judge_config ? judge_config_from_json(read_json_file(opt.judge_config->string()))
                                   : JudgeBackendConfig{};
  if (opt.judge != "mock" && opt.judge != "remote") {
    throw Error(ErrorCode::InvalidConfig, "judge must be mock or remote");
  }
  auto audit_file = run.open("judge_audit.jsonl");
  AuditLog audit(audit_file);
  std::shared_ptr<JudgeBackend> backend = opt.backend;
  if (!backend) {
    if (opt.judge == "remote") {
      backend = std::make_shared<RemoteJudgeBackend>(jc, &audit);
    } else {
      backend = std::make_shared<MockJudgeBackend>();
    }
  }
  JudgeGateway gateway(backend, jc, &audit);
  const McqaExtractor extract(rc.mcqa_pattern);

  std::map<std::string, GroundTruth> truth;
  for (const auto& line : read_jsonl(opt.truth)) {
    const auto id = sample_id_of(line.value);
    if (line.parse_error) {
      run.error(line.line_no, id, ErrorCode::SchemaError, "truth: " + *line.parse_error);
      continue;
    }
    try {
      truth[id] = ground_truth_from_json(line.value);
    } catch (const Error& e) {
      run.error(line.line_no, id, e.code(), std::string("truth: ") + e.what());
    }
  }

  std::vector<ScoreItem> items;
  for (const auto& line : read_jsonl(opt.responses)) {
    const auto id = sample_id_of(line.value);
    if (line.parse_error) {
      run.error(line.line_no, id, ErrorCode::SchemaError, *line.parse_error);
      continue;
    }
    try {
      auto it = truth.find(id);
      if (it == truth.end()) throw Error(ErrorCode::MissingGroundTruth, "no ground truth for '" + id + "'");
      const auto raw = detail::schema_guard("response", [&] { return line.value.at("response").get<std::string>(); });
      items.push_back(prepare_score(line.line_no, id, raw, it->second, rc, extract));
    } catch (const Error& e) {
      run.error(line.line_no, id, e.code(), e.what());
    }
  }

  auto out = run.open("breakdowns.jsonl");
  std::size_t written = 0;
  bool aborted = false;
  std::string abort_reason;
  const auto chunk = static_cast<std::size_t>(jc.concurrency_limit);
  for (std::size_t begin = 0; begin < items.size() && !aborted; begin += chunk) {
    const auto end = std::min(items.size(), begin + chunk);
    std::vector<JudgeRequest> requests;
    std::vector<std::size_t> owners;
    for (std::size_t i = begin; i < end; ++i) {
      if (items[i].request) {
        requests.push_back(*items[i].request);
        owners.push_back(i);
      }
    }
    try {
      const auto verdicts = gateway.judge_all(requests);
      for (std::size_t k = 0; k < verdicts.size(); ++k) {
        auto& item = items[owners[k]];
        item.done = score_total(item.parsed, item.kind, verdicts[k].reward(rc.tier_values));
        item.judge_fallback = verdicts[k].fallback;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BackendUnavailable) throw;
      aborted = true;
      abort_reason = e.what();
      break;
    }
    for (std::size_t i = begin; i < end; ++i) {
      auto rec = to_json(*items[i].done);
      rec["sample_id"] = items[i].sample_id;
      rec["line"] = items[i].line_no;
      rec["judge_fallback"] = items[i].judge_fallback;
      out << rec.dump() << '\n';
      ++written;
    }
  }
  json summary{{"responses", items.size()}, {"written", written}, {"judge_calls", gateway.backend_calls()}};
  if (aborted) summary["abort_reason"] = abort_reason;
  json config{{"responses", opt.responses.string()}, {"truth", opt.truth.string()},
              {"reward", to_json(rc)}, {"judge", opt.backend ? "injected" : opt.judge},
              {"judge_backend", to_json(jc)}};
  const int code = run.finish(config, summary, aborted);
  return {code, run.summary()};
}

// ─── train-toy ────────────────────────────────────────────────────────────

struct TrainToyOptions {
  std::optional<fs::path> env;
  std::optional<fs::path> grpo_config;
  fs::path out;
  std::uint64_t seed = 0;
  std::vector<double> lambda_sweep;  // empty: single run at the config's kl_lambda
  std::optional<std::size_t> steps;
};

inline std::string lambda_tag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", lambda);
  return buf;
}

inline void write_trace(RunWriter& run, const std::string& suffix, const TrainingTrace& trace) {
  auto f = run.open("trace" + suffix + ".jsonl");
  for (const auto& r : trace.records) f << to_json(r).dump() << '\n';
  auto csv = run.open("summary" + suffix + ".csv");
  csv << "step,mean_reward\n";
  for (const auto& r : trace.records) csv << r.step << ',' << json(r.mean_total_reward).dump() << '\n';
}

inline CommandResult train_toy(const TrainToyOptions& opt) {
  const json env_spec = opt.env ? read_json_file(opt.env->string()) : json{{"kind", "format_bandit"}};
  detail::require_object(env_spec, "env spec");
  const auto kind = detail::value_or(env_spec, "kind", std::string("format_bandit"));
  auto grpo = opt.grpo_config ? grpo_config_from_json(read_json_file(opt.grpo_config->string())) : GrpoConfig{};
  grpo.validate();
  TrainOptions train;
  train.seed = opt.seed;
  train.steps = opt.steps.value_or(detail::value_or<std::size_t>(env_spec, "steps", 2000));
  train.window = detail::value_or<std::size_t>(env_spec, "window", train.window);

  std::optional<FormatBanditEnv> bandit;
  std::optional<CaptionToyEnv> caption;
  double alpha = 0.5;
  json resolved_env;
  if (kind == "format_bandit") {
    bandit = format_bandit_from_json(env_spec);
    resolved_env = to_json(*bandit);
  } else if (kind == "caption_toy") {
    caption = caption_toy_from_json(env_spec);
    alpha = detail::value_or(env_spec, "alpha", alpha);
    resolved_env = to_json(*caption);
    resolved_env["alpha"] = alpha;
  } else {
    throw Error(ErrorCode::SchemaError, "env kind must be format_bandit or caption_toy");
  }
  resolved_env["steps"] = train.steps;
  resolved_env["window"] = train.window;

  RunWriter run(opt.out, "train-toy");
  std::vector<double> lambdas = opt.lambda_sweep;
  const bool sweep = !lambdas.empty();
  if (!sweep) lambdas.push_back(grpo.kl_lambda);

  json runs = json::array();
  for (double lambda : lambdas) {
    auto cfg = grpo;
    cfg.kl_lambda = lambda;
    cfg.validate();
    const std::string suffix = sweep ? "_lambda_" + lambda_tag(lambda) : "";
    json entry{{"lambda", lambda}, {"trace", "trace" + suffix + ".jsonl"}};
    if (bandit) {
      const auto trace = run_format_bandit(cfg, *bandit, train);
      write_trace(run, suffix, trace);
      entry["summary"] = to_json(trace.summary);
    } else {
      const auto optimum = brute_force_caption_optimum(*caption, alpha);
      auto t = train;
      t.target_reward = optimum.reward;
      const auto result = run_caption_toy(cfg, *caption, alpha, t);
      write_trace(run, suffix, result.trace);
      entry["summary"] = to_json(result.trace.summary);
      entry["modal_emission"] = {{"tokens", result.modal_tokens},
                                 {"event_count", result.modal_event_count},
                                 {"reward", result.modal_reward},
                                 {"share", result.modal_share}};
      entry["brute_force_optimum"] = {
          {"tokens", optimum.tokens}, {"event_count", optimum.event_count}, {"reward", optimum.reward}};
    }
    runs.push_back(entry);
  }
  {
    auto f = run.open("summary.json");
    f << json{{"env", kind}, {"runs", runs}}.dump(2) << '\n';
  }
  json config{{"env", resolved_env}, {"grpo", to_json(grpo)}, {"seed", opt.seed}, {"lambda_sweep", opt.lambda_sweep}};
  const int code = run.finish(config, {{"runs", runs.size()}});
  return {code, json{{"runs", runs}}};
}

// ─── report ───────────────────────────────────────────────────────────────

struct ReportOptions {
  fs::path run_dir;
};

struct LoadedTrace {
  std::string name;
  std::optional<double> lambda;
  std::vector<TraceRecord> records;
  TraceSummary summary;
};

inline TraceSummary summarize_records(const std::vector<TraceRecord>& records, std::size_t window,
                                      double target) {
  TraceSummary s;
  s.target_reward = target;
  const std::size_t w = std::max<std::size_t>(1, std::min(window, records.size()));
  double running = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    running += records[i].mean_total_reward;
    if (i >= w) running -= records[i - w].mean_total_reward;
    if (i + 1 >= w) {
      const double avg = running / static_cast<double>(w);
      s.best_mean_reward = std::max(s.best_mean_reward, avg);
      if (!s.steps_to_95pct && avg >= 0.95 * target) s.steps_to_95pct = i + 1;
    }
  }
  if (!records.empty()) s.final_mean_reward = running / static_cast<double>(w);
  return s;
}

inline CommandResult report(const ReportOptions& opt) {
  if (!fs::is_directory(opt.run_dir)) throw Error(ErrorCode::MissingTrace, opt.run_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(opt.run_dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("trace", 0) == 0 && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  if (files.empty()) throw Error(ErrorCode::MissingTrace, "no trace*.jsonl in " + opt.run_dir.string());

  json summary_doc;
  if (fs::exists(opt.run_dir / "summary.json")) summary_doc = read_json_file((opt.run_dir / "summary.json").string());
  std::size_t window = 20;
  if (fs::exists(opt.run_dir / "manifest.json")) {
    const auto m = read_json_file((opt.run_dir / "manifest.json").string());
    if (m.contains("config") && m["config"].contains("env")) {
      window = detail::value_or<std::size_t>(m["config"]["env"], "window", window);
    }
  }

  std::vector<LoadedTrace> traces;
  for (const auto& path : files) {
    LoadedTrace t;
    t.name = path.filename().string();
    for (const auto& line : read_jsonl(path)) {
      if (line.parse_error) throw Error(ErrorCode::SchemaError, t.name + ": " + *line.parse_error);
      t.records.push_back(trace_record_from_json(line.value));
    }
    double target = 1.0;
    if (summary_doc.contains("runs")) {
      for (const auto& r : summary_doc["runs"]) {
        if (r.value("trace", "") == t.name) {
          t.lambda = r.value("lambda", 0.0);
          target = r["summary"].value("target_reward", 1.0);
        }
      }
    }
    t.summary = summarize_records(t.records, window, target);
    traces.push_back(std::move(t));
  }
  std::sort(traces.begin(), traces.end(), [](const LoadedTrace& a, const LoadedTrace& b) {
    if (a.lambda.value_or(0.0) != b.lambda.value_or(0.0)) return a.lambda.value_or(0.0) < b.lambda.value_or(0.0);
    return a.name < b.name;
  });

  std::size_t max_steps = 0;
  for (const auto& t : traces) max_steps = std::max(max_steps, t.records.size());
  {
    std::ofstream csv(opt.run_dir / "report_curves.csv", std::ios::trunc);
    csv << "step";
    for (const auto& t : traces) csv << ',' << t.name.substr(0, t.name.size() - 6);
    csv << '\n';
    for (std::size_t i = 0; i < max_steps; ++i) {
      csv << i;
      for (const auto& t : traces) {
        csv << ',';
        if (i < t.records.size()) csv << json(t.records[i].mean_total_reward).dump();
      }
      csv << '\n';
    }
  }

  std::ostringstream txt;
  txt << "trace                          lambda  steps_to_95pct  final_mean  best_mean  degenerate_steps\n";
  json rows = json::array();
  for (const auto& t : traces) {
    std::size_t degenerate = 0;
    for (const auto& r : t.records) degenerate += r.degenerate_groups;
    txt << std::left << std::setw(30) << t.name << ' ' << std::setw(7)
        << (t.lambda ? lambda_tag(*t.lambda) : std::string("-")) << ' ' << std::setw(15)
        << (t.summary.steps_to_95pct ? std::to_string(*t.summary.steps_to_95pct) : std::string("never")) << ' '
        << std::fixed << std::setprecision(4) << std::setw(11) << t.summary.final_mean_reward << ' '
        << std::setw(10) << t.summary.best_mean_reward << ' ' << degenerate << '\n';
    rows.push_back({{"trace", t.name}, {"lambda", t.lambda ? json(*t.lambda) : json(nullptr)},
                    {"summary", to_json(t.summary)}, {"degenerate_steps", degenerate}});
  }

  // Reward-component decomposition from a score run sharing this directory.
  if (fs::exists(opt.run_dir / "breakdowns.jsonl")) {
    struct Acc {
      std::size_t n = 0;
      double format = 0, task = 0, recall = 0, precision = 0, keywords = 0, total = 0;
    };
    std::map<std::string, Acc> by_task;
    for (const auto& line : read_jsonl(opt.run_dir / "breakdowns.jsonl")) {
      if (line.parse_error) continue;
      auto& a = by_task[line.value.value("task_kind", "?")];
      ++a.n;
      a.format += line.value.value("format", 0.0);
      a.task += line.value.value("task_reward", 0.0);
      auto num = [&](const char* k) { return line.value.contains(k) && line.value[k].is_number() ? line.value[k].get<double>() : 0.0; };
      a.recall += num("recall");
      a.precision += num("precision");
      a.keywords += num("keywords");
      a.total += line.value.value("total", 0.0);
    }
    txt << "\ntask_kind        n  format  task_reward  recall  precision  keywords  total\n";
    for (const auto& [task, a] : by_task) {
      const double n = static_cast<double>(a.n);
      txt << std::left << std::setw(15) << task << std::right << std::setw(3) << a.n << std::fixed
          << std::setprecision(3) << std::setw(8) << a.format / n << std::setw(13) << a.task / n << std::setw(8)
          << a.recall / n << std::setw(11) << a.precision / n << std::setw(10) << a.keywords / n << std::setw(7)
          << a.total / n << '\n';
    }
  }
  {
    std::ofstream f(opt.run_dir / "report.txt", std::ios::trunc);
    f << txt.str();
  }
  return {0, json{{"traces", rows}, {"report", (opt.run_dir / "report.txt").string()},
                  {"curves", (opt.run_dir / "report_curves.csv").string()}}};
}

}  // namespace versavid::cli
