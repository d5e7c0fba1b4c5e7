// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "versavid/versavid.hpp"

using namespace versavid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = VERSAVID_FIXTURES_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body, double budget_s) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= budget_s) {
    o.pass = false;
    o.detail += " [over time budget]";
  }
  char timing[64];
  std::snprintf(timing, sizeof timing, "%.2fs/%.0fs", secs, budget_s);
  std::printf("%s  %2d  %-34s %s  %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), timing, o.detail.c_str());
  std::fflush(stdout);
  failures += o.pass ? 0 : 1;
}

std::string fmt(const char* f, double x) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::vector<json> read_lines(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string l;
  while (std::getline(in, l)) {
    if (!l.empty()) out.push_back(json::parse(l));
  }
  return out;
}

// ─── 1 ────────────────────────────────────────────────────────────────────

Outcome advantages() {
  std::mt19937_64 rng(101);
  double worst_mean = 0, worst_std = 0;
  std::size_t degenerate_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t g = 2 + rng() % 15;
    std::vector<double> r(g);
    const bool discrete = i % 2 == 0;
    do {
      for (auto& x : r) x = discrete ? static_cast<double>(rng() % 3) : unit_uniform(rng) * 4.0 - 1.0;
    } while (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; }));
    const auto a = compute_advantages(r);
    double mean = 0;
    for (double x : a.values) mean += x;
    mean /= static_cast<double>(g);
    double ss = 0;
    for (double x : a.values) ss += (x - mean) * (x - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(ss / static_cast<double>(g)) - 1.0));
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t g = 2 + rng() % 15;
    const std::vector<double> r(g, unit_uniform(rng));
    const auto a = compute_advantages(r);
    if (!a.degenerate || std::any_of(a.values.begin(), a.values.end(), [](double x) { return x != 0.0; })) {
      ++degenerate_bad;
    }
  }
  return {worst_mean < 1e-9 && worst_std < 1e-9 && degenerate_bad == 0,
          fmt("max|mean|=%.2e ", worst_mean) + fmt("max|std-1|=%.2e ", worst_std) +
              "degenerate_violations=" + std::to_string(degenerate_bad)};
}

// ─── 2 ────────────────────────────────────────────────────────────────────

Outcome gradients() {
  std::mt19937_64 rng(202);
  const double lambdas[] = {0.0, 0.05, 0.1};
  double worst = 0;
  int with_clip = 0, without_clip = 0, rejected = 0;
  std::size_t max_params = 0;
  int built = 0;
  while (built < 100) {
    const std::size_t v = 3 + rng() % 5;       // 3..7 tokens
    const std::size_t len = 2 + rng() % 3;     // 2..4
    std::vector<std::string> alphabet;
    for (std::size_t k = 0; k + 1 < v; ++k) alphabet.push_back("t" + std::to_string(k));
    alphabet.push_back("<eos>");
    const auto mode = rng() % 2 ? Conditioning::PreviousToken : Conditioning::Position;
    const auto seed = rng();
    const auto old = ToyPolicy::random(alphabet, len, mode, v - 1, seed, 0.7);
    const auto ref = ToyPolicy::random(alphabet, len, mode, v - 1, seed + 1, 0.7);
    auto cur = old;
    // Large moves push some ratios outside the clip window.
    const double move = built % 2 ? 0.6 : 0.02;
    std::normal_distribution<double> noise(0.0, move);
    for (auto& x : cur.params()) x += noise(rng);

    GrpoConfig config;
    config.kl_lambda = lambdas[built % 3];
    GroupRollout group;
    for (const auto& s : sample_responses(old, 8, 1.0, rng())) {
      group.responses.push_back(s.tokens);
      group.old_logprobs.push_back(s.logprob);
      group.rewards.push_back(static_cast<double>(rng() % 4));
    }
    std::vector<double> ref_lp;
    for (const auto& t : group.responses) ref_lp.push_back(sequence_logprob(ref, t));
    group.ref_logprobs = ref_lp;
    const auto adv = compute_advantages(group.rewards);
    // Reject instances on the non-differentiable set: ratios next to a clip
    // edge, or degenerate groups that carry no surrogate signal.
    bool near_kink = adv.degenerate;
    for (std::size_t i = 0; i < group.size(); ++i) {
      const double r = std::exp(sequence_logprob(cur, group.responses[i]) - group.old_logprobs[i]);
      if (std::abs(r - 0.8) < 1e-3 || std::abs(r - 1.2) < 1e-3) near_kink = true;
    }
    if (near_kink) {
      ++rejected;
      continue;
    }
    ++built;
    max_params = std::max(max_params, cur.param_count());
    const auto rep = grpo_objective(group, cur, config);
    (rep.clipped_fraction > 0 ? with_clip : without_clip)++;
    worst = std::max(worst, finite_difference_check(group, cur, config, 1e-5));
  }
  return {worst < 1e-5 && with_clip > 0 && without_clip > 0 && max_params <= 200,
          fmt("max_rel_err=%.2e ", worst) + "clip_active=" + std::to_string(with_clip) +
              " clip_inactive=" + std::to_string(without_clip) + " max_params=" + std::to_string(max_params) +
              " rejected=" + std::to_string(rejected)};
}

// ─── 3 ────────────────────────────────────────────────────────────────────

Outcome kl() {
  std::mt19937_64 rng(303);
  double min_val = 1e300, worst_eq = 0;
  for (int i = 0; i < 10000; ++i) {
    const double a = -30.0 * unit_uniform(rng);
    const double b = -30.0 * unit_uniform(rng);
    min_val = std::min(min_val, kl_estimate(a, b));
    worst_eq = std::max(worst_eq, std::abs(kl_estimate(a, a)));
  }
  const double r2 = kl_estimate(0.0, std::log(2.0));
  const double r05 = kl_estimate(0.0, std::log(0.5));
  const bool ok = min_val >= 0.0 && worst_eq <= 1e-12 && std::abs(r2 - 0.3069) < 1e-4 &&
                  std::abs(r05 - 0.1931) < 1e-4;
  return {ok, fmt("min=%.3e ", min_val) + fmt("r=2:%.6f ", r2) + fmt("r=0.5:%.6f", r05)};
}

// ─── 4 ────────────────────────────────────────────────────────────────────

Outcome gating() {
  std::mt19937_64 rng(404);
  const std::string pieces[] = {"<think>", "</think>", "<answer>", "</answer>", "B", " ", "\n", "x", "<", "think", "/"};
  const TaskKind kinds[] = {TaskKind::DarkEventInfer, TaskKind::MixVidQA, TaskKind::MCQA, TaskKind::Caption};
  std::size_t invalid = 0, valid = 0, violations = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string raw;
    if (i % 4 == 0) {
      raw = "<think>" + std::string(rng() % 3, 'r') + "</think> <answer>B</answer>";
      if (rng() % 2) raw.insert(rng() % raw.size(), pieces[rng() % 11]);
    } else {
      for (std::size_t k = 0, n = rng() % 10; k < n; ++k) raw += pieces[rng() % 11];
    }
    const auto parsed = parse_format(raw);
    const double task = unit_uniform(rng) * 3.0 - 0.5;
    const auto b = score_total(parsed, kinds[rng() % 4], task);
    if (parsed.format_valid) {
      ++valid;
      violations += b.total != task;
    } else {
      ++invalid;
      violations += b.total != 0.0;
    }
  }
  // Golden fixture through the score command.
  const auto out = fs::temp_directory_path() / ("versavid_accept_score_" + std::to_string(::getpid()));
  cli::ScoreOptions o;
  o.responses = kFixtures / "score/responses.jsonl";
  o.truth = kFixtures / "score/truth.jsonl";
  o.out = out;
  const auto res = cli::score(o);
  const auto got = read_lines(out / "breakdowns.jsonl");
  const auto golden = read_lines(kFixtures / "score/golden_breakdowns.jsonl");
  fs::remove_all(out);
  std::size_t golden_bad = got.size() == golden.size() ? 0 : 1;
  for (std::size_t i = 0; i < std::min(got.size(), golden.size()); ++i) {
    for (const auto& [key, want] : golden[i].items()) {
      const auto& have = got[i][key];
      const bool same = want.is_number_float() ? std::abs(have.get<double>() - want.get<double>()) <= 1e-12
                                               : have == want;
      golden_bad += !same;
    }
  }
  return {violations == 0 && golden_bad == 0 && res.exit_code == 0 && valid > 0,
          "fuzz valid=" + std::to_string(valid) + " invalid=" + std::to_string(invalid) +
              " violations=" + std::to_string(violations) + " golden_mismatches=" + std::to_string(golden_bad)};
}

// ─── 5 ────────────────────────────────────────────────────────────────────

Outcome keywords() {
  const auto sets = KeywordSets::defaults();
  std::size_t n = 0, bad = 0;
  for (const auto& j : read_lines(kFixtures / "keywords.jsonl")) {
    ++n;
    bad += score_keywords(j["caption"].get<std::string>(), sets, 2) != j["expected"].get<int>();
  }
  const bool cap = score_keywords("First he sits, then he eats, finally he sleeps.", sets, 2) == 2;
  const bool neg = score_keywords("He possibly eats and might sleep.", sets, 2) == -2;
  return {n > 0 && bad == 0 && cap && neg,
          std::to_string(n) + " fixture captions, mismatches=" + std::to_string(bad) +
              " cap(3->2)=" + (cap ? "ok" : "bad") + " speculation(-2)=" + (neg ? "ok" : "bad")};
}

// ─── 6, 7 ─────────────────────────────────────────────────────────────────

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

Outcome bandit_convergence() {
  std::string detail = "steps_to_95pct:";
  bool ok = true;
  for (auto seed : kSeeds) {
    TrainOptions o;
    o.seed = seed;
    o.steps = 2000;
    const auto t = run_format_bandit(GrpoConfig{}, FormatBanditEnv::defaults(), o);
    const auto again = run_format_bandit(GrpoConfig{}, FormatBanditEnv::defaults(), o);
    bool same = t.records.size() == again.records.size();
    for (std::size_t i = 0; same && i < t.records.size(); ++i) {
      same = t.records[i].mean_total_reward == again.records[i].mean_total_reward &&
             t.records[i].objective == again.records[i].objective;
    }
    const bool reached = t.summary.steps_to_95pct.has_value() && *t.summary.steps_to_95pct <= 2000;
    ok = ok && reached && same && t.summary.final_mean_reward >= 0.95;
    detail += " " + (reached ? std::to_string(*t.summary.steps_to_95pct) : std::string("never")) +
              (same ? "" : "(nondeterministic)");
  }
  return {ok, detail};
}

Outcome kl_direction() {
  int monotone = 0;
  std::string detail;
  for (auto seed : kSeeds) {
    std::size_t prev = 0;
    bool mono = true;
    detail += " s" + std::to_string(seed) + "=";
    for (double lambda : {0.0, 0.05, 0.10}) {
      GrpoConfig c;
      c.kl_lambda = lambda;
      TrainOptions o;
      o.seed = seed;
      const auto t = run_format_bandit(c, FormatBanditEnv::defaults(), o);
      // A run that never converges counts as slower than any run that does.
      const std::size_t steps = t.summary.steps_to_95pct.value_or(o.steps + 1);
      mono = mono && steps >= prev;
      prev = steps;
      detail += (t.summary.steps_to_95pct ? std::to_string(steps) : std::string("never")) +
                (lambda < 0.1 ? "/" : "");
    }
    monotone += mono;
  }
  return {monotone >= 3, "non-decreasing on " + std::to_string(monotone) + "/5 seeds;" + detail};
}

// ─── 8 ────────────────────────────────────────────────────────────────────

Outcome caption_hacking() {
  const auto env = CaptionToyEnv::defaults();
  const auto half = brute_force_caption_optimum(env, 0.5);
  const auto one = brute_force_caption_optimum(env, 1.0);
  bool ok = one.event_count < half.event_count;
  std::string detail = "optimum events a=0.5:" + std::to_string(half.event_count) +
                       " a=1.0:" + std::to_string(one.event_count) + "; worst modal/optimum";
  for (const auto& [alpha, best] : {std::pair{0.5, half}, std::pair{1.0, one}}) {
    double worst = 1e9;
    for (auto seed : kSeeds) {
      TrainOptions o;
      o.seed = seed;
      o.steps = 3000;
      o.target_reward = best.reward;
      const auto res = run_caption_toy(GrpoConfig{}, env, alpha, o);
      worst = std::min(worst, res.modal_reward / best.reward);
    }
    ok = ok && worst >= 0.95;
    detail += fmt(" a=%.1f:", alpha) + fmt("%.4f", worst);
  }
  return {ok, detail};
}

// ─── 9 ────────────────────────────────────────────────────────────────────

VideoTimeline random_timeline(std::mt19937_64& rng, int idx) {
  VideoTimeline tl;
  tl.video_id = "v" + std::to_string(idx);
  const std::size_t n = 2 + rng() % 5;
  TimeUs cursor{static_cast<std::int64_t>(rng() % 2'000'000)};
  for (std::size_t k = 0; k < n; ++k) {
    const TimeUs start = cursor + TimeUs(static_cast<std::int64_t>(rng() % 1'500'000));
    const TimeUs end = start + TimeUs(static_cast<std::int64_t>(1 + rng() % 6'000'000));
    tl.events.push_back({"event " + std::to_string(k), start, end});
    cursor = end;
  }
  tl.duration = cursor + TimeUs(static_cast<std::int64_t>(rng() % 3'000'000));
  return tl;
}

Outcome curation() {
  std::mt19937_64 rng(909);
  std::size_t dark_bad = 0, mix_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto tl = random_timeline(rng, i);
    const auto edl = build_dark_event_sample_seeded(tl, rng());
    const auto idx = static_cast<std::size_t>(std::stoul(edl.output_id.substr(edl.output_id.rfind("dark") + 4)));
    const auto& ev = tl.events.at(idx);
    std::size_t blacks = 0;
    TimeUs visible{0};
    for (const auto& s : edl.segments) {
      if (s.is_black()) {
        ++blacks;
        dark_bad += s.duration() != ev.end - ev.start;
      } else {
        visible += s.duration();
        // Visible footage never overlaps the masked interval.
        dark_bad += s.src_start < ev.end && ev.start < s.src_end;
      }
    }
    dark_bad += blacks != 1 || edl.total_duration() != tl.duration ||
                visible != tl.duration - (ev.end - ev.start) || edl.qa->answer != ev.label;
  }
  for (int i = 0; i < 1000; ++i) {
    const VideoTimeline a{"A", TimeUs(1'500'000 + static_cast<std::int64_t>(rng() % 20'000'000)), {}};
    const VideoTimeline b{"B", TimeUs(1'500'000 + static_cast<std::int64_t>(rng() % 20'000'000)), {}};
    const QaRecord qa{"q", TaskKind::MixVidQA, "q?", "a", rng() % 2 ? "A" : "B"};
    const auto edl = build_mixvid_sample(a, b, rng(), qa);
    TimeUs cursor[2] = {TimeUs{0}, TimeUs{0}};
    std::size_t last[2] = {0, 0};
    for (std::size_t k = 0; k < edl.segments.size(); ++k) {
      const int c = *edl.segments[k].source == "A" ? 0 : 1;
      mix_bad += edl.segments[k].src_start != cursor[c];
      cursor[c] = edl.segments[k].src_end;
      last[c] = k;
    }
    for (std::size_t k = 0; k < edl.segments.size(); ++k) {
      const int c = *edl.segments[k].source == "A" ? 0 : 1;
      const auto d = edl.segments[k].duration();
      if (k != last[c]) {
        mix_bad += d < kMixSegmentMin || d > kMixSegmentMax;
      } else {
        mix_bad += d > kMixSegmentMax || d < kMixMinRemainder;
      }
    }
  }
  return {dark_bad == 0 && mix_bad == 0,
          "dark violations=" + std::to_string(dark_bad) + " mix violations=" + std::to_string(mix_bad)};
}

// ─── 10 ───────────────────────────────────────────────────────────────────

Outcome prefilter_fidelity() {
  std::size_t n = 0, bad = 0, kept = 0;
  for (const auto& j : read_lines(kFixtures / "prefilter/caption_groups.jsonl")) {
    const auto f1 = j["f1"].get<std::vector<double>>();
    const auto d = prefilter_caption(j["sample_id"], f1);
    ++n;
    kept += d.kept;
    bad += std::string(to_string(d.reason)) != j["expected"].get<std::string>();
  }
  for (const auto& j : read_lines(kFixtures / "prefilter/qa_groups.jsonl")) {
    const auto v = j["verdicts"].get<std::vector<bool>>();
    const bool flags[5] = {v.at(0), v.at(1), v.at(2), v.at(3), v.at(4)};
    const auto d = prefilter_qa(j["sample_id"], flags);
    ++n;
    kept += d.kept;
    bad += std::string(to_string(d.reason)) != j["expected"].get<std::string>();
  }
  const auto hi = prefilter_caption("hi", std::vector<double>{1, 1, 0, 0, 0});
  const auto lo = prefilter_caption("lo", std::vector<double>{0.6, 0.5, 0.7, 0.6, 0.6});
  const bool boundaries = hi.kept && std::abs(*hi.variance - 0.24) < 1e-12 && !lo.kept &&
                          std::abs(*lo.variance - 0.004) < 1e-12;
  return {bad == 0 && boundaries && n == 40,
          std::to_string(n) + " fixture groups (20 caption + 20 QA), kept=" + std::to_string(kept) +
              " mismatches=" + std::to_string(bad) + fmt(" var[1,1,0,0,0]=%.3f", *hi.variance) +
              fmt(" var[.6,.5,.7,.6,.6]=%.3f", *lo.variance)};
}

// ─── 11 ───────────────────────────────────────────────────────────────────

class CountingBackend : public JudgeBackend {
 public:
  explicit CountingBackend(std::shared_ptr<JudgeBackend> inner) : inner_(std::move(inner)) {}
  std::string complete(const JudgeRequest& r) override {
    std::lock_guard lock(mu_);
    ++per_key[r.cache_key()];
    return inner_->complete(r);
  }
  std::map<std::string, int> per_key;

 private:
  std::shared_ptr<JudgeBackend> inner_;
  std::mutex mu_;
};

class GarbageBackend : public JudgeBackend {
 public:
  std::string complete(const JudgeRequest& r) override {
    return r.response.find("garble") != std::string::npos ? "I refuse to answer" : "Score: 2";
  }
};

Outcome judge_gateway() {
  std::mt19937_64 rng(1111);
  const std::string vocab[] = {"he", "pours", "milk", "water", "into", "the", "pot", "glass"};
  std::vector<JudgeRequest> reqs;
  for (int i = 0; i < 400; ++i) {
    std::string gt, resp;
    for (int k = 0; k < 3; ++k) gt += vocab[rng() % 8] + " ";
    for (int k = 0; k < 3; ++k) resp += vocab[rng() % 8] + " ";
    reqs.push_back(i % 2 ? make_judge_request(TaskKind::MixVidQA, "what is poured?", gt, resp)
                         : make_judge_request(TaskKind::DarkEventInfer, std::nullopt, gt, resp));
  }
  // Duplicate the batch so every request is seen twice.
  auto batch = reqs;
  batch.insert(batch.end(), reqs.begin(), reqs.end());

  JudgeBackendConfig cfg;
  cfg.concurrency_limit = 8;
  auto counting = std::make_shared<CountingBackend>(std::make_shared<MockJudgeBackend>());
  JudgeGateway gw(counting, cfg);
  const auto first = gw.judge_all(batch);
  JudgeGateway gw2(std::make_shared<MockJudgeBackend>(), cfg);
  const auto second = gw2.judge_all(batch);
  std::size_t nondeterministic = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    nondeterministic += first[i].raw_output != second[i].raw_output || first[i].reward() != second[i].reward();
  }
  std::set<std::string> unique;
  for (const auto& r : batch) unique.insert(r.cache_key());
  int max_calls = 0;
  for (const auto& [k, c] : counting->per_key) max_calls = std::max(max_calls, c);

  // A group where half the judge replies are unparseable still scores fully.
  std::vector<JudgeRequest> group;
  for (int i = 0; i < 8; ++i) {
    group.push_back(make_judge_request(TaskKind::DarkEventInfer, std::nullopt, "gt",
                                       (i % 2 ? "garble " : "fine ") + std::to_string(i)));
  }
  JudgeGateway gg(std::make_shared<GarbageBackend>(), cfg);
  const auto verdicts = gg.judge_all(group);
  std::size_t fallback_ok = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (i % 2) fallback_ok += verdicts[i].fallback && verdicts[i].reward() == 0.0;
    else fallback_ok += !verdicts[i].fallback && verdicts[i].reward() == 2.0;
  }
  const bool ok = nondeterministic == 0 && max_calls <= 1 && gw.backend_calls() == unique.size() &&
                  verdicts.size() == 8 && fallback_ok == 8;
  return {ok, "requests=" + std::to_string(batch.size()) + " unique=" + std::to_string(unique.size()) +
                  " backend_calls=" + std::to_string(gw.backend_calls()) + " max_per_key=" +
                  std::to_string(max_calls) + " nondeterministic=" + std::to_string(nondeterministic) +
                  " unparseable->lowest " + std::to_string(fallback_ok) + "/8"};
}

}  // namespace

int main() {
  std::printf("acceptance criteria\n");
  report(1, "advantage normalization", advantages, 5);
  report(2, "gradient vs finite differences", gradients, 60);
  report(3, "KL estimator", kl, 5);
  report(4, "format gating + golden fixture", gating, 30);
  report(5, "keyword reward fixture", keywords, 5);
  report(6, "format-bandit convergence", bandit_convergence, 120);
  report(7, "KL coefficient slows convergence", kl_direction, 120);
  report(8, "caption reward hacking direction", caption_hacking, 180);
  report(9, "curation invariants", curation, 10);
  report(10, "pre-filter fidelity", prefilter_fidelity, 5);
  report(11, "judge gateway", judge_gateway, 30);
  std::printf("%s: %d of 11 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
