#pragma once
// Group-relative advantages and the clipped surrogate objective with its
// exact gradient for the tabular toy policy.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "versavid/error.hpp"
#include "versavid/toy_policy.hpp"

namespace versavid {

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_lambda = 0.0;
  double learning_rate = 0.5;
  double sample_temperature = 1.0;
  double std_floor = 1e-8;
  // Gradient steps taken on each sampled group before resampling.
  std::size_t updates_per_group = 1;

  void validate() const {
    if (group_size < 2) throw Error(ErrorCode::InvalidConfig, "group_size must be >= 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "clip_epsilon must be in (0,1)");
    }
    if (!(kl_lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "kl_lambda must be >= 0");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be > 0");
    if (!(sample_temperature > 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "sample_temperature must be > 0");
    }
    if (!(std_floor >= 0.0)) throw Error(ErrorCode::InvalidConfig, "std_floor must be >= 0");
    if (updates_per_group < 1) throw Error(ErrorCode::InvalidConfig, "updates_per_group must be >= 1");
  }
};

struct GroupRollout {
  std::string question_id;
  std::vector<TokenSequence> responses;
  std::vector<double> rewards;
  std::vector<double> old_logprobs;
  std::optional<std::vector<double>> ref_logprobs;

  std::size_t size() const { return responses.size(); }

  void validate() const {
    const auto g = responses.size();
    if (rewards.size() != g || old_logprobs.size() != g ||
        (ref_logprobs && ref_logprobs->size() != g)) {
      throw Error(ErrorCode::ShapeMismatch, "group lists must share one length");
    }
    for (double lp : old_logprobs) {
      if (!std::isfinite(lp)) throw Error(ErrorCode::InvalidConfig, "old logprob is not finite");
    }
  }
};

struct AdvantageVector {
  std::vector<double> values;
  bool degenerate = false;
};

/// (r - mean) / std with population std; all-zero when std < std_floor.
inline AdvantageVector compute_advantages(std::span<const double> rewards, double std_floor = 1e-8) {
  if (rewards.size() < 2) throw Error(ErrorCode::GroupTooSmall, "group needs >= 2 rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / n);
  AdvantageVector a;
  a.values.assign(rewards.size(), 0.0);
  if (!(sd >= std_floor) || sd == 0.0) {
    a.degenerate = true;
    return a;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) a.values[i] = (rewards[i] - mean) / sd;
  return a;
}

inline constexpr double kRatioLogClamp = 20.0;

struct ImportanceRatio {
  double value = 1.0;
  bool clamped = false;
};

/// exp(new - old), held inside [e^-20, e^20].
inline ImportanceRatio importance_ratio(double logp_new, double logp_old) {
  const double d = logp_new - logp_old;
  if (d > kRatioLogClamp) return {std::exp(kRatioLogClamp), true};
  if (d < -kRatioLogClamp) return {std::exp(-kRatioLogClamp), true};
  return {std::exp(d), false};
}

/// r - log r - 1 with r = exp(logp_ref - logp_new); written via expm1 so the
/// equal-logprob case is exactly zero.
inline double kl_estimate(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  return std::max(0.0, std::expm1(d) - d);
}

struct ObjectiveReport {
  double surrogate = 0.0;
  double kl_term = 0.0;
  double objective = 0.0;
  double clipped_fraction = 0.0;
  std::size_t clamp_events = 0;
  bool degenerate = false;
};

namespace detail {

inline ObjectiveReport evaluate_grpo(const GroupRollout& group, const ToyPolicy& policy,
                                     const GrpoConfig& config, std::span<double> grad) {
  group.validate();
  const bool use_kl = config.kl_lambda > 0.0;
  if (use_kl && !group.ref_logprobs) {
    throw Error(ErrorCode::MissingReference, "kl_lambda > 0 needs reference logprobs");
  }
  const auto adv = compute_advantages(group.rewards, config.std_floor);
  const double g = static_cast<double>(group.size());
  const double lo = 1.0 - config.clip_epsilon;
  const double hi = 1.0 + config.clip_epsilon;

  ObjectiveReport rep;
  rep.degenerate = adv.degenerate;
  std::size_t clipped = 0;
  // Fixed summation order keeps results bit-reproducible.
  for (std::size_t i = 0; i < group.size(); ++i) {
    const double lp = sequence_logprob(policy, group.responses[i], config.sample_temperature);
    const auto ratio = importance_ratio(lp, group.old_logprobs[i]);
    rep.clamp_events += ratio.clamped ? 1 : 0;
    const double a = adv.values[i];
    const double unclipped = ratio.value * a;
    const double clipped_term = std::clamp(ratio.value, lo, hi) * a;
    const bool clip_active = clipped_term < unclipped;
    clipped += clip_active ? 1 : 0;
    rep.surrogate += std::min(unclipped, clipped_term);

    double coef = 0.0;
    if (!clip_active && !ratio.clamped) coef += a * ratio.value / g;
    if (use_kl) {
      const double ref = (*group.ref_logprobs)[i];
      rep.kl_term += kl_estimate(lp, ref);
      // d/dlp (r - log r - 1) = 1 - r
      coef -= config.kl_lambda * (1.0 - std::exp(ref - lp)) / g;
    }
    if (!grad.empty() && coef != 0.0) {
      accumulate_logprob_gradient(policy, group.responses[i], config.sample_temperature, coef, grad);
    }
  }
  rep.surrogate /= g;
  rep.kl_term /= g;
  rep.objective = rep.surrogate - config.kl_lambda * rep.kl_term;
  rep.clipped_fraction = static_cast<double>(clipped) / g;
  return rep;
}

}  // namespace detail

inline ObjectiveReport grpo_objective(const GroupRollout& group, const ToyPolicy& policy,
                                      const GrpoConfig& config) {
  return detail::evaluate_grpo(group, policy, config, {});
}

/// Exact gradient of grpo_objective().objective; old logprobs and advantages
/// are constants.
inline std::vector<double> grpo_gradient(const GroupRollout& group, const ToyPolicy& policy,
                                         const GrpoConfig& config) {
  std::vector<double> grad(policy.param_count(), 0.0);
  detail::evaluate_grpo(group, policy, config, grad);
  return grad;
}

/// Plain gradient ascent; returns a new policy.
inline ToyPolicy update_step(const ToyPolicy& policy, std::span<const double> gradient,
                             double learning_rate) {
  if (gradient.size() != policy.param_count()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient length " + std::to_string(gradient.size()) +
                                              " != parameter count " +
                                              std::to_string(policy.param_count()));
  }
  ToyPolicy next = policy;
  auto p = next.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += learning_rate * gradient[i];
  return next;
}

/// Max over parameters of |analytic - central difference| / max(1e-12, |central difference|).
inline double finite_difference_check(const GroupRollout& group, const ToyPolicy& policy,
                                      const GrpoConfig& config, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidConfig, "step must be > 0");
  const auto analytic = grpo_gradient(group, policy, config);
  ToyPolicy probe = policy;
  auto p = probe.params();
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + step;
    const double up = grpo_objective(group, probe, config).objective;
    p[k] = orig - step;
    const double down = grpo_objective(group, probe, config).objective;
    p[k] = orig;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[k] - numeric) / std::max(1e-12, std::abs(numeric)));
  }
  return worst;
}

}  // namespace versavid
