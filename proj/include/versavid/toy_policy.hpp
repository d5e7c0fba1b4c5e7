#pragma once
// Tabular autoregressive categorical policy with exact log-probabilities and
// score-function gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "versavid/error.hpp"

namespace versavid {

enum class Conditioning {
  PreviousToken,  // one logit row per previous token, plus a start row
  Position,       // one logit row per output position
};

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class ToyPolicy {
 public:
  ToyPolicy(std::vector<std::string> alphabet, std::size_t max_len, Conditioning mode,
            std::optional<std::size_t> stop_token, std::uint64_t seed = 0)
      : alphabet_(std::move(alphabet)),
        max_len_(max_len),
        mode_(mode),
        stop_(stop_token),
        seed_(seed) {
    if (alphabet_.size() < 2) throw Error(ErrorCode::InvalidConfig, "alphabet needs >= 2 tokens");
    if (max_len_ == 0) throw Error(ErrorCode::InvalidConfig, "max_len must be positive");
    if (stop_ && *stop_ >= alphabet_.size()) {
      throw Error(ErrorCode::InvalidConfig, "stop token outside alphabet");
    }
    params_.assign(rows() * vocab_size(), 0.0);
  }

  /// Logits drawn i.i.d. from N(0, scale^2), seeded.
  static ToyPolicy random(std::vector<std::string> alphabet, std::size_t max_len,
                          Conditioning mode, std::optional<std::size_t> stop_token,
                          std::uint64_t seed, double scale = 1.0) {
    ToyPolicy p(std::move(alphabet), max_len, mode, stop_token, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    for (auto& x : p.params_) x = normal(rng);
    return p;
  }

  std::size_t vocab_size() const { return alphabet_.size(); }
  std::size_t max_len() const { return max_len_; }
  std::size_t rows() const {
    return mode_ == Conditioning::PreviousToken ? alphabet_.size() + 1 : max_len_;
  }
  std::size_t param_count() const { return params_.size(); }
  Conditioning mode() const { return mode_; }
  std::optional<std::size_t> stop_token() const { return stop_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  std::size_t token_index(const std::string& token) const {
    auto it = std::find(alphabet_.begin(), alphabet_.end(), token);
    if (it == alphabet_.end()) throw Error(ErrorCode::UnknownToken, "token '" + token + "'");
    return static_cast<std::size_t>(it - alphabet_.begin());
  }

  /// Row of logits used at `position` given the previous token (none at start).
  std::size_t row_index(std::size_t position, std::optional<std::size_t> previous) const {
    if (mode_ == Conditioning::Position) return std::min(position, max_len_ - 1);
    return previous ? *previous + 1 : 0;
  }

  /// log softmax(logits / temperature) of one row.
  std::vector<double> log_probs(std::size_t row, double temperature = 1.0) const {
    const std::size_t v = vocab_size();
    std::vector<double> out(v);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) {
      out[j] = params_[row * v + j] / temperature;
      mx = std::max(mx, out[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) sum += std::exp(out[j] - mx);
    const double lse = mx + std::log(sum);
    for (auto& x : out) x -= lse;
    return out;
  }

  std::vector<double> probs(std::size_t row, double temperature = 1.0) const {
    auto lp = log_probs(row, temperature);
    for (auto& x : lp) x = std::exp(x);
    return lp;
  }

 private:
  std::vector<std::string> alphabet_;
  std::size_t max_len_;
  Conditioning mode_;
  std::optional<std::size_t> stop_;
  std::uint64_t seed_;
  std::vector<double> params_;
};

using TokenSequence = std::vector<std::size_t>;

inline double sequence_logprob(const ToyPolicy& policy, const TokenSequence& tokens,
                               double temperature = 1.0) {
  double total = 0.0;
  std::optional<std::size_t> prev;
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    if (tokens[pos] >= policy.vocab_size()) {
      throw Error(ErrorCode::UnknownToken, "token index " + std::to_string(tokens[pos]));
    }
    total += policy.log_probs(policy.row_index(pos, prev), temperature)[tokens[pos]];
    prev = tokens[pos];
  }
  return total;
}

inline double sequence_logprob(const ToyPolicy& policy, const std::vector<std::string>& tokens,
                               double temperature = 1.0) {
  TokenSequence idx;
  idx.reserve(tokens.size());
  for (const auto& t : tokens) idx.push_back(policy.token_index(t));
  return sequence_logprob(policy, idx, temperature);
}

/// grad += weight * d/dparams log pi(tokens).
inline void accumulate_logprob_gradient(const ToyPolicy& policy, const TokenSequence& tokens,
                                        double temperature, double weight,
                                        std::span<double> grad) {
  const std::size_t v = policy.vocab_size();
  std::optional<std::size_t> prev;
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const auto row = policy.row_index(pos, prev);
    const auto p = policy.probs(row, temperature);
    for (std::size_t j = 0; j < v; ++j) {
      const double indicator = j == tokens[pos] ? 1.0 : 0.0;
      grad[row * v + j] += weight * (indicator - p[j]) / temperature;
    }
    prev = tokens[pos];
  }
}

struct SampledResponse {
  TokenSequence tokens;
  double logprob = 0.0;
};

/// G ancestral samples from softmax(logits / temperature); logprobs are taken
/// under that same sampling distribution. Sequences end after the stop token
/// or at max_len.
inline std::vector<SampledResponse> sample_responses(const ToyPolicy& policy, std::size_t group_size,
                                                     double temperature, std::uint64_t seed) {
  if (group_size < 2) throw Error(ErrorCode::GroupTooSmall, "need at least 2 samples");
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
  std::mt19937_64 rng(seed);
  std::vector<SampledResponse> out(group_size);
  for (auto& s : out) {
    std::optional<std::size_t> prev;
    for (std::size_t pos = 0; pos < policy.max_len(); ++pos) {
      const auto lp = policy.log_probs(policy.row_index(pos, prev), temperature);
      const double u = unit_uniform(rng);
      double acc = 0.0;
      std::size_t pick = lp.size() - 1;
      for (std::size_t j = 0; j < lp.size(); ++j) {
        acc += std::exp(lp[j]);
        if (u < acc) {
          pick = j;
          break;
        }
      }
      // Guard against rounding leaving u above the cumulative sum: take the
      // last token with nonzero mass.
      if (acc <= u) {
        while (pick > 0 && std::exp(lp[pick]) == 0.0) --pick;
      }
      s.tokens.push_back(pick);
      s.logprob += lp[pick];
      prev = pick;
      if (policy.stop_token() && pick == *policy.stop_token()) break;
    }
  }
  return out;
}

}  // namespace versavid
