#pragma once

// Bandit primitives over latency arms. Every policy here minimizes: an arm's
// reward is a latency in milliseconds, so "best" means smallest.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vcsim/errors.hpp"
#include "vcsim/types.hpp"

namespace vcsim {

// Normal belief over an arm's mean latency with known observation precision.
struct GaussianArmPosterior {
  PathId path;
  double mu = 0;    // posterior mean, ms
  double tau = 1;   // posterior precision, 1/ms^2
  double tau0 = 1;  // observation precision, 1/ms^2
  std::uint64_t n = 0;

  double predictive_variance() const { return 1.0 / tau + 1.0 / tau0; }
};

// Conjugate Normal update with known precision:
//   tau' = tau + n*tau0
//   mu'  = (tau*mu + tau0*sum(x)) / (tau + n*tau0)
// The mean update weighs the prior by the precision held before this batch.
inline GaussianArmPosterior ts_update(GaussianArmPosterior arm, std::span<const double> rewards) {
  if (rewards.empty()) return arm;
  double sum = 0;
  for (double x : rewards) {
    if (!(x > 0) || !std::isfinite(x)) throw ValidationError("reward must be positive and finite");
    sum += x;
  }
  const double n = static_cast<double>(rewards.size());
  const double new_tau = arm.tau + n * arm.tau0;
  arm.mu = (arm.tau * arm.mu + arm.tau0 * sum) / new_tau;
  arm.tau = new_tau;
  arm.n += rewards.size();
  return arm;
}

inline GaussianArmPosterior ts_update(const GaussianArmPosterior& arm, double reward) {
  return ts_update(arm, std::span<const double>(&reward, 1));
}

// One draw per arm from its posterior predictive Normal(mu, 1/tau + 1/tau0).
template <class Rng>
std::vector<double> ts_sample(std::span<const GaussianArmPosterior> arms, Rng& rng) {
  std::vector<double> out;
  out.reserve(arms.size());
  std::normal_distribution<double> standard(0.0, 1.0);
  for (const auto& arm : arms) out.push_back(arm.mu + std::sqrt(arm.predictive_variance()) * standard(rng));
  return out;
}

// Arm with the smallest sampled latency; ties go to the lowest path id.
inline PathId argmin_sample(std::span<const GaussianArmPosterior> arms, std::span<const double> samples) {
  if (arms.empty() || arms.size() != samples.size()) throw ValidationError("no arms to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < arms.size(); ++i)
    if (samples[i] < samples[best] || (samples[i] == samples[best] && arms[i].path < arms[best].path))
      best = i;
  return arms[best].path;
}

template <class Rng>
PathId ts_select(std::span<const GaussianArmPosterior> arms, Rng& rng) {
  if (arms.empty()) throw ValidationError("no arms to choose from");
  auto samples = ts_sample(arms, rng);
  return argmin_sample(arms, samples);
}

struct Ucb1ArmState {
  PathId path;
  double mean = 0;  // mean observed latency, ms
  std::uint64_t n = 0;
};

inline void ucb1_observe(Ucb1ArmState& arm, double value) {
  ++arm.n;
  arm.mean += (value - arm.mean) / static_cast<double>(arm.n);
}

// Lower confidence index for latency: mean - c * sqrt(2 ln N / n).
inline double ucb1_index(const Ucb1ArmState& arm, std::uint64_t total_pulls, double c) {
  if (arm.n == 0) throw std::logic_error("UCB1 index of an unpulled arm");
  return arm.mean - c * std::sqrt(2.0 * std::log(static_cast<double>(total_pulls)) /
                                  static_cast<double>(arm.n));
}

// Unpulled arms are taken first (lowest path id); afterwards the minimum
// index wins with ties to the lowest path id.
inline PathId ucb1_select(std::span<const Ucb1ArmState> arms, double c) {
  if (arms.empty()) throw ValidationError("no arms to choose from");
  const Ucb1ArmState* pick = nullptr;
  for (const auto& arm : arms)
    if (arm.n == 0 && (!pick || arm.path < pick->path)) pick = &arm;
  if (pick) return pick->path;

  std::uint64_t total = 0;
  for (const auto& arm : arms) total += arm.n;
  double best_index = std::numeric_limits<double>::infinity();
  for (const auto& arm : arms) {
    const double idx = ucb1_index(arm, total, c);
    if (!pick || idx < best_index || (idx == best_index && arm.path < pick->path)) {
      pick = &arm;
      best_index = idx;
    }
  }
  return pick->path;
}

// The path every packet of a stream follows until the scheduler replaces it.
struct RoutingPlan {
  PathId current_path;
  std::uint64_t version = 0;
  Millis issued_at = 0;
};

// A new plan (and a control message) only when the selection differs.
inline std::pair<RoutingPlan, bool> maybe_update_plan(const RoutingPlan& plan, PathId selected,
                                                      Millis now) {
  if (selected == plan.current_path) return {plan, false};
  return {RoutingPlan{selected, plan.version + 1, now}, true};
}

inline constexpr PathId kDirectPath{0};

inline PathId direct_select() { return kDirectPath; }

}  // namespace vcsim
