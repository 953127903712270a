#pragma once

// Per-packet routing policies over a pruned path set.

#include <algorithm>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vcsim/bandit.hpp"
#include "vcsim/pathing.hpp"

namespace vcsim {

enum class RouterKind { direct, via_ucb1, vcroute_ts };

inline RouterKind parse_router(std::string_view s) {
  if (s == "direct" || s == "DRT") return RouterKind::direct;
  if (s == "via_ucb1" || s == "via" || s == "VIA") return RouterKind::via_ucb1;
  if (s == "vcroute_ts" || s == "vcroute" || s == "VCR") return RouterKind::vcroute_ts;
  throw ValidationError("unknown router '" + std::string(s) + "'");
}

inline std::string_view to_string(RouterKind k) {
  switch (k) {
    case RouterKind::direct: return "direct";
    case RouterKind::via_ucb1: return "via_ucb1";
    case RouterKind::vcroute_ts: return "vcroute_ts";
  }
  return "?";
}

// What the receiver reports back for a packet.
enum class FeedbackKind { none, transmitting, end_to_end };

class Router {
public:
  virtual ~Router() = default;
  virtual PathId select() = 0;
  virtual void observe(PathId path, Millis value) = 0;
  virtual FeedbackKind feedback() const = 0;
};

class DirectRouter final : public Router {
public:
  PathId select() override { return direct_select(); }
  void observe(PathId, Millis) override {}
  FeedbackKind feedback() const override { return FeedbackKind::none; }
};

// Arms are listed in the order the initialization round should visit them.
inline std::vector<PathId> exploration_order(const PathSet& set) {
  auto order = set.topk;
  std::stable_sort(order.begin(), order.end(), [&](PathId a, PathId b) {
    return set.stats.at(a.value).mean < set.stats.at(b.value).mean;
  });
  return order;
}

// UCB1 on transmitting latency.
class ViaRouter final : public Router {
public:
  ViaRouter(const PathSet& set, double c) : c_(c), order_(exploration_order(set)) {
    for (auto id : set.topk) arms_.push_back(Ucb1ArmState{id, 0.0, 0});
  }

  PathId select() override {
    if (issued_ < order_.size()) return order_[issued_++];
    std::vector<Ucb1ArmState> ready;
    for (const auto& a : arms_)
      if (a.n > 0) ready.push_back(a);
    if (ready.empty()) return order_.front();
    return ucb1_select(ready, c_);
  }

  void observe(PathId path, Millis value) override {
    if (auto* a = find(path)) ucb1_observe(*a, value);
  }

  FeedbackKind feedback() const override { return FeedbackKind::transmitting; }
  const std::vector<Ucb1ArmState>& arms() const { return arms_; }

private:
  Ucb1ArmState* find(PathId id) {
    for (auto& a : arms_)
      if (a.path == id) return &a;
    return nullptr;
  }

  double c_;
  std::size_t issued_ = 0;
  std::vector<PathId> order_;
  std::vector<Ucb1ArmState> arms_;
};

// Thompson Sampling on end-to-end latency. The first k packets visit each arm
// once in exploration order. An arm's posterior starts at its first observed
// reward with precision tau0, and only arms with a posterior are sampled.
class ThompsonRouter final : public Router {
public:
  static constexpr double kMinVariance = 0.25;  // ms^2

  ThompsonRouter(const PathSet& set, std::mt19937_64 rng)
      : rng_(std::move(rng)), order_(exploration_order(set)) {
    for (auto id : set.topk) {
      const double sd = set.stats.at(id.value).std;
      const double var = std::max(sd * sd, kMinVariance);
      arms_.push_back(GaussianArmPosterior{id, 0.0, 1.0 / var, 1.0 / var, 0});
    }
  }

  PathId select() override {
    if (issued_ < order_.size()) return order_[issued_++];
    if (ready_ == arms_.size()) return ts_select(std::span<const GaussianArmPosterior>(arms_), rng_);
    std::vector<GaussianArmPosterior> ready;
    for (const auto& a : arms_)
      if (a.n > 0) ready.push_back(a);
    if (ready.empty()) return order_.front();
    return ts_select(std::span<const GaussianArmPosterior>(ready), rng_);
  }

  void observe(PathId path, Millis value) override {
    auto* a = find(path);
    if (!a) return;
    if (a->n == 0) {
      a->mu = value;
      a->tau = a->tau0;
      a->n = 1;
      ++ready_;
    } else {
      *a = ts_update(*a, value);
    }
  }

  FeedbackKind feedback() const override { return FeedbackKind::end_to_end; }
  const std::vector<GaussianArmPosterior>& arms() const { return arms_; }

private:
  GaussianArmPosterior* find(PathId id) {
    for (auto& a : arms_)
      if (a.path == id) return &a;
    return nullptr;
  }

  std::mt19937_64 rng_;
  std::size_t issued_ = 0;
  std::size_t ready_ = 0;
  std::vector<PathId> order_;
  std::vector<GaussianArmPosterior> arms_;
};

inline std::unique_ptr<Router> make_router(RouterKind kind, const PathSet& set, double ucb_c,
                                           std::mt19937_64 rng) {
  switch (kind) {
    case RouterKind::direct: return std::make_unique<DirectRouter>();
    case RouterKind::via_ucb1: return std::make_unique<ViaRouter>(set, ucb_c);
    case RouterKind::vcroute_ts: return std::make_unique<ThompsonRouter>(set, std::move(rng));
  }
  throw ValidationError("unknown router kind");
}

}  // namespace vcsim
