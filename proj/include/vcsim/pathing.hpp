#pragma once

// Candidate relay paths between a sender and a receiver, and confidence-bound
// pruning of those candidates down to a top-k set.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "vcsim/errors.hpp"
#include "vcsim/trace_net.hpp"
#include "vcsim/types.hpp"

namespace vcsim {

struct RelayPath {
  PathId id;
  std::vector<NodeId> hops;  // sender, up to two relays, receiver

  NodeId sender() const { return hops.front(); }
  NodeId receiver() const { return hops.back(); }
  std::size_t relay_count() const { return hops.size() - 2; }
  friend bool operator==(const RelayPath&, const RelayPath&) = default;
};

inline std::string describe(const RelayPath& path, const Topology& topo) {
  std::string out;
  for (std::size_t i = 0; i < path.hops.size(); ++i) {
    if (i) out += ">";
    out += topo.node(path.hops[i]).name;
  }
  return out;
}

// Direct path first (id 0), then one-relay paths in relay order, then every
// ordered pair of distinct relays. 1 + R + R(R-1) paths for R relays.
inline std::vector<RelayPath> enumerate_paths(NodeId sender, NodeId receiver,
                                              const std::vector<NodeId>& relays) {
  std::set<NodeId> seen{sender};
  if (!seen.insert(receiver).second) throw ValidationError("sender and receiver must differ");
  for (auto r : relays)
    if (!seen.insert(r).second)
      throw ValidationError("relay list repeats a node or contains the sender/receiver");

  std::vector<RelayPath> paths;
  auto push = [&](std::vector<NodeId> hops) {
    paths.push_back(RelayPath{PathId{static_cast<std::uint32_t>(paths.size())}, std::move(hops)});
  };
  push({sender, receiver});
  for (auto r : relays) push({sender, r, receiver});
  for (auto r1 : relays)
    for (auto r2 : relays)
      if (r1 != r2) push({sender, r1, r2, receiver});
  return paths;
}

// Every hop is read at the same instant t.
inline Millis path_latency(const RelayPath& path, const Topology& topo, Millis t) {
  Millis total = 0;
  for (std::size_t i = 0; i + 1 < path.hops.size(); ++i)
    total += topo.link_latency(path.hops[i], path.hops[i + 1], t);
  return total;
}

inline void require_links(const RelayPath& path, const Topology& topo) {
  for (std::size_t i = 0; i + 1 < path.hops.size(); ++i)
    if (!topo.has_link(path.hops[i], path.hops[i + 1]))
      throw ConfigError("missing trace for hop " + topo.node(path.hops[i]).name + "->" +
                        topo.node(path.hops[i + 1]).name + " on path " + describe(path, topo));
}

struct PathStat {
  std::size_t count = 0;
  Millis mean = 0;
  Millis std = 0;
};

// Mean and sample standard deviation of path latency over [from, to) at a
// fixed stride.
inline PathStat measure_path(const RelayPath& path, const Topology& topo, Millis from, Millis to,
                             Millis stride) {
  PathStat stat;
  double mean = 0, m2 = 0;
  for (Millis t = from; t < to; t += stride) {
    const double x = path_latency(path, topo, t);
    ++stat.count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(stat.count);
    m2 += delta * (x - mean);
  }
  stat.mean = mean;
  stat.std = stat.count > 1 ? std::sqrt(m2 / static_cast<double>(stat.count - 1)) : 0.0;
  return stat;
}

struct PathSet {
  NodeId sender;
  NodeId receiver;
  std::vector<RelayPath> all_paths;
  std::vector<PathId> topk;
  std::vector<PathStat> stats;  // indexed by PathId

  std::size_t k() const { return topk.size(); }
  const RelayPath& path(PathId id) const { return all_paths.at(id.value); }
  bool contains(PathId id) const { return std::find(topk.begin(), topk.end(), id) != topk.end(); }
};

// Two-sided normal quantile for the confidence level.
inline double confidence_z(double confidence) {
  if (!(confidence > 0 && confidence < 1)) throw ValidationError("confidence must be in (0,1)");
  boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + confidence / 2.0);
}

// Keeps every path whose lower confidence bound does not exceed the smallest
// upper bound; anything dropped is worse than some kept path at the given
// confidence.
inline std::vector<PathId> prune_topk(const std::vector<PathStat>& stats, double confidence) {
  if (stats.empty()) throw ValidationError("no paths to prune");
  const double z = confidence_z(confidence);
  std::vector<double> lower(stats.size()), upper(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].count < 2)
      throw InsufficientHistory("path " + std::to_string(i) + " has fewer than 2 samples");
    const double radius = z * stats[i].std / std::sqrt(static_cast<double>(stats[i].count));
    lower[i] = stats[i].mean - radius;
    upper[i] = stats[i].mean + radius;
  }
  const double min_upper = *std::min_element(upper.begin(), upper.end());
  std::vector<PathId> keep;
  for (std::size_t i = 0; i < stats.size(); ++i)
    if (lower[i] <= min_upper) keep.push_back(PathId{static_cast<std::uint32_t>(i)});
  return keep;
}

inline PathSet build_path_set(const Topology& topo, NodeId sender, NodeId receiver,
                              const std::vector<NodeId>& relays, Millis warmup_from,
                              Millis warmup_to, Millis stride, double confidence) {
  PathSet set{sender, receiver, enumerate_paths(sender, receiver, relays), {}, {}};
  for (const auto& p : set.all_paths) require_links(p, topo);
  for (const auto& p : set.all_paths)
    set.stats.push_back(measure_path(p, topo, warmup_from, warmup_to, stride));
  set.topk = prune_topk(set.stats, confidence);
  return set;
}

}  // namespace vcsim
