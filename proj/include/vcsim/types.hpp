#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <system_error>

#include "vcsim/errors.hpp"

namespace vcsim {

// All simulated times and latencies are milliseconds.
using Millis = double;

struct NodeId {
  std::uint32_t value = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct PathId {
  std::uint32_t value = 0;
  friend auto operator<=>(const PathId&, const PathId&) = default;
};

enum class NodeRole { endpoint, relay, user };

inline std::string_view to_string(NodeRole role) {
  switch (role) {
    case NodeRole::endpoint: return "endpoint";
    case NodeRole::relay: return "relay";
    case NodeRole::user: return "user";
  }
  return "?";
}

inline NodeRole parse_role(std::string_view s) {
  if (s == "endpoint") return NodeRole::endpoint;
  if (s == "relay") return NodeRole::relay;
  if (s == "user") return NodeRole::user;
  throw ValidationError("unknown node role '" + std::string(s) + "'");
}

struct Node {
  NodeId id;
  NodeRole role = NodeRole::endpoint;
  std::string name;
};

struct Link {
  NodeId src;
  NodeId dst;
  friend auto operator<=>(const Link&, const Link&) = default;
};

// Shortest text form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

}  // namespace vcsim

template <>
struct std::hash<vcsim::NodeId> {
  std::size_t operator()(const vcsim::NodeId& id) const noexcept { return id.value; }
};
