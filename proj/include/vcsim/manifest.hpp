#pragma once

// Experiment manifest (JSON, schema_version 1):
//
//   {
//     "schema_version": 1,
//     "topology": "topology.json",          // or "synthetic": {...}
//     "pairs": [{"endpoint": "E0", "user": "U0", "direction": "downlink",
//                "relays": ["R0", "R1"]}],   // relays optional
//     "session": {"packet_interval_ms": 10, "packets": 60000, "warmup_s": 60,
//                 "confidence": 0.95, "ucb_c": 1.0, "seed": 1,
//                 "loss_threshold": 0.01, "latency_noise_frac": 0,
//                 "jitter": {"window_ms": 2000, "bin_ms": 1, "percentile": 0.95,
//                            "loss_cost_ms": 100, "initial_lag_ms": 0,
//                            "max_lag_ms": 10000, "update_on_drop": true}},
//     "methods": ["DRT-BF", "DRT-WM", "VIA-BF", "VIA-WM", "VCR-WM"],
//     "output_dir": "results"
//   }
//
// A "synthetic" block replaces "topology" with
//   {"nodes": [{"name", "role"}], "mean_low", "mean_high", "std_choices",
//    "regime", "seed", "duration_s", "step_ms"}.
// Relative paths resolve against the manifest's directory.

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcsim/simcore.hpp"
#include "vcsim/trace_net.hpp"

namespace vcsim {

inline constexpr int kManifestSchemaVersion = 1;

struct SessionPair {
  std::string endpoint;
  std::string user;
  Direction direction = Direction::downlink;
  std::optional<std::vector<std::string>> relays;
};

struct SyntheticBlock {
  SyntheticTraceSpec spec;
  std::vector<Node> nodes;
  double duration_s = 660;
  Millis step_ms = 10;
};

struct ExperimentManifest {
  std::optional<std::filesystem::path> topology;  // resolved
  std::optional<SyntheticBlock> synthetic;
  std::vector<SessionPair> pairs;
  SessionConfig defaults;
  std::vector<Method> methods = paper_methods();
  std::optional<std::filesystem::path> output_dir;  // as written, unresolved
  nlohmann::json source;

  void validate() const {
    if (topology.has_value() == synthetic.has_value())
      throw ValidationError("manifest needs exactly one of 'topology' or 'synthetic'");
    if (pairs.empty()) throw ValidationError("manifest lists no pairs");
    if (methods.empty()) throw ValidationError("manifest method list is empty");
    if (topology && !std::filesystem::exists(*topology))
      throw ValidationError("topology manifest not found: " + topology->string());
    if (synthetic) {
      synthetic->spec.validate();
      if (!(synthetic->duration_s > 0) || !(synthetic->step_ms > 0))
        throw ValidationError("synthetic duration_s and step_ms must be > 0");
    }
    auto probe = defaults;
    probe.topology = std::make_shared<Topology>();
    probe.validate();
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

inline JitterConfig parse_jitter_config(const nlohmann::json& j) {
  JitterConfig c;
  detail::read_opt(j, "window_ms", c.window_ms);
  detail::read_opt(j, "bin_ms", c.bin_ms);
  detail::read_opt(j, "percentile", c.percentile);
  detail::read_opt(j, "loss_cost_ms", c.loss_cost_ms);
  detail::read_opt(j, "initial_lag_ms", c.initial_lag_ms);
  detail::read_opt(j, "max_lag_ms", c.max_lag_ms);
  detail::read_opt(j, "update_on_drop", c.update_on_drop);
  return c;
}

inline nlohmann::json to_json(const JitterConfig& c) {
  return {{"window_ms", c.window_ms},       {"bin_ms", c.bin_ms},
          {"percentile", c.percentile},     {"loss_cost_ms", c.loss_cost_ms},
          {"initial_lag_ms", c.initial_lag_ms}, {"max_lag_ms", c.max_lag_ms},
          {"update_on_drop", c.update_on_drop}};
}

inline ExperimentManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base) {
  ExperimentManifest m;
  m.source = doc;
  try {
    if (doc.value("schema_version", 0) != kManifestSchemaVersion)
      throw ValidationError("manifest schema_version must be " + std::to_string(kManifestSchemaVersion));
    if (doc.contains("topology")) m.topology = base / doc.at("topology").get<std::string>();
    if (doc.contains("synthetic")) {
      const auto& s = doc.at("synthetic");
      SyntheticBlock b;
      for (const auto& n : s.at("nodes"))
        b.nodes.push_back(Node{NodeId{static_cast<std::uint32_t>(b.nodes.size())},
                               parse_role(n.at("role").get<std::string>()),
                               n.at("name").get<std::string>()});
      detail::read_opt(s, "mean_low", b.spec.mean_low);
      detail::read_opt(s, "mean_high", b.spec.mean_high);
      detail::read_opt(s, "std_choices", b.spec.std_choices);
      if (s.contains("regime")) b.spec.regime = parse_regime(s.at("regime").get<std::string>());
      detail::read_opt(s, "seed", b.spec.seed);
      detail::read_opt(s, "duration_s", b.duration_s);
      detail::read_opt(s, "step_ms", b.step_ms);
      m.synthetic = std::move(b);
    }
    for (const auto& p : doc.at("pairs")) {
      SessionPair pair;
      pair.endpoint = p.at("endpoint").get<std::string>();
      pair.user = p.at("user").get<std::string>();
      if (p.contains("direction")) pair.direction = parse_direction(p.at("direction").get<std::string>());
      if (p.contains("relays")) pair.relays = p.at("relays").get<std::vector<std::string>>();
      m.pairs.push_back(std::move(pair));
    }
    if (doc.contains("session")) {
      const auto& s = doc.at("session");
      auto& d = m.defaults;
      detail::read_opt(s, "packet_interval_ms", d.packet_interval);
      detail::read_opt(s, "packets", d.packet_count);
      detail::read_opt(s, "packet_size", d.packet_size);
      detail::read_opt(s, "warmup_s", d.warmup_s);
      detail::read_opt(s, "confidence", d.confidence);
      detail::read_opt(s, "ucb_c", d.ucb_c);
      detail::read_opt(s, "seed", d.seed);
      detail::read_opt(s, "latency_noise_frac", d.latency_noise_frac);
      if (s.contains("loss_threshold") && !s.at("loss_threshold").is_null())
        d.loss_threshold = s.at("loss_threshold").get<double>();
      if (s.contains("jitter")) d.jitter = parse_jitter_config(s.at("jitter"));
    }
    if (doc.contains("methods")) {
      m.methods.clear();
      for (const auto& name : doc.at("methods")) m.methods.push_back(parse_method(name.get<std::string>()));
    }
    if (doc.contains("output_dir")) m.output_dir = doc.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

inline ExperimentManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

inline std::shared_ptr<const Topology> materialize_topology(const ExperimentManifest& m) {
  if (m.topology) return std::make_shared<const Topology>(load_topology_manifest(*m.topology));
  const auto& s = *m.synthetic;
  return std::make_shared<const Topology>(
      generate_synthetic(s.spec, s.nodes, mesh_links(s.nodes), s.duration_s * 1000.0, s.step_ms));
}

// One SessionConfig per pair, each with the manifest's defaults.
inline std::vector<SessionConfig> session_configs(const ExperimentManifest& m,
                                                  std::shared_ptr<const Topology> topo) {
  std::vector<SessionConfig> out;
  for (const auto& p : m.pairs) {
    SessionConfig c = m.defaults;
    c.topology = topo;
    c.endpoint = p.endpoint;
    c.user = p.user;
    c.direction = p.direction;
    c.relays = p.relays;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace vcsim
