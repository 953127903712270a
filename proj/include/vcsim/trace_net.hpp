#pragma once

// Per-link one-way latency traces and the topology that owns them.
//
// A trace is replayed with a zero-order hold: the latency at time t is the
// value of the latest sample at or before t. Times before the first sample
// read the first sample and times after the last sample read the last one,
// so replay never wraps.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcsim/errors.hpp"
#include "vcsim/types.hpp"

namespace vcsim {

struct LatencySample {
  Millis t = 0;
  Millis latency = 0;
  friend bool operator==(const LatencySample&, const LatencySample&) = default;
};

struct LatencyTrace {
  std::string src;
  std::string dst;
  std::vector<LatencySample> samples;

  friend bool operator==(const LatencyTrace&, const LatencyTrace&) = default;
};

enum class TraceUnit { one_way, rtt };

inline TraceUnit parse_trace_unit(std::string_view s) {
  if (s == "one-way" || s == "one_way") return TraceUnit::one_way;
  if (s == "rtt") return TraceUnit::rtt;
  throw ValidationError("unknown trace unit '" + std::string(s) + "'");
}

inline void validate_trace(const LatencyTrace& trace) {
  const std::string name = trace.src + "->" + trace.dst;
  if (trace.samples.empty()) throw ValidationError("trace " + name + " has no samples");
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    if (!std::isfinite(s.t) || s.t < 0)
      throw ValidationError("trace " + name + ": bad timestamp at sample " + std::to_string(i));
    if (!std::isfinite(s.latency) || s.latency <= 0)
      throw ValidationError("trace " + name + ": latency must be positive at sample " +
                            std::to_string(i));
    if (i > 0 && s.t <= trace.samples[i - 1].t)
      throw ValidationError("trace " + name + ": timestamps not strictly increasing at sample " +
                            std::to_string(i));
  }
}

// Zero-order hold lookup.
inline Millis sample_latency(const LatencyTrace& trace, Millis t) {
  const auto& s = trace.samples;
  auto it = std::upper_bound(s.begin(), s.end(), t,
                             [](Millis v, const LatencySample& x) { return v < x.t; });
  if (it == s.begin()) return s.front().latency;
  return std::prev(it)->latency;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_number(std::string_view s, std::size_t line, const char* field) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw ParseError(line, std::string("invalid ") + field + " '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline constexpr std::string_view kTraceCsvHeader = "timestamp_ms,src_node,dst_node,latency_ms";

// Parses a trace CSV that may hold rows for several links. Traces are
// returned in order of first appearance; per-link timestamps must be
// strictly increasing in file order.
inline std::vector<LatencyTrace> parse_traces(std::istream& in, TraceUnit unit) {
  std::vector<LatencyTrace> traces;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::string raw;
  std::size_t line_no = 0;
  bool seen_header = false;

  while (std::getline(in, raw)) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!seen_header) {
      if (line != kTraceCsvHeader)
        throw ParseError(line_no, "expected header '" + std::string(kTraceCsvHeader) + "'");
      seen_header = true;
      continue;
    }
    auto fields = detail::split_csv(line);
    if (fields.size() != 4)
      throw ParseError(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    const double t = detail::parse_number(fields[0], line_no, "timestamp");
    const double lat = detail::parse_number(fields[3], line_no, "latency");
    if (fields[1].empty() || fields[2].empty()) throw ParseError(line_no, "empty node name");
    if (fields[1] == fields[2]) throw ParseError(line_no, "self link");
    if (!std::isfinite(t) || t < 0) throw ParseError(line_no, "timestamp must be finite and >= 0");
    if (!std::isfinite(lat) || lat <= 0) throw ParseError(line_no, "latency must be positive");

    auto key = std::make_pair(std::string(fields[1]), std::string(fields[2]));
    auto [it, inserted] = index.try_emplace(key, traces.size());
    if (inserted) traces.push_back(LatencyTrace{key.first, key.second, {}});
    auto& trace = traces[it->second];
    if (!trace.samples.empty() && t <= trace.samples.back().t)
      throw ParseError(line_no, "timestamps not strictly increasing for link " + key.first +
                                    "->" + key.second);
    trace.samples.push_back({t, unit == TraceUnit::rtt ? lat / 2.0 : lat});
  }
  if (traces.empty()) throw ValidationError("trace file holds no samples");
  return traces;
}

inline std::vector<LatencyTrace> ingest_traces(const std::filesystem::path& file, TraceUnit unit) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open trace file " + file.string());
  try {
    return parse_traces(in, unit);
  } catch (const ParseError& e) {
    throw ParseError(file.string(), e.line(), e.message());
  } catch (const ValidationError& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

// Single-link form: the file must describe exactly one directed link.
inline LatencyTrace ingest_trace(const std::filesystem::path& file, TraceUnit unit) {
  auto traces = ingest_traces(file, unit);
  if (traces.size() != 1)
    throw ValidationError(file.string() + ": expected one link, found " +
                          std::to_string(traces.size()));
  return std::move(traces.front());
}

inline void write_traces(std::ostream& out, const std::vector<const LatencyTrace*>& traces) {
  out << kTraceCsvHeader << '\n';
  for (const auto* trace : traces)
    for (const auto& s : trace->samples)
      out << format_double(s.t) << ',' << trace->src << ',' << trace->dst << ','
          << format_double(s.latency) << '\n';
}

inline void write_trace(std::ostream& out, const LatencyTrace& trace) {
  write_traces(out, {&trace});
}

class Topology {
public:
  NodeId add_node(const std::string& name, NodeRole role) {
    if (name.empty()) throw ValidationError("empty node name");
    if (by_name_.count(name)) throw ValidationError("duplicate node '" + name + "'");
    NodeId id{static_cast<std::uint32_t>(nodes_.size())};
    nodes_.push_back(Node{id, role, name});
    by_name_.emplace(name, id);
    return id;
  }

  void add_trace(LatencyTrace trace) {
    validate_trace(trace);
    const Link link{id_of(trace.src), id_of(trace.dst)};
    if (traces_.count(link))
      throw ValidationError("duplicate trace for link " + trace.src + "->" + trace.dst);
    traces_.emplace(link, std::move(trace));
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(id.value); }
  const std::map<Link, LatencyTrace>& traces() const { return traces_; }

  std::optional<NodeId> find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  NodeId id_of(std::string_view name) const {
    auto id = find(name);
    if (!id) throw ConfigError("unknown node '" + std::string(name) + "'");
    return *id;
  }

  std::vector<NodeId> nodes_with_role(NodeRole role) const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
      if (n.role == role) out.push_back(n.id);
    return out;
  }

  bool has_link(NodeId a, NodeId b) const { return traces_.count(Link{a, b}) != 0; }

  const LatencyTrace& trace(NodeId a, NodeId b) const {
    auto it = traces_.find(Link{a, b});
    if (it == traces_.end())
      throw ConfigError("no trace for link " + node(a).name + "->" + node(b).name);
    return it->second;
  }

  Millis link_latency(NodeId a, NodeId b, Millis t) const { return sample_latency(trace(a, b), t); }

  // Latest timestamp covered by every trace (before hold-last kicks in).
  Millis coverage_end() const {
    Millis end = std::numeric_limits<Millis>::infinity();
    for (const auto& [link, trace] : traces_) end = std::min(end, trace.samples.back().t);
    return traces_.empty() ? 0.0 : end;
  }

private:
  std::vector<Node> nodes_;
  std::map<std::string, NodeId> by_name_;
  std::map<Link, LatencyTrace> traces_;
};

// Topology manifest: {"schema_version":1,"nodes":[{"name","role"}],
// "traces":[{"file","unit"}]}. Trace paths are relative to the manifest.
inline constexpr int kTopologySchemaVersion = 1;

inline Topology load_topology_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ValidationError("cannot open topology manifest " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest.string() + ": " + e.what());
  }
  Topology topo;
  try {
    if (doc.value("schema_version", kTopologySchemaVersion) != kTopologySchemaVersion)
      throw ValidationError("unsupported topology schema_version");
    for (const auto& n : doc.at("nodes"))
      topo.add_node(n.at("name").get<std::string>(), parse_role(n.at("role").get<std::string>()));
    const auto base = manifest.parent_path();
    for (const auto& t : doc.at("traces")) {
      const auto unit = parse_trace_unit(t.value("unit", std::string("one-way")));
      for (auto& trace : ingest_traces(base / t.at("file").get<std::string>(), unit))
        topo.add_trace(std::move(trace));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(manifest.string() + ": " + e.what());
  }
  return topo;
}

// Writes one CSV per link under `dir/traces/` and `dir/topology.json`.
inline std::filesystem::path write_topology(const Topology& topo, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "traces");
  nlohmann::json doc;
  doc["schema_version"] = kTopologySchemaVersion;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& n : topo.nodes())
    doc["nodes"].push_back({{"name", n.name}, {"role", std::string(to_string(n.role))}});
  doc["traces"] = nlohmann::json::array();
  for (const auto& [link, trace] : topo.traces()) {
    const std::string rel = "traces/" + trace.src + "__" + trace.dst + ".csv";
    std::ofstream out(dir / rel);
    if (!out) throw std::runtime_error("cannot write " + (dir / rel).string());
    write_trace(out, trace);
    doc["traces"].push_back({{"file", rel}, {"unit", "one-way"}});
  }
  const auto path = dir / "topology.json";
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  return path;
}

// ---------------------------------------------------------------------------
// Synthetic traces

enum class Regime { stationary_gaussian, regime_switching_spikes };

inline Regime parse_regime(std::string_view s) {
  if (s == "stationary-gaussian" || s == "stationary") return Regime::stationary_gaussian;
  if (s == "regime-switching-spikes" || s == "spikes") return Regime::regime_switching_spikes;
  throw ValidationError("unknown regime '" + std::string(s) + "'");
}

inline std::string_view to_string(Regime r) {
  return r == Regime::stationary_gaussian ? "stationary-gaussian" : "regime-switching-spikes";
}

struct SyntheticTraceSpec {
  Millis mean_low = 100;
  Millis mean_high = 200;
  std::vector<Millis> std_choices{10, 20, 30};
  Regime regime = Regime::stationary_gaussian;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(mean_low > 0) || !(mean_low < mean_high))
      throw ValidationError("mean_range must satisfy 0 < low < high");
    if (std_choices.empty()) throw ValidationError("std_choices must be nonempty");
    for (auto s : std_choices)
      if (!(s > 0)) throw ValidationError("every std choice must be > 0");
  }
};

struct LinkProfile {
  Millis mean = 100;
  Millis std = 10;
};

struct SpikeParams {
  double start_probability = 0.01;
  double factor_low = 2.0;
  double factor_high = 10.0;
  double mean_duration_samples = 20.0;
};

inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

// Samples every `step` ms over [0, duration]. Gaussian values are floored at
// a tenth of the mean so latencies stay positive. In the spike regime a burst
// starts with small probability on any non-burst sample and multiplies the
// latency by a uniform factor for a geometric number of samples.
inline std::vector<LatencySample> generate_link_samples(const LinkProfile& profile, Regime regime,
                                                        Millis duration, Millis step,
                                                        std::mt19937_64& rng,
                                                        const SpikeParams& spikes = {}) {
  if (!(duration > 0) || !(step > 0)) throw ValidationError("duration and step must be > 0");
  if (!(profile.mean > 0) || profile.std < 0) throw ValidationError("bad link profile");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> factor_dist(spikes.factor_low, spikes.factor_high);
  std::geometric_distribution<int> burst_len(1.0 / spikes.mean_duration_samples);

  const auto count = static_cast<std::size_t>(std::floor(duration / step)) + 1;
  std::vector<LatencySample> out;
  out.reserve(count);
  int burst_left = 0;
  double factor = 1.0;
  for (std::size_t i = 0; i < count; ++i) {
    double lat = std::max(profile.mean + profile.std * noise(rng), 0.1 * profile.mean);
    if (regime == Regime::regime_switching_spikes) {
      if (burst_left == 0 && unit(rng) < spikes.start_probability) {
        factor = factor_dist(rng);
        burst_left = burst_len(rng) + 1;
      }
      if (burst_left > 0) {
        lat *= factor;
        --burst_left;
      }
    }
    out.push_back({static_cast<double>(i) * step, lat});
  }
  return out;
}

// Full mesh of directed links, excluding user-to-user pairs.
inline std::vector<Link> mesh_links(const std::vector<Node>& nodes) {
  std::vector<Link> links;
  for (const auto& a : nodes)
    for (const auto& b : nodes)
      if (a.id != b.id && !(a.role == NodeRole::user && b.role == NodeRole::user))
        links.push_back({a.id, b.id});
  return links;
}

// Pure function of its arguments: link i draws from a stream keyed by (seed, i).
inline Topology generate_synthetic(const SyntheticTraceSpec& spec, const std::vector<Node>& nodes,
                                   const std::vector<Link>& links, Millis duration, Millis step) {
  spec.validate();
  if (links.empty()) throw ValidationError("no links to synthesize");
  if (!(duration > 0) || !(step > 0)) throw ValidationError("duration and step must be > 0");
  Topology topo;
  for (const auto& n : nodes) topo.add_node(n.name, n.role);
  for (std::size_t i = 0; i < links.size(); ++i) {
    auto rng = derive_rng(spec.seed, i);
    std::uniform_real_distribution<double> mean_dist(spec.mean_low, spec.mean_high);
    std::uniform_int_distribution<std::size_t> std_pick(0, spec.std_choices.size() - 1);
    LinkProfile profile{mean_dist(rng), spec.std_choices[std_pick(rng)]};
    LatencyTrace trace{topo.node(links[i].src).name, topo.node(links[i].dst).name,
                       generate_link_samples(profile, spec.regime, duration, step, rng)};
    topo.add_trace(std::move(trace));
  }
  return topo;
}

// Explicit per-link profiles, for controlled scenarios.
inline Topology generate_from_profiles(const std::vector<Node>& nodes,
                                       const std::map<Link, LinkProfile>& profiles, Regime regime,
                                       Millis duration, Millis step, std::uint64_t seed) {
  Topology topo;
  for (const auto& n : nodes) topo.add_node(n.name, n.role);
  std::uint64_t i = 0;
  for (const auto& [link, profile] : profiles) {
    auto rng = derive_rng(seed, i++);
    topo.add_trace(LatencyTrace{topo.node(link.src).name, topo.node(link.dst).name,
                                generate_link_samples(profile, regime, duration, step, rng)});
  }
  return topo;
}

}  // namespace vcsim
