#pragma once

// Deterministic discrete-event session simulator.
//
// One session is one directed stream between an endpoint and a user. Events
// share a single queue ordered by (time, kind, sequence); at equal times
// arrivals run before feedback, feedback before control messages, and control
// messages before packet generation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <atomic>
#include <future>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcsim/jitter.hpp"
#include "vcsim/pathing.hpp"
#include "vcsim/routers.hpp"
#include "vcsim/trace_net.hpp"

namespace vcsim {

inline constexpr int kReportSchemaVersion = 1;

struct Method {
  RouterKind router = RouterKind::direct;
  JitterKind jitter = JitterKind::buffer;
  friend bool operator==(const Method&, const Method&) = default;
};

inline std::string label(const Method& m) {
  std::string r = m.router == RouterKind::direct   ? "DRT"
                  : m.router == RouterKind::via_ucb1 ? "VIA"
                                                     : "VCR";
  return r + (m.jitter == JitterKind::buffer ? "-BF" : "-WM");
}

inline Method parse_method(std::string_view s) {
  const auto dash = s.find('-');
  if (dash == std::string_view::npos) throw ValidationError("method must look like VCR-WM");
  return Method{parse_router(s.substr(0, dash)), parse_jitter(s.substr(dash + 1))};
}

inline std::vector<Method> paper_methods() {
  return {{RouterKind::direct, JitterKind::buffer},
          {RouterKind::direct, JitterKind::watermark},
          {RouterKind::via_ucb1, JitterKind::buffer},
          {RouterKind::via_ucb1, JitterKind::watermark},
          {RouterKind::vcroute_ts, JitterKind::watermark}};
}

enum class Direction { downlink, uplink };

inline Direction parse_direction(std::string_view s) {
  if (s == "downlink") return Direction::downlink;
  if (s == "uplink") return Direction::uplink;
  throw ValidationError("unknown direction '" + std::string(s) + "'");
}

inline std::string_view to_string(Direction d) { return d == Direction::downlink ? "downlink" : "uplink"; }

struct SessionConfig {
  std::shared_ptr<const Topology> topology;
  std::string endpoint;
  std::string user;
  std::optional<std::vector<std::string>> relays;  // default: every other endpoint/relay node
  Direction direction = Direction::downlink;

  Millis packet_interval = 10;
  std::uint64_t packet_count = 600000;
  std::uint32_t packet_size = 160;

  Method method;
  double ucb_c = 1.0;
  double confidence = 0.95;
  double warmup_s = 60;
  JitterConfig jitter;

  std::uint64_t seed = 1;
  std::uint64_t session_index = 0;
  std::uint64_t method_index = 0;
  std::optional<double> loss_threshold;
  double latency_noise_frac = 0;

  void validate() const {
    if (!topology) throw ConfigError("session has no topology");
    if (!(packet_interval > 0)) throw ValidationError("packet_interval must be > 0");
    if (!(warmup_s >= 0)) throw ValidationError("warmup_s must be >= 0");
    if (!(confidence > 0 && confidence < 1)) throw ValidationError("confidence must be in (0,1)");
    if (!(ucb_c >= 0)) throw ValidationError("ucb_c must be >= 0");
    if (latency_noise_frac < 0) throw ValidationError("latency_noise_frac must be >= 0");
    if (loss_threshold && !(*loss_threshold > 0 && *loss_threshold <= 1))
      throw ValidationError("loss threshold must be in (0,1]");
    jitter.validate();
  }
};

enum class Fate { delivered, dropped_late };

struct PacketRecord {
  std::uint64_t seq = 0;
  Millis ts = 0;
  Millis ta = 0;
  Millis to = 0;  // meaningful only when delivered
  PathId path;
  std::uint64_t plan_version = 0;
  Fate fate = Fate::delivered;

  Millis end_to_end() const { return to - ts; }
};

struct CdfRow {
  Millis latency = 0;
  double fraction = 0;
  friend bool operator==(const CdfRow&, const CdfRow&) = default;
};

// Sorted distinct latencies with the fraction of samples at or below each.
inline std::vector<CdfRow> compute_cdf(std::vector<Millis> latencies) {
  std::vector<CdfRow> rows;
  if (latencies.empty()) return rows;
  std::sort(latencies.begin(), latencies.end());
  const double n = static_cast<double>(latencies.size());
  for (std::size_t i = 0; i < latencies.size(); ++i)
    if (i + 1 == latencies.size() || latencies[i + 1] != latencies[i])
      rows.push_back({latencies[i], static_cast<double>(i + 1) / n});
  rows.back().fraction = 1.0;
  return rows;
}

inline std::vector<CdfRow> compute_cdf(const std::vector<PacketRecord>& records) {
  std::vector<Millis> lat;
  for (const auto& r : records)
    if (r.fate == Fate::delivered) lat.push_back(r.end_to_end());
  return compute_cdf(std::move(lat));
}

// Nearest rank: the ceil(p*n)-th smallest value, so p50 of an even count is
// the lower midpoint.
inline Millis nearest_rank(const std::vector<Millis>& sorted, double p) {
  if (sorted.empty()) return 0;
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

struct LatencySummary {
  Millis mean = 0, p10 = 0, p50 = 0, p90 = 0, p99 = 0, max = 0;
};

inline LatencySummary summarize(std::vector<Millis> latencies) {
  LatencySummary s;
  if (latencies.empty()) return s;
  std::sort(latencies.begin(), latencies.end());
  double sum = 0;
  for (auto v : latencies) sum += v;
  s.mean = sum / static_cast<double>(latencies.size());
  s.p10 = nearest_rank(latencies, 0.10);
  s.p50 = nearest_rank(latencies, 0.50);
  s.p90 = nearest_rank(latencies, 0.90);
  s.p99 = nearest_rank(latencies, 0.99);
  s.max = latencies.back();
  return s;
}

struct PathChange {
  Millis at = 0;
  PathId from;
  PathId to;
};

struct MetricsReport {
  std::string endpoint;
  std::string user;
  Direction direction = Direction::downlink;
  std::string method;
  std::uint64_t seed = 0;

  std::uint64_t generated = 0;
  std::uint64_t dropped = 0;
  double loss_rate = 0;
  LatencySummary latency;
  std::vector<CdfRow> cdf;

  std::uint64_t plan_update_count = 0;
  std::uint64_t path_change_count = 0;
  std::vector<PathChange> path_change_log;
  Millis control_delay_total = 0;
  Millis overhead_per_packet = 0;

  std::vector<std::string> topk_paths;
  std::optional<double> loss_threshold;
  bool loss_constraint_violated = false;
  Millis final_lag = 0;
};

struct PlanUpdate {
  std::uint64_t version = 0;
  PathId path;
  Millis issued_at = 0;
  Millis arrives_at = 0;  // at the sender
};

struct SessionResult {
  MetricsReport report;
  std::vector<PacketRecord> records;
  std::vector<PlanUpdate> plan_updates;
};

namespace detail {

enum class EventKind : int { arrival = 0, feedback = 1, control = 2, generation = 3 };

struct Event {
  Millis time = 0;
  EventKind kind = EventKind::generation;
  std::uint64_t order = 0;  // sequence number, or insertion counter
  std::uint64_t seq = 0;
  PathId path;
  double value = 0;
  std::uint64_t version = 0;

  bool operator>(const Event& o) const {
    if (time != o.time) return time > o.time;
    if (kind != o.kind) return static_cast<int>(kind) > static_cast<int>(o.kind);
    return order > o.order;
  }
};

inline std::vector<NodeId> default_relays(const Topology& topo, NodeId endpoint, NodeId user) {
  std::vector<NodeId> out;
  for (const auto& n : topo.nodes())
    if (n.id != endpoint && n.id != user && n.role != NodeRole::user) out.push_back(n.id);
  return out;
}

}  // namespace detail

inline SessionResult run_session(const SessionConfig& cfg) {
  cfg.validate();
  const Topology& topo = *cfg.topology;
  const NodeId endpoint = topo.id_of(cfg.endpoint);
  const NodeId user = topo.id_of(cfg.user);
  std::vector<NodeId> relays;
  if (cfg.relays)
    for (const auto& r : *cfg.relays) relays.push_back(topo.id_of(r));
  else
    relays = detail::default_relays(topo, endpoint, user);

  const bool downlink = cfg.direction == Direction::downlink;
  const NodeId sender = downlink ? endpoint : user;
  const NodeId receiver = downlink ? user : endpoint;
  const Millis start = cfg.warmup_s * 1000.0;

  // All configuration checks happen before the first event.
  PathSet paths{sender, receiver, enumerate_paths(sender, receiver, relays), {}, {}};
  if (cfg.method.router == RouterKind::direct) {
    require_links(paths.all_paths.front(), topo);
    paths.stats.resize(paths.all_paths.size());
    paths.topk = {kDirectPath};
  } else {
    if (!topo.has_link(endpoint, user) || !topo.has_link(user, endpoint))
      throw ConfigError("scheduler needs direct traces in both directions between " + cfg.endpoint +
                        " and " + cfg.user);
    paths = build_path_set(topo, sender, receiver, relays, 0.0, start, cfg.packet_interval,
                           cfg.confidence);
  }

  auto router = make_router(cfg.method.router, paths, cfg.ucb_c,
                            derive_rng(cfg.seed, cfg.session_index, 1 + cfg.method_index));
  auto jitter = make_jitter_manager(cfg.method.jitter, cfg.jitter, cfg.packet_interval);
  auto noise_rng = derive_rng(cfg.seed, cfg.session_index, 0);
  std::normal_distribution<double> noise(0.0, 1.0);

  // The default plan is the best path by warmup mean.
  PathId initial = paths.topk.front();
  for (auto id : paths.topk)
    if (paths.stats[id.value].mean < paths.stats[initial.value].mean) initial = id;
  RoutingPlan scheduler_plan{initial, 0, start};
  RoutingPlan sender_plan = scheduler_plan;

  SessionResult result;
  auto& rep = result.report;
  rep.endpoint = cfg.endpoint;
  rep.user = cfg.user;
  rep.direction = cfg.direction;
  rep.method = label(cfg.method);
  rep.seed = cfg.seed;
  rep.generated = cfg.packet_count;
  rep.loss_threshold = cfg.loss_threshold;
  for (auto id : paths.topk) rep.topk_paths.push_back(describe(paths.path(id), topo));

  auto& records = result.records;
  records.resize(cfg.packet_count);

  std::priority_queue<detail::Event, std::vector<detail::Event>, std::greater<>> queue;
  std::uint64_t counter = 0;
  auto push = [&](detail::Event e) {
    e.order = e.kind == detail::EventKind::arrival || e.kind == detail::EventKind::generation
                  ? e.seq
                  : counter++;
    queue.push(e);
  };

  const FeedbackKind feedback = router->feedback();
  auto send_feedback = [&](Millis at, PathId path, Millis value) {
    detail::Event e;
    e.time = at + topo.link_latency(user, endpoint, at);
    e.kind = detail::EventKind::feedback;
    e.path = path;
    e.value = value;
    push(e);
  };

  if (cfg.packet_count > 0) {
    detail::Event g;
    g.time = start;
    g.kind = detail::EventKind::generation;
    g.seq = 0;
    push(g);
  }

  std::optional<PathId> last_path;
  Millis end_time = start;

  while (!queue.empty()) {
    const detail::Event ev = queue.top();
    queue.pop();
    switch (ev.kind) {
      case detail::EventKind::generation: {
        const Millis now = ev.time;
        const auto [plan, issued] = maybe_update_plan(scheduler_plan, router->select(), now);
        if (issued) {
          scheduler_plan = plan;
          const Millis delay = topo.link_latency(endpoint, user, now);
          ++rep.plan_update_count;
          rep.control_delay_total += delay;
          result.plan_updates.push_back({plan.version, plan.current_path, now, now + delay});
          detail::Event c;
          c.time = now + delay;
          c.kind = detail::EventKind::control;
          c.path = plan.current_path;
          c.version = plan.version;
          push(c);
        }
        const PathId path = sender_plan.current_path;
        if (last_path && *last_path != path) {
          ++rep.path_change_count;
          rep.path_change_log.push_back({now, *last_path, path});
        }
        last_path = path;

        Millis transit = path_latency(paths.path(path), topo, now);
        if (cfg.latency_noise_frac > 0)
          transit = std::max(transit * (1.0 + cfg.latency_noise_frac * noise(noise_rng)), 0.1 * transit);
        auto& rec = records[ev.seq];
        rec.seq = ev.seq;
        rec.ts = now;
        rec.ta = now + transit;
        rec.path = path;
        rec.plan_version = sender_plan.version;

        detail::Event a;
        a.time = rec.ta;
        a.kind = detail::EventKind::arrival;
        a.seq = ev.seq;
        push(a);
        if (ev.seq + 1 < cfg.packet_count) {
          detail::Event g;
          g.time = start + static_cast<double>(ev.seq + 1) * cfg.packet_interval;
          g.kind = detail::EventKind::generation;
          g.seq = ev.seq + 1;
          push(g);
        }
        break;
      }
      case detail::EventKind::arrival: {
        auto& rec = records[ev.seq];
        end_time = std::max(end_time, ev.time);
        const auto outcome = jitter->on_arrival(Packet{rec.seq, rec.ts, rec.ta, cfg.packet_size});
        if (feedback == FeedbackKind::transmitting) send_feedback(rec.ta, rec.path, rec.ta - rec.ts);
        if (outcome.dropped) {
          rec.fate = Fate::dropped_late;
          ++rep.dropped;
          // A drop never gets an emission time; its arrival lateness stands in.
          if (feedback == FeedbackKind::end_to_end) send_feedback(rec.ta, rec.path, rec.ta - rec.ts);
        }
        for (const auto& e : outcome.emitted) {
          auto& out = records[e.packet.seq];
          out.to = e.emitted_at;
          out.fate = Fate::delivered;
          if (feedback == FeedbackKind::end_to_end) send_feedback(out.to, out.path, out.to - out.ts);
        }
        break;
      }
      case detail::EventKind::feedback:
        router->observe(ev.path, ev.value);
        break;
      case detail::EventKind::control:
        if (ev.version > sender_plan.version) sender_plan = RoutingPlan{ev.path, ev.version, ev.time};
        break;
    }
  }

  for (const auto& e : jitter->flush(end_time)) {
    auto& out = records[e.packet.seq];
    out.to = e.emitted_at;
    out.fate = Fate::delivered;
  }

  std::vector<Millis> latencies;
  latencies.reserve(records.size());
  for (const auto& r : records)
    if (r.fate == Fate::delivered) latencies.push_back(r.end_to_end());
  rep.latency = summarize(latencies);
  rep.cdf = compute_cdf(std::move(latencies));
  rep.loss_rate = rep.generated ? static_cast<double>(rep.dropped) / static_cast<double>(rep.generated) : 0.0;
  rep.overhead_per_packet = rep.generated ? rep.control_delay_total / static_cast<double>(rep.generated) : 0.0;
  rep.loss_constraint_violated = cfg.loss_threshold && rep.loss_rate > *cfg.loss_threshold;
  rep.final_lag = jitter->lag();
  return result;
}

// Relative mean-latency reduction of `ours` against `base`.
inline double reduction(const MetricsReport& base, const MetricsReport& ours) {
  if (base.latency.mean == 0) return 0;
  return (base.latency.mean - ours.latency.mean) / base.latency.mean;
}

struct MatrixCell {
  std::size_t session = 0;
  std::size_t method = 0;
  MetricsReport report;
};

struct MatrixResult {
  std::vector<Method> methods;
  std::vector<MatrixCell> cells;  // session-major

  const MetricsReport& at(std::size_t session, std::size_t method) const {
    return cells.at(session * methods.size() + method).report;
  }
  std::size_t sessions() const { return methods.empty() ? 0 : cells.size() / methods.size(); }
};

// Every session runs under every method with the session's seed; the router
// stream is further keyed by the method index. Cells run on up to `jobs`
// threads and are merged in (session, method) order.
inline MatrixResult run_matrix(const std::vector<SessionConfig>& sessions,
                               const std::vector<Method>& methods, unsigned jobs = 1) {
  if (sessions.empty()) throw ValidationError("matrix needs at least one session");
  if (methods.empty()) throw ValidationError("matrix needs at least one method");
  std::vector<SessionConfig> cfgs;
  for (std::size_t s = 0; s < sessions.size(); ++s)
    for (std::size_t m = 0; m < methods.size(); ++m) {
      SessionConfig c = sessions[s];
      c.method = methods[m];
      c.session_index = s;
      c.method_index = m;
      c.validate();
      cfgs.push_back(std::move(c));
    }

  MatrixResult out;
  out.methods = methods;
  out.cells.resize(cfgs.size());
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cfgs.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfgs.size(); i = next++)
      out.cells[i] = MatrixCell{i / methods.size(), i % methods.size(), run_session(cfgs[i]).report};
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::json to_json(const MetricsReport& r, bool include_cdf = true) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["endpoint"] = r.endpoint;
  j["user"] = r.user;
  j["direction"] = std::string(to_string(r.direction));
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["generated"] = r.generated;
  j["dropped"] = r.dropped;
  j["loss_rate"] = r.loss_rate;
  j["latency_ms"] = {{"mean", r.latency.mean}, {"p10", r.latency.p10}, {"p50", r.latency.p50},
                     {"p90", r.latency.p90},   {"p99", r.latency.p99}, {"max", r.latency.max}};
  j["plan_update_count"] = r.plan_update_count;
  j["path_change_count"] = r.path_change_count;
  auto& log = j["path_change_log"] = nlohmann::json::array();
  for (const auto& c : r.path_change_log) log.push_back({c.at, c.from.value, c.to.value});
  j["control_delay_total_ms"] = r.control_delay_total;
  j["overhead_per_packet_ms"] = r.overhead_per_packet;
  j["topk_paths"] = r.topk_paths;
  j["loss_threshold"] = r.loss_threshold ? nlohmann::json(*r.loss_threshold) : nlohmann::json();
  j["loss_constraint_violated"] = r.loss_constraint_violated;
  j["final_lag_ms"] = r.final_lag;
  j["conventions"] = {
      {"end_to_end", "emission time minus generation time, delivered packets only"},
      {"tail", "packets still pending at session end are emitted at the last arrival time"},
      {"feedback", "receiver reports reach the scheduler after one direct user->endpoint hop"},
      {"drop_reward", "a dropped packet reports its transmitting latency"},
      {"percentiles", "nearest rank"}};
  if (include_cdf) {
    auto& cdf = j["cdf"] = nlohmann::json::array();
    for (const auto& row : r.cdf) cdf.push_back({row.latency, row.fraction});
  }
  return j;
}

inline void write_cdf_csv(std::ostream& out, const std::vector<CdfRow>& cdf) {
  out << "latency_ms,cum_fraction\n";
  for (const auto& row : cdf) out << format_double(row.latency) << ',' << format_double(row.fraction) << '\n';
}

inline constexpr std::string_view kSummaryCsvHeader =
    "schema_version,session,endpoint,user,direction,method,seed,packets,dropped,loss_rate,"
    "mean_ms,p10_ms,p50_ms,p90_ms,p99_ms,max_ms,plan_updates,path_changes,"
    "overhead_ms_per_packet,k,loss_constraint_violated";

inline void write_summary_row(std::ostream& out, std::size_t session, const MetricsReport& r) {
  out << kReportSchemaVersion << ',' << session << ',' << r.endpoint << ',' << r.user << ','
      << to_string(r.direction) << ',' << r.method << ',' << r.seed << ',' << r.generated << ','
      << r.dropped << ',' << format_double(r.loss_rate) << ',' << format_double(r.latency.mean) << ','
      << format_double(r.latency.p10) << ',' << format_double(r.latency.p50) << ','
      << format_double(r.latency.p90) << ',' << format_double(r.latency.p99) << ','
      << format_double(r.latency.max) << ',' << r.plan_update_count << ',' << r.path_change_count
      << ',' << format_double(r.overhead_per_packet) << ',' << r.topk_paths.size() << ','
      << (r.loss_constraint_violated ? 1 : 0) << '\n';
}

}  // namespace vcsim
