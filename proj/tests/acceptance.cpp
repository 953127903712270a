// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scenarios.hpp"
#include "vcsim/vcsim.hpp"

using namespace vcsim;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no runtime bound
  std::function<Verdict()> body;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// ---------------------------------------------------------------------------

Verdict conjugate_update() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(1, 500), logp(-6, 1), x(1, 1000);
  std::uniform_int_distribution<int> size(1, 32);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    GaussianArmPosterior a{PathId{0}, mu(rng), std::exp(logp(rng)), std::exp(logp(rng)), 0};
    std::vector<double> batch(size(rng));
    for (auto& v : batch) v = x(rng);
    long double sum = 0;
    for (auto v : batch) sum += v;
    const long double tau = a.tau + batch.size() * static_cast<long double>(a.tau0);
    const long double m = (a.tau * static_cast<long double>(a.mu) + a.tau0 * sum) / tau;
    const auto got = ts_update(a, batch);
    auto seq = a;
    for (auto v : batch) seq = ts_update(seq, v);
    worst = std::max({worst, rel(got.mu, static_cast<double>(m)), rel(got.tau, static_cast<double>(tau)),
                      rel(seq.mu, got.mu), rel(seq.tau, got.tau)});
    if (got.n != batch.size() || seq.n != batch.size()) return {false, "pull count mismatch"};
  }
  return {worst <= 1e-9, fmt("10000 instances, worst relative error %.3g (bound 1e-9)", worst)};
}

Verdict bandit_correctness() {
  // Warmup stats are identical so the exploration order carries no hint.
  PathSet set;
  for (std::uint32_t i = 0; i < 3; ++i) {
    set.all_paths.push_back(RelayPath{PathId{i}, {NodeId{0}, NodeId{1}}});
    set.stats.push_back(PathStat{100, 150, 10});
    set.topk.push_back(PathId{i});
  }
  const double means[] = {200, 100, 150};  // best arm is id 1
  double share[2] = {0, 0};
  const RouterKind kinds[] = {RouterKind::vcroute_ts, RouterKind::via_ucb1};
  for (int seed = 1; seed <= 20; ++seed) {
    for (int k = 0; k < 2; ++k) {
      auto router = make_router(kinds[k], set, 1.0, derive_rng(seed, 0, 1));
      auto noise = derive_rng(seed, 0, 0);
      std::normal_distribution<double> z(0, 10);
      int best = 0;
      for (int t = 0; t < 50000; ++t) {
        const auto p = router->select();
        if (t >= 40000) best += p == PathId{1};
        router->observe(p, std::max(means[p.value] + z(noise), 1.0));
      }
      share[k] += best / 10000.0 / 20.0;
    }
  }
  return {share[0] >= 0.90 && share[1] >= 0.85,
          fmt("best-arm share over last 1e4 of 5e4 pulls, 20 seeds: TS %.4f (>=0.90), UCB1 %.4f (>=0.85)",
              share[0], share[1])};
}

Verdict path_enumeration() {
  std::string counts;
  bool ok = true;
  for (std::uint32_t r = 0; r <= 8; ++r) {
    std::vector<NodeId> relays;
    for (std::uint32_t i = 0; i < r; ++i) relays.push_back(NodeId{2 + i});
    const auto paths = enumerate_paths(NodeId{0}, NodeId{1}, relays);
    ok = ok && paths.size() == 1 + r + r * (r - 1);
    std::set<std::vector<NodeId>> distinct;
    for (const auto& p : paths) distinct.insert(p.hops);
    ok = ok && distinct.size() == paths.size();
    counts += (r ? "," : "") + std::to_string(paths.size());
  }
  const auto four = enumerate_paths(NodeId{0}, NodeId{1}, {NodeId{2}, NodeId{3}, NodeId{4}, NodeId{5}});
  ok = ok && four.size() == 17;
  return {ok, "R=0..8 -> " + counts + "; R=4 -> " + std::to_string(four.size())};
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(404);
  JitterConfig cfg;
  std::size_t mismatches = 0, emitted = 0, dropped = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto arrivals = fixtures::random_arrivals(rng, 1000);
    LagEstimator est(cfg);
    std::vector<Millis> lags;
    for (const auto& p : arrivals) lags.push_back(est.observe(p));
    const Millis end = arrivals.back().arrival;
    const auto ref = fixtures::watermark_oracle(arrivals, lags, end);

    WmJitterManager mgr(cfg);
    std::vector<fixtures::OracleEmission> got;
    std::vector<std::uint64_t> drops;
    for (const auto& p : arrivals) {
      auto r = mgr.on_arrival(p);
      if (r.dropped) drops.push_back(p.seq);
      for (const auto& e : r.emitted) got.push_back({e.packet.seq, e.emitted_at});
    }
    for (const auto& e : mgr.flush(end)) got.push_back({e.packet.seq, e.emitted_at});
    mismatches += got != ref.emitted || drops != ref.dropped;
    emitted += got.size();
    dropped += drops.size();
  }
  return {mismatches == 0, fmt("200 x 1000 packets, %zu mismatching runs (%zu emitted, %zu dropped)",
                               mismatches, emitted, dropped)};
}

// ---------------------------------------------------------------------------

SessionConfig session(std::shared_ptr<const Topology> topo, Method m, std::uint64_t seed,
                      std::uint64_t packets) {
  SessionConfig c;
  c.topology = std::move(topo);
  c.endpoint = "E";
  c.user = "U";
  c.method = m;
  c.seed = seed;
  c.packet_count = packets;
  return c;
}

// Shared by criteria 6, 7, 8 and 9.
struct HeteroRuns {
  std::vector<SessionResult> vcr, via, drt;
};
HeteroRuns& hetero() {
  static HeteroRuns runs = [] {
    HeteroRuns r;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto topo = fixtures::heterogeneous(seed, 400000);
      r.vcr.push_back(run_session(session(topo, {RouterKind::vcroute_ts, JitterKind::watermark}, seed, 30000)));
      r.via.push_back(run_session(session(topo, {RouterKind::via_ucb1, JitterKind::buffer}, seed, 30000)));
      r.drt.push_back(run_session(session(topo, {RouterKind::direct, JitterKind::watermark}, seed, 30000)));
    }
    return r;
  }();
  return runs;
}

double mean_of(const std::vector<SessionResult>& rs) {
  double s = 0;
  for (const auto& r : rs) s += r.report.latency.mean;
  return s / rs.size();
}

std::vector<SessionResult> jitter_runs;  // kept for criterion 9

Verdict oop_vs_iop() {
  double bf = 0, wm = 0, bf_loss = 0, wm_loss = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto topo = fixtures::high_jitter_pair(seed, 700000);
    auto b = run_session(session(topo, {RouterKind::direct, JitterKind::buffer}, seed, 60000));
    auto w = run_session(session(topo, {RouterKind::direct, JitterKind::watermark}, seed, 60000));
    bf += b.report.latency.mean / 5;
    wm += w.report.latency.mean / 5;
    bf_loss += b.report.loss_rate / 5;
    wm_loss += w.report.loss_rate / 5;
    jitter_runs.push_back(std::move(b));
    jitter_runs.push_back(std::move(w));
  }
  const double red = 1 - wm / bf;
  const double dloss = 100 * (wm_loss - bf_loss);
  return {red >= 0.05 && dloss <= 1.0,
          fmt("DRT-BF %.1f ms loss %.2f%%, DRT-WM %.1f ms loss %.2f%%: reduction %.1f%% (>=5%%), "
              "loss delta %+.2f pp (<=+1)",
              bf, 100 * bf_loss, wm, 100 * wm_loss, 100 * red, dloss)};
}

Verdict routing_claim() {
  const auto& r = hetero();
  const double vcr = mean_of(r.vcr), via = mean_of(r.via), drt = mean_of(r.drt);
  const double red = 1 - vcr / via;
  return {red >= 0.10 && vcr <= drt,
          fmt("VCR-WM %.1f ms, VIA-BF %.1f ms, DRT-WM %.1f ms: reduction vs VIA-BF %.1f%% (>=10%%), "
              "k=%zu",
              vcr, via, drt, 100 * red, r.vcr.front().report.topk_paths.size())};
}

Verdict plan_frugality() {
  const auto& r = hetero();
  std::uint64_t worst = 0, updates = 0, changes = 0;
  for (std::size_t i = 0; i < r.vcr.size(); ++i) {
    worst = std::max<std::uint64_t>(worst, r.vcr[i].report.plan_update_count);
    updates += r.vcr[i].report.plan_update_count;
    changes += r.via[i].report.path_change_count;
  }
  const bool pass = worst < 1500 && static_cast<double>(updates) < 0.2 * static_cast<double>(changes);
  return {pass, fmt("VCRoute plan updates per 30000 packets: max %llu (<1500); total %llu vs Via path "
                    "changes %llu (need < 20%%)",
                    static_cast<unsigned long long>(worst), static_cast<unsigned long long>(updates),
                    static_cast<unsigned long long>(changes))};
}

Verdict overhead_bound() {
  double worst = 0;
  for (const auto& s : hetero().vcr)
    worst = std::max(worst, s.report.overhead_per_packet / s.report.latency.mean);
  return {worst < 0.01, fmt("max overhead / mean latency over 5 seeds: %.4f%% (<1%%)", 100 * worst)};
}

Verdict conservation_and_determinism() {
  std::size_t violations = 0, events = 0;

  // Fuzz both reorderers with fixed and estimated lags.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lag_dist(0, 150);
  JitterConfig cfg;
  while (events < 100000) {
    const auto arrivals = fixtures::random_arrivals(rng, 1000);
    const double fixed = std::round(lag_dist(rng));
    WatermarkReorderer wm;
    ReorderBuffer buf(10);
    BufferJitterManager bmgr(cfg, 10);
    WmJitterManager wmgr(cfg);
    std::size_t out[4] = {}, drop[4] = {};
    Millis last_ts[4] = {-1, -1, -1, -1};
    Millis last_wm = kNoWatermark;
    auto take = [&](int i, const ArrivalOutcome& r, const Packet& p) {
      drop[i] += r.dropped;
      for (const auto& e : r.emitted) {
        violations += e.packet.ts < last_ts[i] || e.emitted_at < e.packet.arrival || e.emitted_at != p.arrival;
        last_ts[i] = e.packet.ts;
        ++out[i];
      }
    };
    for (const auto& p : arrivals) {
      take(0, wm.on_arrival(p, fixed), p);
      violations += wm.watermark() < last_wm;
      last_wm = wm.watermark();
      take(1, buf.on_arrival(p, fixed), p);
      take(2, bmgr.on_arrival(p), p);
      take(3, wmgr.on_arrival(p), p);
      ++events;
    }
    const Millis end = arrivals.back().arrival;
    std::vector<Emission> tails[4] = {wm.flush(end), buf.flush(end), bmgr.flush(end), wmgr.flush(end)};
    for (int i = 0; i < 4; ++i) {
      for (const auto& e : tails[i]) {
        violations += e.packet.ts < last_ts[i];
        last_ts[i] = e.packet.ts;
      }
      violations += out[i] + tails[i].size() + drop[i] != arrivals.size();
    }
  }

  // Whole sessions: delivered + dropped = generated and Ts < Ta <= To.
  auto check = [&](const SessionResult& s) {
    std::uint64_t delivered = 0;
    for (const auto& r : s.records) {
      violations += !(r.ts < r.ta);
      if (r.fate == Fate::delivered) {
        ++delivered;
        violations += !(r.ta <= r.to);
      }
    }
    violations += delivered + s.report.dropped != s.report.generated;
  };
  std::size_t sessions = 0;
  for (const auto& s : jitter_runs) check(s), ++sessions;
  for (const auto* set : {&hetero().vcr, &hetero().via, &hetero().drt})
    for (const auto& s : *set) check(s), ++sessions;

  // Same config and seed, same bytes, for every method.
  std::size_t diffs = 0;
  auto topo = fixtures::heterogeneous(11, 200000);
  for (const auto& m : paper_methods()) {
    auto c = session(topo, m, 11, 10000);
    c.latency_noise_frac = 0.05;
    diffs += to_json(run_session(c).report).dump() != to_json(run_session(c).report).dump();
  }
  auto c = session(topo, {}, 11, 5000);
  const auto a = run_matrix({c}, paper_methods(), 1), b = run_matrix({c}, paper_methods(), 3);
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    diffs += to_json(a.cells[i].report).dump() != to_json(b.cells[i].report).dump();

  return {violations == 0 && diffs == 0,
          fmt("%zu fuzz events x 4 reorderers + %zu sessions: %zu violations; %zu non-identical reports",
              events, sessions, violations, diffs)};
}

Verdict zero_jitter() {
  double loss[2];
  std::uint64_t delivered[2];
  const JitterKind kinds[] = {JitterKind::buffer, JitterKind::watermark};
  for (int i = 0; i < 2; ++i) {
    auto r = run_session(session(fixtures::constant_pair(80), {RouterKind::direct, kinds[i]}, 1, 60000));
    loss[i] = r.report.loss_rate;
    delivered[i] = r.report.generated - r.report.dropped;
  }
  return {loss[0] == 0.0 && loss[1] == 0.0,
          fmt("constant 80 ms link, 60000 packets: DRT-BF loss %g (%llu delivered), DRT-WM loss %g (%llu "
              "delivered)",
              loss[0], static_cast<unsigned long long>(delivered[0]), loss[1],
              static_cast<unsigned long long>(delivered[1]))};
}

}  // namespace

int main() {
  // Criterion 9 reuses the sessions of 5 and 6, so it runs after them.
  const std::vector<Criterion> criteria{
      {1, "conjugate update exactness", 1, conjugate_update},
      {2, "bandit correctness", 10, bandit_correctness},
      {3, "path enumeration", 0, path_enumeration},
      {4, "watermark oracle equivalence", 30, oracle_equivalence},
      {5, "out-of-order vs in-order reordering", 120, oop_vs_iop},
      {6, "routing latency", 120, routing_claim},
      {7, "plan update frugality", 0, plan_frugality},
      {8, "overhead bound", 0, overhead_bound},
      {9, "conservation and determinism", 60, conservation_and_determinism},
      {10, "zero-jitter baseline", 0, zero_jitter},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.2fs", secs);
    if (c.budget_s > 0) {
      timing += fmt(" (budget %.0fs)", c.budget_s);
      if (secs > c.budget_s) {
        v.pass = false;
        v.detail += "; over time budget";
      }
    }
    failed += !v.pass;
    std::printf("%s  criterion %2d  %-38s %s  [%s]\n", v.pass ? "PASS" : "FAIL", c.id, c.name,
                v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
