#pragma once

// Command-line front end. Exit codes: 0 ok, 2 usage, 3 validation, 4 runtime.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vcsim/manifest.hpp"
#include "vcsim/simcore.hpp"
#include "vcsim/trace_net.hpp"

namespace vcsim::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kValidation = 3, kRuntime = 4 };

inline constexpr const char* kOutDirEnv = "VCSIM_OUT_DIR";

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// validate

struct LinkSummary {
  std::string file;
  std::string src, dst;
  std::size_t samples = 0;
  Millis mean = 0, std = 0, coverage = 0;
};

inline LinkSummary summarize_trace(const std::string& file, const LatencyTrace& t) {
  LinkSummary s{file, t.src, t.dst, t.samples.size()};
  double mean = 0, m2 = 0;
  std::size_t n = 0;
  for (const auto& x : t.samples) {
    ++n;
    const double d = x.latency - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x.latency - mean);
  }
  s.mean = mean;
  s.std = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0;
  s.coverage = t.samples.back().t - t.samples.front().t;
  return s;
}

inline std::vector<fs::path> collect_trace_files(const std::vector<std::string>& inputs,
                                                 std::vector<std::string>& errors) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".csv") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      if (found.empty()) errors.push_back(in + ": no traces found");
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      errors.push_back(in + ": no such file or directory");
    }
  }
  return files;
}

inline int cmd_validate(const std::vector<std::string>& inputs, TraceUnit unit, std::ostream& out,
                        std::ostream& err) {
  std::vector<std::string> errors;
  const auto files = collect_trace_files(inputs, errors);
  std::vector<LinkSummary> rows;
  for (const auto& f : files) {
    try {
      for (const auto& t : ingest_traces(f, unit)) rows.push_back(summarize_trace(f.string(), t));
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  if (!rows.empty()) {
    out << "file,src,dst,samples,mean_ms,std_ms,coverage_ms\n";
    for (const auto& r : rows)
      out << r.file << ',' << r.src << ',' << r.dst << ',' << r.samples << ','
          << format_double(r.mean) << ',' << format_double(r.std) << ',' << format_double(r.coverage)
          << '\n';
  }
  for (const auto& e : errors) err << "error: " << e << '\n';
  if (files.empty() && errors.empty()) {
    err << "error: no traces found\n";
    return kValidation;
  }
  return errors.empty() ? kOk : kValidation;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  fs::path out;
  std::size_t endpoints = 1;
  std::size_t relays = 4;
  std::size_t users = 1;
  SyntheticTraceSpec spec;
  std::string regime = "stationary";
  double duration_s = 660;
  Millis step_ms = 10;
  double warmup_s = 60;
  Millis interval_ms = 10;
};

inline std::vector<Node> synth_nodes(const SynthOptions& o) {
  std::vector<Node> nodes;
  auto add = [&](const std::string& prefix, std::size_t count, NodeRole role) {
    for (std::size_t i = 0; i < count; ++i)
      nodes.push_back(Node{NodeId{static_cast<std::uint32_t>(nodes.size())}, role,
                           prefix + std::to_string(i)});
  };
  add("E", o.endpoints, NodeRole::endpoint);
  add("R", o.relays, NodeRole::relay);
  add("U", o.users, NodeRole::user);
  return nodes;
}

inline int cmd_synth(SynthOptions o, std::ostream& out) {
  try {
    o.spec.regime = parse_regime(o.regime);
    o.spec.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  if (!(o.duration_s > 0)) throw UsageError("--duration-s must be > 0");
  if (!(o.step_ms > 0)) throw UsageError("--step-ms must be > 0");
  if (!(o.interval_ms > 0)) throw UsageError("--interval-ms must be > 0");
  if (o.endpoints == 0 || o.users == 0) throw UsageError("need at least one endpoint and one user");
  if (!(o.warmup_s >= 0) || o.warmup_s >= o.duration_s)
    throw UsageError("--warmup-s must be in [0, duration)");

  const auto nodes = synth_nodes(o);
  const auto topo = generate_synthetic(o.spec, nodes, mesh_links(nodes), o.duration_s * 1000.0, o.step_ms);
  write_topology(topo, o.out);

  nlohmann::json exp;
  exp["schema_version"] = kManifestSchemaVersion;
  exp["topology"] = "topology.json";
  exp["pairs"] = nlohmann::json::array();
  for (const auto& e : nodes)
    for (const auto& u : nodes)
      if (e.role == NodeRole::endpoint && u.role == NodeRole::user)
        exp["pairs"].push_back({{"endpoint", e.name}, {"user", u.name}, {"direction", "downlink"}});
  const auto packets = static_cast<std::uint64_t>(
      std::floor((o.duration_s - o.warmup_s) * 1000.0 / o.interval_ms));
  exp["session"] = {{"packet_interval_ms", o.interval_ms}, {"packets", packets},
                    {"warmup_s", o.warmup_s},          {"seed", o.spec.seed},
                    {"jitter", to_json(JitterConfig{})}};
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : paper_methods()) methods.push_back(label(m));
  exp["methods"] = methods;
  std::ofstream f(o.out / "experiment.json");
  f << exp.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write " + (o.out / "experiment.json").string());

  out << "wrote " << topo.traces().size() << " link traces, " << nodes.size() << " nodes to "
      << o.out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// run

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> packets;
  std::optional<double> interval_ms;
  std::optional<std::string> router;
  std::optional<std::string> jitter;
  std::optional<double> percentile;
  std::optional<double> window_ms;
  std::optional<double> confidence;
  std::optional<std::string> out;
  std::optional<unsigned> jobs;
};

inline void apply_overrides(ExperimentManifest& m, const RunOverrides& o) {
  auto& d = m.defaults;
  if (o.seed) d.seed = *o.seed;
  if (o.packets) d.packet_count = *o.packets;
  if (o.interval_ms) d.packet_interval = *o.interval_ms;
  if (o.percentile) d.jitter.percentile = *o.percentile;
  if (o.window_ms) d.jitter.window_ms = *o.window_ms;
  if (o.confidence) d.confidence = *o.confidence;
  if (o.router || o.jitter) {
    std::vector<Method> methods;
    for (auto mth : m.methods) {
      if (o.router) mth.router = parse_router(*o.router);
      if (o.jitter) mth.jitter = parse_jitter(*o.jitter);
      if (std::find(methods.begin(), methods.end(), mth) == methods.end()) methods.push_back(mth);
    }
    m.methods = std::move(methods);
  }
  m.validate();
}

inline fs::path resolve_output_dir(const ExperimentManifest& m, const RunOverrides& o) {
  if (o.out) return *o.out;
  if (m.output_dir) return *m.output_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "vcsim-out";
}

inline std::string cell_stem(std::size_t session, const MetricsReport& r) {
  return std::to_string(session) + "_" + r.endpoint + "_" + r.user + "_" +
         std::string(to_string(r.direction)) + "_" + r.method;
}

inline nlohmann::json effective_config(const ExperimentManifest& m) {
  const auto& d = m.defaults;
  nlohmann::json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["session"] = {{"packet_interval_ms", d.packet_interval}, {"packets", d.packet_count},
                  {"packet_size", d.packet_size},           {"warmup_s", d.warmup_s},
                  {"confidence", d.confidence},             {"ucb_c", d.ucb_c},
                  {"seed", d.seed},                         {"latency_noise_frac", d.latency_noise_frac},
                  {"jitter", to_json(d.jitter)}};
  j["session"]["loss_threshold"] = d.loss_threshold ? nlohmann::json(*d.loss_threshold) : nlohmann::json();
  j["methods"] = nlohmann::json::array();
  for (const auto& mth : m.methods) j["methods"].push_back(label(mth));
  return j;
}

inline void print_reductions(std::ostream& out, const MatrixResult& res) {
  const auto& methods = res.methods;
  for (std::size_t s = 0; s < res.sessions(); ++s) {
    const auto& first = res.at(s, 0);
    out << "session " << s << " " << first.endpoint << "->" << first.user << " ("
        << to_string(first.direction) << "): reduction of row vs column, mean latency\n";
    out << std::setw(8) << "";
    for (const auto& m : methods) out << std::setw(9) << label(m);
    out << '\n';
    for (std::size_t a = 0; a < methods.size(); ++a) {
      out << std::setw(8) << label(methods[a]);
      for (std::size_t b = 0; b < methods.size(); ++b) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(1) << 100.0 * reduction(res.at(s, b), res.at(s, a)) << '%';
        out << std::setw(9) << cell.str();
      }
      out << '\n';
    }
  }
}

// All files land in a sibling staging directory that is renamed into place
// once complete, so a failed run leaves nothing behind.
inline void write_run_outputs(const fs::path& dir, const MatrixResult& res, const std::string& manifest_text,
                              const ExperimentManifest& m) {
  const fs::path target = fs::absolute(dir);
  if (fs::exists(target) && !fs::is_empty(target) && !fs::exists(target / "summary.csv"))
    throw ValidationError("output directory " + target.string() + " exists and is not a previous run");
  const fs::path staging = target.parent_path() / ("." + target.filename().string() + ".partial");
  fs::remove_all(staging);
  fs::create_directories(staging / "cells");
  try {
    auto write = [&](const fs::path& rel, const std::string& text) {
      std::ofstream f(staging / rel, std::ios::binary);
      f << text;
      if (!f) throw std::runtime_error("cannot write " + (staging / rel).string());
    };
    write("manifest.json", manifest_text);
    write("effective_config.json", effective_config(m).dump(2) + "\n");

    std::ostringstream summary, red;
    summary << kSummaryCsvHeader << '\n';
    red << "schema_version,session,base,ours,reduction\n";
    for (const auto& cell : res.cells) {
      write_summary_row(summary, cell.session, cell.report);
      const auto stem = cell_stem(cell.session, cell.report);
      write("cells/" + stem + ".json", to_json(cell.report).dump(2) + "\n");
      std::ostringstream cdf;
      write_cdf_csv(cdf, cell.report.cdf);
      write("cells/" + stem + ".cdf.csv", cdf.str());
    }
    for (std::size_t s = 0; s < res.sessions(); ++s)
      for (std::size_t a = 0; a < res.methods.size(); ++a)
        for (std::size_t b = 0; b < res.methods.size(); ++b)
          if (a != b)
            red << kReportSchemaVersion << ',' << s << ',' << label(res.methods[b]) << ','
                << label(res.methods[a]) << ',' << format_double(reduction(res.at(s, b), res.at(s, a)))
                << '\n';
    write("summary.csv", summary.str());
    write("reductions.csv", red.str());
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
  fs::remove_all(target);
  fs::rename(staging, target);
}

inline int cmd_run(const fs::path& manifest_path, const RunOverrides& o, std::ostream& out) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw ValidationError("cannot open manifest " + manifest_path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  auto m = parse_manifest(doc, manifest_path.parent_path());
  apply_overrides(m, o);
  const auto dir = resolve_output_dir(m, o);

  const auto topo = materialize_topology(m);
  const auto sessions = session_configs(m, topo);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned jobs = o.jobs ? *o.jobs : std::min<unsigned>(static_cast<unsigned>(sessions.size()), hw);
  const auto res = run_matrix(sessions, m.methods, jobs);

  write_run_outputs(dir, res, text, m);
  print_reductions(out, res);
  out << "wrote " << res.cells.size() << " cells to " << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Trace-driven simulator for relay routing and receiver-side reordering"};
  app.require_subcommand(1);

  std::vector<std::string> inputs;
  std::string unit = "one-way";
  auto* validate = app.add_subcommand("validate", "Check trace files or directories");
  validate->add_option("paths", inputs, "Trace CSV files or directories")->required();
  validate->add_option("--unit", unit, "Latency unit in the files: one-way or rtt");

  SynthOptions so;
  std::string out_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic topology and experiment manifest");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--endpoints", so.endpoints, "Endpoint count");
  synth->add_option("--relays", so.relays, "Relay count");
  synth->add_option("--users", so.users, "User count");
  synth->add_option("--mean-low", so.spec.mean_low, "Lowest link mean, ms");
  synth->add_option("--mean-high", so.spec.mean_high, "Highest link mean, ms");
  synth->add_option("--std", so.spec.std_choices, "Link std choices, ms")->delimiter(',');
  synth->add_option("--regime", so.regime, "stationary or spikes");
  synth->add_option("--seed", so.spec.seed, "Generator seed");
  synth->add_option("--duration-s", so.duration_s, "Trace length, s");
  synth->add_option("--step-ms", so.step_ms, "Sample spacing, ms");
  synth->add_option("--warmup-s", so.warmup_s, "Warmup written to the manifest, s");
  synth->add_option("--interval-ms", so.interval_ms, "Packet interval written to the manifest, ms");

  std::string manifest;
  RunOverrides ro;
  auto* runc = app.add_subcommand("run", "Run every pair under every method in a manifest");
  runc->add_option("manifest", manifest, "Experiment manifest (JSON)")->required();
  runc->add_option("--seed", ro.seed, "Seed");
  runc->add_option("--packets", ro.packets, "Packets per session");
  runc->add_option("--interval-ms", ro.interval_ms, "Packet interval, ms");
  runc->add_option("--router", ro.router, "direct, via_ucb1 or vcroute_ts");
  runc->add_option("--jitter", ro.jitter, "buffer or watermark");
  runc->add_option("--percentile", ro.percentile, "Lag percentile in (0,1]");
  runc->add_option("--window-ms", ro.window_ms, "Jitter window, ms");
  runc->add_option("--confidence", ro.confidence, "Top-k confidence level in (0,1)");
  runc->add_option("--out", ro.out, "Output directory");
  runc->add_option("--jobs", ro.jobs, "Parallel sessions")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(inputs, parse_trace_unit(unit), out, err);
    if (*synth) {
      so.out = out_dir;
      return cmd_synth(so, out);
    }
    return cmd_run(manifest, ro, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kValidation;
  } catch (const InsufficientHistory& e) {
    err << "configuration error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace vcsim::cli
