#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "vcsim/cli.hpp"

namespace fs = std::filesystem;
using namespace vcsim;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "vcsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("vcsim_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

// Two nodes joined by a flat 50 ms link both ways.
fs::path constant_experiment(const fs::path& d) {
  std::ofstream(d / "eu.csv") << "timestamp_ms,src_node,dst_node,latency_ms\n0,E,U,50\n0,U,E,50\n";
  std::ofstream(d / "topology.json")
      << R"({"schema_version":1,"nodes":[{"name":"E","role":"endpoint"},{"name":"U","role":"user"}],)"
      << R"("traces":[{"file":"eu.csv"}]})";
  std::ofstream(d / "experiment.json")
      << R"({"schema_version":1,"topology":"topology.json","pairs":[{"endpoint":"E","user":"U"}],)"
      << R"("session":{"packets":500,"warmup_s":1},"methods":["DRT-BF","DRT-WM"]})";
  return d / "experiment.json";
}

}  // namespace

TEST(Validate, GoodFilePrintsSummary) {
  auto d = scratch("validate_ok");
  std::ofstream(d / "a.csv") << "timestamp_ms,src_node,dst_node,latency_ms\n0,A,B,10\n10,A,B,20\n";
  auto r = invoke({"validate", (d / "a.csv").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("file,src,dst,samples,mean_ms,std_ms,coverage_ms"), std::string::npos);
  EXPECT_NE(r.out.find(",A,B,2,15,"), std::string::npos) << r.out;
}

TEST(Validate, NonMonotonicReportsLine) {
  auto d = scratch("validate_bad");
  std::ofstream(d / "bad.csv") << "timestamp_ms,src_node,dst_node,latency_ms\n10,A,B,5\n0,A,B,6\n";
  auto r = invoke({"validate", d.string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("bad.csv:3"), std::string::npos) << r.err;
}

TEST(Validate, EmptyDirectory) {
  auto d = scratch("validate_empty");
  auto r = invoke({"validate", d.string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("no traces found"), std::string::npos);
  EXPECT_EQ(invoke({"validate", (d / "nope.csv").string()}).code, cli::kValidation);
}

TEST(Usage, BadArgumentsExitTwo) {
  EXPECT_EQ(invoke({}).code, cli::kUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"run"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"run", "x.json", "--jobs", "0"}).code, cli::kUsage);
  auto h = invoke({"--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("synth"), std::string::npos);
}

TEST(Synth, DeterministicForFixedSeed) {
  auto a = scratch("synth_a"), b = scratch("synth_b");
  for (const auto& d : {a, b})
    ASSERT_EQ(invoke({"synth", "--out", d.string(), "--seed", "9", "--duration-s", "30", "--warmup-s",
                      "5"})
                  .code,
              0);
  EXPECT_EQ(snapshot(a), snapshot(b));
  auto topo = load_topology_manifest(a / "topology.json");
  EXPECT_EQ(topo.nodes().size(), 6u);
  auto m = load_manifest(a / "experiment.json");
  EXPECT_EQ(m.defaults.packet_count, 2500u);
  EXPECT_EQ(m.methods.size(), 5u);
}

TEST(Synth, SeventeenPathsForFourRelays) {
  auto d = scratch("synth_paths");
  ASSERT_EQ(invoke({"synth", "--out", d.string(), "--relays", "4", "--duration-s", "20", "--warmup-s", "5"})
                .code,
            0);
  auto topo = load_topology_manifest(d / "topology.json");
  std::vector<NodeId> relays;
  for (const auto& n : topo.nodes())
    if (n.role == NodeRole::relay) relays.push_back(n.id);
  EXPECT_EQ(relays.size(), 4u);
  auto paths = enumerate_paths(*topo.find("E0"), *topo.find("U0"), relays);
  EXPECT_EQ(paths.size(), 17u);
}

TEST(Synth, InvalidOptionsAreUsageErrors) {
  auto d = scratch("synth_bad");
  EXPECT_EQ(invoke({"synth", "--out", d.string(), "--duration-s", "0"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"synth", "--out", d.string(), "--regime", "chaotic"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"synth", "--out", d.string(), "--mean-low", "90", "--mean-high", "10"}).code, cli::kUsage);
}

TEST(Run, ConstantTraceEndToEnd) {
  auto d = scratch("run_const");
  auto manifest = constant_experiment(d);
  auto out = d / "res";
  auto r = invoke({"run", manifest.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("DRT-BF"), std::string::npos);
  for (auto f : {"manifest.json", "effective_config.json", "summary.csv", "reductions.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(slurp(out / "manifest.json"), slurp(manifest));
  std::istringstream summary(slurp(out / "summary.csv"));
  std::string header, row;
  std::getline(summary, header);
  EXPECT_EQ(header, kSummaryCsvHeader);
  EXPECT_NE(header.find("overhead_ms_per_packet"), std::string::npos);
  int rows = 0;
  while (std::getline(summary, row)) {
    ++rows;
    EXPECT_NE(row.find(",500,0,0,"), std::string::npos) << row;  // packets, dropped, loss
  }
  EXPECT_EQ(rows, 2);
  auto cell = nlohmann::json::parse(slurp(out / "cells" / "0_E_U_downlink_DRT-BF.json"));
  EXPECT_EQ(cell["loss_rate"], 0.0);
  EXPECT_TRUE(fs::exists(out / "cells" / "0_E_U_downlink_DRT-WM.cdf.csv"));
}

TEST(Run, OverridesAndAllFiveMethods) {
  auto d = scratch("run_synth");
  ASSERT_EQ(invoke({"synth", "--out", d.string(), "--relays", "3", "--duration-s", "40", "--warmup-s", "10"})
                .code,
            0);
  auto out = d / "res";
  auto r = invoke({"run", (d / "experiment.json").string(), "--out", out.string(), "--packets", "800"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(fs::directory_iterator(out / "cells") == fs::directory_iterator(), false);
  std::size_t cells = 0;
  for (const auto& e : fs::directory_iterator(out / "cells")) cells += e.path().extension() == ".json";
  EXPECT_EQ(cells, 5u);

  auto only = d / "only";
  ASSERT_EQ(invoke({"run", (d / "experiment.json").string(), "--out", only.string(), "--packets", "800",
                    "--router", "direct", "--jitter", "watermark"})
                .code,
            0);
  auto eff = nlohmann::json::parse(slurp(only / "effective_config.json"));
  EXPECT_EQ(eff["methods"], nlohmann::json::array({"DRT-WM"}));
  EXPECT_EQ(eff["session"]["packets"], 800);
}

TEST(Run, SameSeedSameBytes) {
  auto d = scratch("run_repro");
  ASSERT_EQ(invoke({"synth", "--out", d.string(), "--duration-s", "40", "--warmup-s", "10", "--seed", "4"}).code,
            0);
  for (const char* name : {"r1", "r2"})
    ASSERT_EQ(invoke({"run", (d / "experiment.json").string(), "--out", (d / name).string(), "--packets",
                      "1000", "--jobs", name[1] == '1' ? "1" : "3"})
                  .code,
              0);
  EXPECT_EQ(snapshot(d / "r1"), snapshot(d / "r2"));
}

TEST(Run, ValidationFailuresLeaveNoOutput) {
  auto d = scratch("run_invalid");
  auto manifest = constant_experiment(d);
  auto out = d / "res";
  EXPECT_EQ(invoke({"run", manifest.string(), "--out", out.string(), "--percentile", "1.5"}).code,
            cli::kValidation);
  EXPECT_EQ(invoke({"run", manifest.string(), "--out", out.string(), "--router", "teleport"}).code,
            cli::kValidation);
  EXPECT_EQ(invoke({"run", (d / "missing.json").string(), "--out", out.string()}).code, cli::kValidation);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_FALSE(fs::exists(d / ".res.partial"));

  std::ofstream(d / "nopath.json")
      << R"({"schema_version":1,"topology":"topology.json","pairs":[{"endpoint":"E","user":"Nobody"}]})";
  EXPECT_EQ(invoke({"run", (d / "nopath.json").string(), "--out", out.string()}).code, cli::kValidation);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Run, ReplacesPreviousRunButNotForeignDirectories) {
  auto d = scratch("run_replace");
  auto manifest = constant_experiment(d);
  auto out = d / "res";
  ASSERT_EQ(invoke({"run", manifest.string(), "--out", out.string()}).code, 0);
  std::ofstream(out / "stale.txt") << "x";
  ASSERT_EQ(invoke({"run", manifest.string(), "--out", out.string()}).code, 0);
  EXPECT_FALSE(fs::exists(out / "stale.txt"));

  auto foreign = d / "foreign";
  fs::create_directories(foreign);
  std::ofstream(foreign / "keep.txt") << "mine";
  EXPECT_EQ(invoke({"run", manifest.string(), "--out", foreign.string()}).code, cli::kValidation);
  EXPECT_EQ(slurp(foreign / "keep.txt"), "mine");
}

TEST(Run, OutputDirectoryFromEnvironment) {
  auto d = scratch("run_env");
  auto manifest = constant_experiment(d);
  ::setenv(cli::kOutDirEnv, (d / "from_env").string().c_str(), 1);
  auto r = invoke({"run", manifest.string()});
  ::unsetenv(cli::kOutDirEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "from_env" / "summary.csv"));
}
