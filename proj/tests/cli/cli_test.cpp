#include <gtest/gtest.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fjc/bench/suite.hpp"
#include "fjc/exec/interpreter.hpp"
#include "fjc/graph_opt/passes.hpp"
#include "fjc/ir/fj.hpp"

namespace fs = std::filesystem;
using namespace fjc;

namespace {

struct Outcome {
  int status = -1;
  std::string out;  // stdout and stderr
};

Outcome fjc_cli(const std::string& args) {
  const std::string cmd = std::string(FJC_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fjc_cli_" + std::to_string(getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    graph_ = bench::mlp_graph({.batch = 2, .width = 24, .layers = 2});
    std::ofstream(dir_ / "m.hlo") << graph::print_hlo_text(graph_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  graph::HloGraph graph_;
};

}  // namespace

TEST_F(Cli, CompileWritesVerifiedModule) {
  for (const char* mode : {"exposed-late", "opaque-early"}) {
    const auto r = fjc_cli("compile " + path("m.hlo") + " --mode " + mode + " --threads 3 -o " + path("m.fjt"));
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NO_THROW(ir::parse_fj_text(slurp(path("m.fjt")))) << mode;
  }
}

TEST_F(Cli, DumpedStagesParseBack) {
  const auto r = fjc_cli("compile " + path("m.hlo") + " -o " + path("m.fjt") +
                         " --dump-ir hlo --dump-ir hlo-opt --dump-ir fj --dump-ir fj-opt --dump-ir passes");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto opt = graph::parse_hlo_text(slurp(path("m.hlo-opt.hlo")));
  EXPECT_TRUE(graph::isomorphic(opt, graph_opt::run_hlo_pipeline(graph_)));
  EXPECT_TRUE(graph::isomorphic(graph::parse_hlo_text(slurp(path("m.hlo.hlo"))), graph_));
  EXPECT_NO_THROW(ir::parse_fj_text(slurp(path("m.fj.fjt"))));
  EXPECT_EQ(slurp(path("m.fj-opt.fjt")), slurp(path("m.fjt")));
  int passes = 0;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.find(".pass") == std::string::npos) continue;
    ++passes;
    const auto text = slurp(entry.path());
    if (entry.path().extension() == ".hlo") {
      EXPECT_NO_THROW(graph::parse_hlo_text(text)) << name;
    } else {
      EXPECT_NO_THROW(ir::parse_fj_text(text)) << name;
    }
  }
  EXPECT_GE(passes, 9);  // at least one graph iteration plus six FJ passes
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  auto r = fjc_cli("compile " + path("m.hlo") + " -o " + path("m.fjt") + " --frobnicate");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("Usage"), std::string::npos) << r.out;
  EXPECT_EQ(fjc_cli("").status, 2);
  EXPECT_EQ(fjc_cli("bench --mode sideways").status, 2);
  EXPECT_EQ(fjc_cli("bench --threads 0").status, 2);
}

TEST_F(Cli, CompileErrorsExitWithOne) {
  std::ofstream(path("bad.hlo")) << "%0 = parameter {index=0} : f32[2]\n%1 = frob(%0) : f32[2]\noutputs: %1\n";
  auto r = fjc_cli("compile " + path("bad.hlo") + " -o " + path("bad.fjt"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("ParseError"), std::string::npos) << r.out;
  r = fjc_cli("compile " + path("m.hlo") + " -o " + path("m.fjt") + " --kernels " + path("missing.fjt"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("IoError"), std::string::npos) << r.out;
}

TEST_F(Cli, RunWritesOutputsAndReport) {
  ASSERT_EQ(fjc_cli("compile " + path("m.hlo") + " -o " + path("m.fjt")).status, 0);
  const auto inputs = bench::bench_inputs(graph_, 5);
  std::string flags;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    exec::write_tensor_file(path("in" + std::to_string(k) + ".bin"), inputs[k]);
    flags += " --input " + path("in" + std::to_string(k) + ".bin");
  }
  const auto r = fjc_cli("run " + path("m.fjt") + flags + " --threads 2 --check-serial --checked --output-dir " +
                         path("outs") + " --json " + path("report.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto report = nlohmann::json::parse(slurp(path("report.json")));
  EXPECT_EQ(report["serial_check"], "passed");
  EXPECT_EQ(report["workers"], 2);
  EXPECT_EQ(report["counters"]["tasks_executed"].size(), 2u);
  const auto expected = exec::interpret_hlo(graph_, inputs);
  ASSERT_EQ(report["outputs"].size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    EXPECT_EQ(exec::read_tensor_file(report["outputs"][k]["path"].get<std::string>()), expected[k]);
  }
}

TEST_F(Cli, RunRejectsWrongShapes) {
  ASSERT_EQ(fjc_cli("compile " + path("m.hlo") + " -o " + path("m.fjt")).status, 0);
  auto inputs = bench::bench_inputs(graph_, 5);
  inputs[1] = exec::random_uniform(graph::f32({3, 3}), 1);
  std::string flags;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    exec::write_tensor_file(path("in" + std::to_string(k) + ".bin"), inputs[k]);
    flags += " --input " + path("in" + std::to_string(k) + ".bin");
  }
  const auto r = fjc_cli("run " + path("m.fjt") + flags);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("InputMismatch"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("parameter 1"), std::string::npos) << r.out;
}

TEST_F(Cli, BenchJsonSchema) {
  const auto r = fjc_cli("bench --suite mlp --threads 4 --repeat 3 --json " + path("b.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto doc = nlohmann::json::parse(slurp(path("b.json")));
  EXPECT_EQ(doc["schema"], 1);
  ASSERT_EQ(doc["results"].size(), 2u);
  for (const auto& cell : doc["results"]) {
    EXPECT_EQ(cell["benchmark"], "mlp");
    EXPECT_EQ(cell["threads"], 4);
    EXPECT_EQ(cell["repeats"], 3);
    EXPECT_TRUE(cell["correct"].get<bool>());
    EXPECT_TRUE(cell["ratio"].is_number());
  }
  EXPECT_NE(r.out.find("Ratio"), std::string::npos) << r.out;
}

TEST_F(Cli, BenchSingleThreadNeverSteals) {
  const auto r = fjc_cli("bench --suite mlp,cnn --mode exposed-late --threads 1 --repeat 2 --json " + path("b.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto doc = nlohmann::json::parse(slurp(path("b.json")));
  ASSERT_EQ(doc["results"].size(), 2u);
  for (const auto& cell : doc["results"]) {
    EXPECT_EQ(cell["mode"], "exposed-late");
    EXPECT_EQ(cell["steals"], 0.0);
  }
}

TEST_F(Cli, DumpPrintsStages) {
  auto r = fjc_cli("dump --suite cnn --dump-ir hlo-opt");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NO_THROW(graph::parse_hlo_text(r.out));
  r = fjc_cli("dump " + path("m.hlo") + " --dump-ir fj --mode opaque-early --threads 2");
  ASSERT_EQ(r.status, 0) << r.out;
  std::ofstream(path("m.fjt")) << r.out;
  const auto again = fjc_cli("dump " + path("m.fjt") + " --dump-ir fj");
  ASSERT_EQ(again.status, 0) << again.out;
  EXPECT_EQ(again.out, r.out);
  EXPECT_EQ(fjc_cli("dump " + path("m.fjt") + " --dump-ir hlo").status, 2);
}

TEST(KernelFile, ShippedFileIsCurrent) {
  const auto shipped = kernels::KernelLibrary::load(FJC_DEFAULT_KERNELS, false);
  const auto specs = bench::suite_kernel_specs();
  ASSERT_EQ(shipped->names().size(), specs.size());
  for (const auto& spec : specs) {
    ASSERT_TRUE(shipped->contains(spec)) << spec.name();
    EXPECT_EQ(ir::print_fj_function(shipped->inline_kernel(spec)), ir::print_fj_function(kernels::build_kernel(spec)))
        << spec.name() << " is stale; rebuild the regen_kernels target";
  }
}
