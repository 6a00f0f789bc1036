// fjc: compile tensor graphs to fork-join IR, run modules, benchmark modes.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fjc/bench/harness.hpp"
#include "fjc/bench/suite.hpp"
#include "fjc/exec/executor.hpp"
#include "fjc/exec/interpreter.hpp"
#include "fjc/graph_opt/passes.hpp"
#include "fjc/lowering/lowering.hpp"
#include "fjc/runtime/pool.hpp"
#include "fjc/splitmix.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fjc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

const std::vector<std::string> kStages{"hlo", "hlo-opt", "fj", "fj-opt", "passes"};

struct PassFlags {
  std::string mode = "exposed-late";
  int threads = 0;  // 0: physical cores
  std::optional<std::int64_t> grain;
  std::int64_t spawn_cost = 200;
  double serialize_factor = 8.0;
  std::string kernels;

  void add_to(CLI::App& cmd, bool allow_both = false) {
    if (allow_both) {
      mode = "both";
      cmd.add_option("--mode", mode, "Mode to benchmark")
          ->check(CLI::IsMember({"both", "exposed-late", "opaque-early"}))
          ->capture_default_str();
    } else {
      cmd.add_option("--mode", mode, "Compilation mode")
          ->check(CLI::IsMember({"exposed-late", "opaque-early"}))
          ->capture_default_str();
    }
    cmd.add_option("--threads", threads, "Worker count P (default: physical cores)")->check(CLI::PositiveNumber);
    cmd.add_option("--grain", grain, "Override the loop grain size")->check(CLI::PositiveNumber);
    cmd.add_option("--spawn-cost", spawn_cost, "Spawn cost S in work units")->capture_default_str();
    cmd.add_option("--serialize-factor", serialize_factor, "Serialization factor sigma")->capture_default_str();
    cmd.add_option("--kernels", kernels, "Kernel library file (default: the shipped kernels.fjt)");
  }

  int workers() const { return threads > 0 ? threads : runtime::physical_core_count(); }

  opt::Mode parsed_mode() const { return mode == "opaque-early" ? opt::Mode::OpaqueEarly : opt::Mode::ExposedLate; }

  opt::PassConfig passes() const {
    opt::PassConfig c;
    c.grain_override = grain;
    c.spawn_cost = spawn_cost;
    c.serialize_factor = serialize_factor;
    c.workers_hint = workers();
    return c;
  }

  // Explicit paths must load; the shipped default falls back to building
  // kernels on demand when it is missing.
  std::shared_ptr<const kernels::KernelLibrary> library() const {
    if (!kernels.empty()) return kernels::KernelLibrary::load(kernels, true);
    if (fs::exists(FJC_DEFAULT_KERNELS)) return kernels::KernelLibrary::load(FJC_DEFAULT_KERNELS, true);
    std::cerr << "warning: " << FJC_DEFAULT_KERNELS << " not found; building kernels on demand\n";
    return std::make_shared<kernels::KernelLibrary>(true);
  }

  lowering::CompileOptions compile_options() const {
    lowering::CompileOptions o;
    o.lowering.mode = parsed_mode();
    o.lowering.workers = workers();
    o.lowering.kernel_library = library();
    o.passes = passes();
    return o;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out || !(out << text)) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

bool looks_like_fj(const std::string& path, const std::string& text) {
  const auto ext = fs::path(path).extension();
  if (ext == ".fjt" || ext == ".fj") return true;
  if (ext == ".hlo") return false;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    if (word.starts_with("#")) {
      std::getline(in, word);
      continue;
    }
    return word == "entry" || word == "func" || word == "declare";
  }
  return false;
}

// Stage snapshots of one compilation. Pass snapshots are numbered in order.
struct Snapshots {
  std::map<std::string, std::string> stages;
  std::vector<std::pair<std::string, std::string>> passes;  // (file suffix, text)
};

lowering::CompileResult compile_with_snapshots(const graph::HloGraph& g, lowering::CompileOptions options,
                                               Snapshots& snaps) {
  int n = 0;
  auto label = [&](std::string_view pass) {
    std::ostringstream s;
    s << "pass" << std::setw(2) << std::setfill('0') << n++ << "-" << pass;
    return s.str();
  };
  options.on_graph_pass = [&](std::string_view pass, const graph::HloGraph& h) {
    snaps.passes.emplace_back(label(pass) + ".hlo", graph::print_hlo_text(h));
  };
  options.on_fj_pass = [&](std::string_view pass, const ir::FjModule& m) {
    snaps.passes.emplace_back(label(pass) + ".fjt", ir::print_fj_text(m));
  };
  auto r = lowering::compile_graph(g, options);
  snaps.stages["hlo"] = graph::print_hlo_text(g);
  snaps.stages["hlo-opt"] = graph::print_hlo_text(r.optimized_graph);
  snaps.stages["fj"] = ir::print_fj_text(r.lowered);
  snaps.stages["fj-opt"] = ir::print_fj_text(r.module);
  return r;
}

std::string stage_extension(const std::string& stage) { return stage.starts_with("hlo") ? ".hlo" : ".fjt"; }

// ---------------------------------------------------------------------------

struct CompileCmd {
  std::string input;
  std::string output;
  std::vector<std::string> dump;
  std::string dump_dir;
  PassFlags flags;

  int run() const {
    const auto graph = graph::parse_hlo_text(read_file(input));
    Snapshots snaps;
    const auto r = compile_with_snapshots(graph, flags.compile_options(), snaps);
    write_file(output, ir::print_fj_text(r.module));

    const fs::path dir = dump_dir.empty() ? fs::path(output).parent_path() : fs::path(dump_dir);
    const std::string stem = fs::path(output).stem().string();
    for (const auto& stage : dump) {
      if (stage == "passes") {
        for (const auto& [suffix, text] : snaps.passes) write_file(dir / (stem + "." + suffix), text);
      } else {
        write_file(dir / (stem + "." + stage + stage_extension(stage)), snaps.stages.at(stage));
      }
    }
    return kExitOk;
  }
};

struct RunCmd {
  std::string module;
  std::vector<std::string> inputs;
  bool random_inputs = false;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string output_dir;
  std::string json_path;
  bool check_serial = false;
  bool checked = false;

  int run() const {
    const auto m = ir::parse_fj_text(read_file(module));
    exec::Executable ex(m, {.checked = checked});
    std::vector<exec::TensorBuffer> in;
    if (random_inputs) {
      std::uint64_t state = seed;
      for (const auto& t : ex.input_types()) in.push_back(exec::random_uniform(t, splitmix64(state)));
    } else {
      for (const auto& path : inputs) in.push_back(exec::read_tensor_file(path));
    }

    const int workers = threads > 0 ? threads : runtime::physical_core_count();
    runtime::TaskPool pool(workers, seed);
    auto report = ex.run(in, &pool);

    json doc{{"schema", bench::kSchemaVersion},
             {"mode", report.mode},
             {"workers", report.workers},
             {"checked", report.checked},
             {"wall_seconds", report.wall_seconds},
             {"max_depth", report.max_depth},
             {"counters",
              {{"spawns", report.counters.spawns},
               {"steals", report.counters.steals},
               {"roots", report.counters.roots},
               {"tasks_executed", report.counters.tasks_executed}}}};

    int status = kExitOk;
    if (check_serial) {
      const auto serial = exec::execute_serial(m, in, {.checked = checked});
      const auto cmp = exec::compare(report.outputs, serial.outputs, 0.0);
      doc["serial_check"] = cmp.ok ? "passed" : "failed";
      if (!cmp.ok) {
        std::cerr << "error: parallel and serial outputs differ: " << cmp.message << "\n";
        status = kExitFailure;
      }
    }

    json outs = json::array();
    for (std::size_t k = 0; k < report.outputs.size(); ++k) {
      const auto& t = report.outputs[k];
      json o{{"shape", t.shape}, {"digest", exec::digest(std::span(&t, 1))}};
      if (!output_dir.empty()) {
        const fs::path path = fs::path(output_dir) / ("out" + std::to_string(k) + ".bin");
        fs::create_directories(output_dir);
        exec::write_tensor_file(path.string(), t);
        o["path"] = path.string();
      }
      outs.push_back(std::move(o));
    }
    doc["outputs"] = std::move(outs);

    if (json_path.empty()) {
      std::cout << doc.dump(2) << "\n";
    } else {
      write_file(json_path, doc.dump(2) + "\n");
    }
    return status;
  }
};

struct BenchCmd {
  std::vector<std::string> suite;
  int repeat = 10;
  int warmup = 2;
  std::string json_path;
  std::uint64_t seed = 1;
  bool checked = false;
  bool no_pin = false;
  PassFlags flags;

  int run() const {
    bench::BenchConfig c;
    for (const auto& s : suite) {
      if (s != "all") c.benchmarks.push_back(s);
    }
    if (flags.mode != "both") c.modes = {flags.parsed_mode()};
    c.threads = flags.workers();
    c.repeat = repeat;
    c.warmup = warmup;
    c.seed = seed;
    c.passes = flags.passes();
    c.kernels = flags.library();
    c.checked = checked;
    c.pin = !no_pin;
    const auto report = bench::run_bench(c, &std::cerr);
    const auto doc = bench::to_json(report);
    if (!json_path.empty()) write_file(json_path, doc.dump(2) + "\n");
    std::cout << bench::render_table(doc);
    if (!report.all_correct()) {
      std::cerr << "error: correctness cross-check failed\n";
      return kExitFailure;
    }
    return kExitOk;
  }
};

struct DumpCmd {
  std::string input;
  std::string suite;
  std::string stage = "fj-opt";
  PassFlags flags;

  int run() const {
    if (input.empty() == suite.empty()) throw CLI::ValidationError("dump", "give exactly one of FILE or --suite");
    graph::HloGraph graph;
    if (!suite.empty()) {
      graph = bench::find_benchmark(suite).build();
    } else {
      const auto text = read_file(input);
      if (looks_like_fj(input, text)) return dump_fj(text);
      graph = graph::parse_hlo_text(text);
    }
    Snapshots snaps;
    compile_with_snapshots(graph, flags.compile_options(), snaps);
    if (stage == "passes") {
      for (const auto& [suffix, text] : snaps.passes) std::cout << "# " << suffix << "\n" << text << "\n";
    } else {
      std::cout << snaps.stages.at(stage);
    }
    return kExitOk;
  }

  int dump_fj(const std::string& text) const {
    if (stage.starts_with("hlo")) throw CLI::ValidationError("--dump-ir", "an FJ module has no " + stage + " stage");
    auto m = ir::parse_fj_text(text);
    if (stage == "fj") {
      std::cout << ir::print_fj_text(m);
      return kExitOk;
    }
    opt::PipelineOptions po;
    po.mode = flags.parsed_mode();
    po.config = flags.passes();
    if (stage == "passes") {
      po.on_pass = [](std::string_view pass, const ir::FjModule& r) {
        std::cout << "# " << pass << "\n" << ir::print_fj_text(r) << "\n";
      };
      opt::run_fj_pipeline(m, po);
    } else {
      std::cout << ir::print_fj_text(opt::run_fj_pipeline(m, po));
    }
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fjc: tensor graphs to fork-join IR with late task partitioning"};
  app.require_subcommand(1);

  CompileCmd compile;
  auto* c = app.add_subcommand("compile", "Compile an HLO text file to optimized FJ text");
  c->add_option("input", compile.input, "HLO text file")->required()->check(CLI::ExistingFile);
  c->add_option("-o,--output", compile.output, "Output FJ file")->required();
  c->add_option("--dump-ir", compile.dump, "Write a stage snapshot (repeatable)")->check(CLI::IsMember(kStages));
  c->add_option("--dump-dir", compile.dump_dir, "Directory for snapshots (default: next to the output)");
  compile.flags.add_to(*c);

  RunCmd run;
  auto* r = app.add_subcommand("run", "Execute an FJ module on the work-stealing runtime");
  r->add_option("module", run.module, "FJ text file")->required()->check(CLI::ExistingFile);
  auto* inputs = r->add_option("--input", run.inputs, "Input tensor file, in parameter order (repeatable)");
  r->add_flag("--random-inputs", run.random_inputs, "Use seeded uniform [-1, 1) inputs")->excludes(inputs);
  r->add_option("--seed", run.seed, "Seed for random inputs and victim selection")->capture_default_str();
  r->add_option("--threads", run.threads, "Worker count (default: physical cores)")->check(CLI::PositiveNumber);
  r->add_option("--output-dir", run.output_dir, "Write out<k>.bin tensor files here");
  r->add_option("--json", run.json_path, "Write the execution report here instead of stdout");
  r->add_flag("--check-serial", run.check_serial, "Also run the serial elision and require bitwise equality");
  r->add_flag("--checked", run.checked, "Bounds-check every load and store");

  BenchCmd bench_cmd;
  auto* b = app.add_subcommand("bench", "Time the benchmark suite in both modes");
  b->add_option("--suite", bench_cmd.suite, "Benchmarks to run: cnn, lstm_cell, mlp or all (repeatable)")
      ->delimiter(',')
      ->check(CLI::IsMember({"all", "cnn", "lstm_cell", "mlp"}));
  b->add_option("--repeat", bench_cmd.repeat, "Timed runs per cell")->check(CLI::PositiveNumber)->capture_default_str();
  b->add_option("--warmup", bench_cmd.warmup, "Discarded runs per cell")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  b->add_option("--json", bench_cmd.json_path, "Write the JSON report here");
  b->add_option("--seed", bench_cmd.seed, "Input and scheduler seed")->capture_default_str();
  b->add_flag("--checked", bench_cmd.checked, "Bounds-check every load and store");
  b->add_flag("--no-pin", bench_cmd.no_pin, "Do not pin workers to cores");
  bench_cmd.flags.add_to(*b, true);

  DumpCmd dump;
  auto* d = app.add_subcommand("dump", "Print one compilation stage of an HLO file, FJ file or benchmark");
  d->add_option("input", dump.input, "HLO or FJ text file")->check(CLI::ExistingFile);
  d->add_option("--suite", dump.suite, "Benchmark graph instead of a file")
      ->check(CLI::IsMember({"cnn", "lstm_cell", "mlp"}));
  d->add_option("--dump-ir", dump.stage, "Stage to print")->check(CLI::IsMember(kStages))->capture_default_str();
  dump.flags.add_to(*d);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*c) return compile.run();
    if (*r) return run.run();
    if (*b) return bench_cmd.run();
    return dump.run();
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
