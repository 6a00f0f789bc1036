#include "fjc/bench/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "fjc/bench/suite.hpp"
#include "fjc/exec/executor.hpp"
#include "fjc/exec/interpreter.hpp"
#include "fjc/lowering/lowering.hpp"
#include "fjc/runtime/pool.hpp"

namespace fjc::bench {

using nlohmann::json;

void BenchConfig::validate() const {
  if (threads < 1) throw Error(ErrorKind::InvalidAttribute, "threads must be >= 1");
  if (repeat < 1) throw Error(ErrorKind::InvalidAttribute, "repeat must be >= 1");
  if (warmup < 0) throw Error(ErrorKind::InvalidAttribute, "warmup must be >= 0");
  if (modes.empty()) throw Error(ErrorKind::InvalidAttribute, "no modes selected");
  for (const auto& name : benchmarks) find_benchmark(name);
  passes.validate();
}

bool BenchReport::all_correct() const {
  for (const auto& r : results) {
    if (!r.correct) return false;
  }
  return true;
}

Environment detect_environment() {
  Environment env;
  env.physical_cores = runtime::physical_core_count();
  env.hardware_threads = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
#if defined(__clang__)
  env.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  env.compiler = "gcc " __VERSION__;
#else
  env.compiler = "unknown";
#endif
  return env;
}

namespace {

std::string hex_digest(const std::vector<exec::TensorBuffer>& outputs) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(exec::digest(outputs)));
  return buf;
}

void time_cell(BenchResult& r, const exec::Executable& ex, const std::vector<exec::TensorBuffer>& inputs,
               const std::vector<exec::TensorBuffer>& expected, runtime::TaskPool& pool, const BenchConfig& config) {
  auto gate = ex.run(inputs, &pool);
  const auto check = exec::compare(gate.outputs, expected, 0.0);
  if (!check.ok) {
    r.error = "correctness gate failed: " + check.message;
    return;
  }
  r.spawns = gate.counters.spawns;
  r.outputs = std::move(gate.outputs);
  r.output_digest = hex_digest(r.outputs);

  for (int i = 0; i < config.warmup; ++i) ex.run(inputs, &pool);
  std::int64_t steals = 0;
  for (int i = 0; i < config.repeat; ++i) {
    auto rep = ex.run(inputs, &pool);
    if (!exec::compare(rep.outputs, expected, 0.0).ok) {
      r.error = "timed run " + std::to_string(i) + " diverged from the reference";
      r.times_seconds.clear();
      return;
    }
    r.times_seconds.push_back(rep.wall_seconds);
    steals += rep.counters.steals;
  }
  r.correct = true;
  r.repeats = config.repeat;
  double sum = 0.0;
  for (double t : r.times_seconds) sum += t;
  r.mean_seconds = sum / static_cast<double>(r.repeats);
  double var = 0.0;
  for (double t : r.times_seconds) var += (t - r.mean_seconds) * (t - r.mean_seconds);
  r.stddev_seconds = r.repeats > 1 ? std::sqrt(var / static_cast<double>(r.repeats - 1)) : 0.0;
  r.cv = r.mean_seconds > 0.0 ? r.stddev_seconds / r.mean_seconds : 0.0;
  r.high_variance = r.cv > config.cv_flag;
  r.steals = static_cast<double>(steals) / static_cast<double>(r.repeats);
}

}  // namespace

BenchReport run_bench(const BenchConfig& config, std::ostream* log) {
  config.validate();
  BenchReport report;
  report.environment = detect_environment();
  report.config = config;

  std::vector<const Benchmark*> selected;
  if (config.benchmarks.empty()) {
    for (const auto& bm : suite()) selected.push_back(&bm);
  } else {
    for (const auto& name : config.benchmarks) selected.push_back(&find_benchmark(name));
  }

  runtime::PoolOptions pool_options;
  pool_options.pin = config.pin;
  runtime::TaskPool pool(config.threads, config.seed, pool_options);
  report.environment.pinned = pool.pinned();

  for (const Benchmark* bm : selected) {
    const auto graph = bm->build();
    const auto inputs = bench_inputs(graph, config.seed);
    const auto expected = exec::interpret_hlo(graph, inputs);
    std::map<opt::Mode, std::size_t> cells;
    for (opt::Mode mode : config.modes) {
      cells[mode] = report.results.size();
      BenchResult& r = report.results.emplace_back();
      r.benchmark = bm->name;
      r.mode = mode;
      r.threads = config.threads;
      try {
        lowering::CompileOptions options;
        options.lowering.mode = mode;
        options.lowering.workers = config.threads;
        options.lowering.kernel_library = config.kernels;
        options.passes = config.passes;
        const auto compiled = lowering::compile_graph(graph, options);
        r.allocs = ir::count_constructs(compiled.module).allocs;
        exec::Executable ex(compiled.module, {.checked = config.checked});
        time_cell(r, ex, inputs, expected, pool, config);
      } catch (const Error& e) {
        r.error = e.what();
      }
      if (log) {
        *log << bm->name << " " << to_string(mode) << ": ";
        if (r.correct) {
          *log << std::fixed << std::setprecision(3) << r.mean_seconds * 1e3 << " ms +- " << r.stddev_seconds * 1e3
               << " ms\n";
        } else {
          *log << "FAILED " << r.error << "\n";
        }
      }
    }
    if (cells.count(opt::Mode::ExposedLate) && cells.count(opt::Mode::OpaqueEarly)) {
      BenchResult& late = report.results[cells[opt::Mode::ExposedLate]];
      BenchResult& early = report.results[cells[opt::Mode::OpaqueEarly]];
      if (late.correct && early.correct && late.mean_seconds > 0.0) {
        late.ratio = early.ratio = early.mean_seconds / late.mean_seconds;
      }
    }
  }

  double log_sum = 0.0;
  int paired = 0;
  for (const auto& r : report.results) {
    if (r.mode == opt::Mode::ExposedLate && r.ratio) {
      log_sum += std::log(*r.ratio);
      ++paired;
    }
  }
  if (paired > 0) report.geomean_ratio = std::exp(log_sum / paired);
  return report;
}

json to_json(const BenchReport& report) {
  json doc;
  doc["schema"] = kSchemaVersion;
  doc["environment"] = {
      {"physical_cores", report.environment.physical_cores},
      {"hardware_threads", report.environment.hardware_threads},
      {"pinned", report.environment.pinned},
      {"compiler", report.environment.compiler},
  };
  const auto& c = report.config;
  doc["config"] = {
      {"threads", c.threads},
      {"warmup", c.warmup},
      {"repeat", c.repeat},
      {"seed", c.seed},
      {"grain", c.passes.grain_override ? json(*c.passes.grain_override) : json(nullptr)},
      {"spawn_cost", c.passes.spawn_cost},
      {"serialize_factor", c.passes.serialize_factor},
      {"checked", c.checked},
      {"cv_flag", c.cv_flag},
  };
  json results = json::array();
  for (const auto& r : report.results) {
    json j{
        {"benchmark", r.benchmark},
        {"mode", std::string(to_string(r.mode))},
        {"threads", r.threads},
        {"repeats", r.repeats},
        {"correct", r.correct},
        {"spawns", r.spawns},
        {"allocs", r.allocs},
        {"output_digest", r.output_digest},
    };
    if (!r.error.empty()) j["error"] = r.error;
    if (r.correct) {
      j["mean_seconds"] = r.mean_seconds;
      j["stddev_seconds"] = r.stddev_seconds;
      j["cv"] = r.cv;
      j["high_variance"] = r.high_variance;
      j["times_seconds"] = r.times_seconds;
      j["steals"] = r.steals;
    } else {
      j["mean_seconds"] = nullptr;
      j["stddev_seconds"] = nullptr;
    }
    j["ratio"] = r.ratio ? json(*r.ratio) : json(nullptr);
    results.push_back(std::move(j));
  }
  doc["results"] = std::move(results);
  doc["geomean_ratio"] = report.geomean_ratio ? json(*report.geomean_ratio) : json(nullptr);
  doc["all_correct"] = report.all_correct();
  return doc;
}

const std::vector<std::string>& timing_fields() {
  static const std::vector<std::string> fields{"mean_seconds", "stddev_seconds", "cv",    "high_variance",
                                               "times_seconds", "steals",        "ratio", "geomean_ratio"};
  return fields;
}

json strip_timing(const json& report) {
  json doc = report;
  for (const auto& f : timing_fields()) {
    doc.erase(f);
    for (auto& r : doc["results"]) r.erase(f);
  }
  return doc;
}

std::string render_table(const json& report) {
  std::vector<std::string> columns;
  std::vector<std::string> modes;
  std::map<std::pair<std::string, std::string>, std::string> cell;
  std::map<std::string, std::string> ratio;
  bool flagged = false;
  for (const auto& r : report.at("results")) {
    const auto bm = r.at("benchmark").get<std::string>();
    const auto mode = r.at("mode").get<std::string>();
    if (std::find(columns.begin(), columns.end(), bm) == columns.end()) columns.push_back(bm);
    if (std::find(modes.begin(), modes.end(), mode) == modes.end()) modes.push_back(mode);
    std::ostringstream s;
    if (!r.at("correct").get<bool>()) {
      s << "FAIL";
    } else {
      s << std::fixed << std::setprecision(2) << r.at("mean_seconds").get<double>() * 1e3 << " +- "
        << r.at("stddev_seconds").get<double>() * 1e3;
      if (r.value("high_variance", false)) {
        s << " *";
        flagged = true;
      }
    }
    cell[{mode, bm}] = s.str();
    if (!r.at("ratio").is_null()) {
      std::ostringstream q;
      q << std::fixed << std::setprecision(2) << r.at("ratio").get<double>();
      ratio[bm] = q.str();
    }
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"ms (mean +- sd)"};
  header.insert(header.end(), columns.begin(), columns.end());
  rows.push_back(header);
  for (const auto& mode : modes) {
    std::vector<std::string> row{mode};
    for (const auto& bm : columns) row.push_back(cell.count({mode, bm}) ? cell[{mode, bm}] : "-");
    rows.push_back(row);
  }
  std::vector<std::string> ratio_row{"Ratio"};
  for (const auto& bm : columns) ratio_row.push_back(ratio.count(bm) ? ratio[bm] : "-");
  rows.push_back(ratio_row);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      out << (i == 0 ? "" : "  ") << std::setw(static_cast<int>(width[i])) << (i == 0 ? std::left : std::right)
          << rows[k][i];
    }
    out << "\n";
    if (k == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << "\n";
    }
  }
  const auto& env = report.at("environment");
  out << "threads " << report.at("config").at("threads") << ", physical cores " << env.at("physical_cores")
      << ", pinned " << (env.at("pinned").get<bool>() ? "yes" : "no");
  if (!report.at("geomean_ratio").is_null()) {
    out << ", geomean ratio " << std::fixed << std::setprecision(2) << report.at("geomean_ratio").get<double>();
  }
  out << "\n";
  if (flagged) {
    out << "* coefficient of variation above " << std::setprecision(0)
        << report.at("config").at("cv_flag").get<double>() * 100 << "%\n";
  }
  return out.str();
}

}  // namespace fjc::bench
