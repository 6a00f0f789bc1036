#include "fjc/opt/passes.hpp"

namespace fjc::opt {

std::string_view to_string(Mode mode) {
  return mode == Mode::ExposedLate ? "exposed-late" : "opaque-early";
}

ir::FjModule run_fj_pipeline(const ir::FjModule& module, const PipelineOptions& options) {
  options.config.validate();
  ir::FjModule m = module;
  auto step = [&](std::string_view name, ir::FjModule next) {
    m = std::move(next);
    if (options.on_pass) options.on_pass(name, m);
  };
  if (options.mode == Mode::ExposedLate) {
    step("inline", inline_calls(m));
    step("const-prop", const_prop(m));
    step("fuse-pfors", fuse_pfors(m));
    step("strip-mine", strip_mine(m, options.config));
    step("serialize-small-tasks", serialize_small_tasks(m, options.config));
    step("loop-spawn", loop_spawn(m));
  } else {
    step("const-prop", const_prop(m));
  }
  ir::verify_or_throw(m);
  return m;
}

}  // namespace fjc::opt
