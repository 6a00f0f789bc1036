// Writes the kernel library file: every kernel the benchmark suite calls.

#include <fstream>
#include <iostream>

#include "fjc/bench/suite.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: " << argv[0] << " OUTPUT.fjt\n";
    return 2;
  }
  const auto module = fjc::kernels::kernel_module(fjc::bench::suite_kernel_specs());
  std::ofstream out(argv[1]);
  out << "# Generated by fjc_gen_kernels; rebuild with the regen_kernels target.\n"
      << fjc::ir::print_fj_text(module);
  if (!out) {
    std::cerr << "cannot write " << argv[1] << "\n";
    return 1;
  }
  std::cout << "wrote " << module.functions.size() << " kernels to " << argv[1] << "\n";
  return 0;
}
