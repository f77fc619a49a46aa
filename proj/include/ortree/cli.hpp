#pragma once

#include <string>
#include <vector>

namespace ortree {

// Full command-line entry point: train, predict, bound, bench.
int run_cli(int argc, const char* const* argv);

// Convenience overload for in-process driving (tests); args excludes argv[0].
int run_cli(const std::vector<std::string>& args);

} // namespace ortree
