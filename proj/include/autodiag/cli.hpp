#pragma once

#include <string>
#include <vector>

namespace autodiag {

extern const char* kToolVersion;

// Full command surface of the autodiag tool, callable in-process so tests
// can drive it without spawning. args excludes the program name. Returns
// the process exit status: 0 success, 2 usage, then one code per error
// family (io 3, audio format 4, data 5, config 6, train/model 7, match 8,
// anything unexpected 1).
int run_cli(const std::vector<std::string>& args);

}  // namespace autodiag
