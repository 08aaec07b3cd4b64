#pragma once

#include <string>
#include <vector>

namespace vipr {

// Exit codes: 0 success, 1 training failure or interruption, 2 usage error,
// 3 data/ingest error, 4 dependency error.
int run_cli(const std::vector<std::string>& args);

}  // namespace vipr
