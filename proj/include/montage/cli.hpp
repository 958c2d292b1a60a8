#pragma once

#include <string>
#include <vector>

namespace montage {

// Runs one CLI command. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 solver failure.
int cli_dispatch(const std::vector<std::string> &args);

} // namespace montage
