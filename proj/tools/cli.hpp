#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace uedge::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

// Runs the `uedge` command line. Reports go to `out`; failures print one
// JSON line {"error": ..., "message": ...} to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uedge::cli
