#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace grasp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// grasp ingest|ask|serve|eval. Returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Same, with argv[0] supplied.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grasp::cli
