#pragma once

#include <string>
#include <vector>

namespace ncl::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kHypothesis = 3,
    kMismatch = 4,
    kIntegrity = 5,
};

// Entry point shared by the executable and the tests. args excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace ncl::cli
