#pragma once

#include <string>
#include <vector>

namespace exifcons::cli {

/// Runs one command line (argv[0] is the program name) and returns the exit
/// code: 0 success, 1 usage error, 2 data error, 3 runtime failure.
int run(int argc, const char* const* argv);
/// Same, with the arguments after the program name.
int run(const std::vector<std::string>& args);

}  // namespace exifcons::cli
