#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mvfuse::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kRuntimeError = 2 };

/// Runs one command line (without the program name). Data goes to files or
/// `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of the file contents, as 16 hex digits.
std::string file_hash(const std::string& path);

}  // namespace mvfuse::cli
