#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

// The `covtest` command line, callable in-process so tests can drive it.
//
// Exit codes: 0 success; 1 verification failure (`verify` only); 2 invalid
// configuration or a domain error (bad flag value, p >= n for CLRT, violated
// divergence condition, ...); 3 I/O failure.

namespace covtest::cli {

struct Environment {
  std::optional<std::string> workers;  // COVTEST_WORKERS
};

Environment environment_from_process();

// `args` excludes the program name. Payloads go to `out` and to files under
// the output directory (--out, default "covtest-out"); diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Environment& env = {});

}  // namespace covtest::cli
