#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace dst {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumeric = 3,
};

/**
 * Runs one command. `args` excludes the program name, so args[0] is the
 * command: synth, ingest, train, evaluate, forecast, lag-curve, cluster or
 * inspect-checkpoint. The summary line goes to `out`, diagnostics to `err`.
 */
int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);

int dispatch(int argc, char** argv);

}  // namespace dst
