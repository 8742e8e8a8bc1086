#pragma once

#include <string>
#include <vector>

namespace rltc {

// Process exit codes; failures map error categories distinctly so scripts can
// tell a corrupt container from a missing file.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitUsage = 2,
    kExitBadMagic = 3,
    kExitVocabMismatch = 4,
    kExitCorruptContainer = 5,
    kExitIoError = 6,
};

// Entry point behind the rltc binary; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

} // namespace rltc
