/**
 * @file cli.hpp
 * @brief Command-line front end: synthesize, curves, calibrate, characterize,
 * simulate, tomography.
 *
 * Angles are degrees, lengths millimetres and wavelengths nanometres on the
 * command line; everything is converted to SI radians/metres once, here.
 *
 * Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence,
 * 1 anything else. Failures print one JSON object on stderr:
 *   {"error": "<kind>", "message": "...", "exit_code": N}
 *
 * --config FILE reads a JSON object whose keys are the long option names of
 * the subcommand (plus an optional "command"). Explicit flags win over the
 * file; unknown keys are rejected.
 */

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace iwp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNonConvergence = 3;

/// Runs one command. @p args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace iwp::cli
