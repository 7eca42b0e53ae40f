#pragma once

#include <ostream>

#include "corrseg/config.hpp"

namespace corrseg {

// Subcommand entry points shared by the CLI binary and the integration
// tests. All throw on failure; exit-code mapping lives in the CLI.
void run_generate(const RunConfig& cfg, std::ostream& log);
void run_train(const RunConfig& cfg, std::ostream& log);
void run_eval(const RunConfig& cfg, std::ostream& log);

// Runs the op-level and end-to-end finite-difference suite on 3 seeds
// derived from `seed`; prints one line per check. Returns false if any
// check exceeded its tolerance.
bool run_gradcheck(uint64_t seed, std::ostream& log);

}  // namespace corrseg
