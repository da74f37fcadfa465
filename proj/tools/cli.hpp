#pragma once

namespace softshield::cli {

// Dispatches gen-corpus | pretrain | train-shield | train-router | eval |
// demo. Exit codes: 0 success, 1 usage error, 2 runtime error. Progress
// goes to stderr, machine-readable results to stdout or --out files.
int run(int argc, const char* const* argv);

}  // namespace softshield::cli
