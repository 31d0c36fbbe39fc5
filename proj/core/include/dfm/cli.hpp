#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dfm/dataset.hpp"
#include "dfm/io/config.hpp"

namespace dfm {

/// Subcommands: train, attack, eval, diagnose, export-features.
/// Returns 0 on success, 2 on a usage error (unknown flag or subcommand,
/// usage printed to err) and 1 on any other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// Train/test splits for a run, truncated to the configured limits.
std::pair<Dataset, Dataset> load_datasets(const io::RunConfig& cfg);

}  // namespace dfm
