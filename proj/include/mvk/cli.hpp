#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mvk {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNoConvergence = 3;

/// Command-line overrides; unset fields keep the config values.
struct CliArgs {
    std::string config;
    std::optional<std::string> experiment;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> refine;
};

const std::vector<std::string>& experiment_names();

/// Reads the config, runs one experiment and writes manifest.json plus the
/// experiment's CSV/JSON files into the output directory. Errors go to err.
int run(const CliArgs& args, std::ostream& err);

}  // namespace mvk
