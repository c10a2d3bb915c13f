#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mvk/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Killed mean-field control solver"};
    mvk::CliArgs args;
    std::string experiment, out;
    std::uint64_t seed = 0;
    int refine = 0;
    app.add_option("--config", args.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    auto* exp_opt = app.add_option("--experiment", experiment, "Experiment to run")
                        ->check(CLI::IsMember(mvk::experiment_names()));
    auto* out_opt = app.add_option("--out", out, "Output directory");
    auto* seed_opt = app.add_option("--seed", seed, "Random seed");
    auto* refine_opt = app.add_option("--refine", refine, "Halve dx, dy and dt this many times")
                           ->check(CLI::NonNegativeNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : mvk::kExitValidation;
    }
    if (*exp_opt) args.experiment = experiment;
    if (*out_opt) args.out = out;
    if (*seed_opt) args.seed = seed;
    if (*refine_opt) args.refine = refine;
    return mvk::run(args, std::cerr);
}
