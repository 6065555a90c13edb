// Command-line front end: hilbert-diffuse <command> --scenario <path>
// --out <dir> [--seed U64] [--jobs N]. Everything substantive lives in
// hd::run(); this file only parses arguments and prints the error channel.
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hilbert_diffuse/cli_runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Spectral simulation engine and verification lab for "
                 "Hilbert-space diffusions"};
    app.require_subcommand(1);

    hd::run_request req;
    std::uint64_t seed = 0;
    unsigned jobs = 0;
    for (const auto& name : hd::run_commands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--scenario", req.scenario_path, "scenario file (flat key = value)")
            ->required();
        sub->add_option("--out", req.out_dir, "output directory for report.json and CSVs")
            ->required();
        sub->add_option("--seed", seed, "stream seed (overrides HD_SEED and the scenario)");
        sub->add_option("--jobs", jobs, "worker threads (overrides the scenario)");
        sub->callback([&req, name] { req.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help/version exit clean, bad usage is a failure
    }
    auto* sub = app.get_subcommands().front();
    if (sub->count("--seed")) req.seed = seed;
    if (sub->count("--jobs")) req.jobs = jobs;

    try {
        return hd::run(req);
    } catch (const std::exception& e) {
        std::cerr << "hilbert-diffuse: " << e.what() << "\n";
        return 1;
    }
}
