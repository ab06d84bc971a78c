// Command-line front end: validate | solve | simulate | verify.

#include "sksim/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"Skeleton decomposition of supercritical superprocesses: solvers, simulators and checks"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string which;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run config (defaults apply to absent keys)");
        sub->add_option("--set", overrides, "Override a config key, e.g. campaign.replicates=500 (repeatable)");
        sub->add_option("--jobs", jobs, "Worker threads for replicate campaigns")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "Master seed (overrides campaign.seed)");
        sub->add_option("--out", out, "Output directory (overrides output.dir)");
    };
    auto* validate = app.add_subcommand("validate", "Check w, the offspring law and the grid");
    auto* solve = app.add_subcommand("solve", "Write solver fields as CSV");
    auto* simulate = app.add_subcommand("simulate", "Simulate replicates and write event/snapshot files");
    auto* verify = app.add_subcommand("verify", "Run the configured test battery");
    for (auto* s : {validate, solve, simulate, verify}) add_common(s);
    simulate->add_option("which", which, "skeleton | superprocess | dressed (overrides campaign.simulate)")
        ->check(CLI::IsMember({"skeleton", "superprocess", "dressed"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : sksim::exit_code::config_error;
    }

    sksim::RunConfig cfg;
    try {
        if (seed) overrides.push_back("campaign.seed=" + std::to_string(*seed));
        if (!which.empty()) overrides.push_back("campaign.simulate=\"" + which + "\"");
        cfg = sksim::load_config(config_path, overrides);
    } catch (const sksim::Error& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return sksim::exit_code::config_error;
    }

    sksim::CommandOptions opts;
    opts.jobs = jobs;
    if (out) opts.out_dir = *out;
    try {
        sksim::CommandResult res;
        if (*validate) res = sksim::cmd_validate(cfg, opts);
        else if (*solve) res = sksim::cmd_solve(cfg, opts);
        else if (*simulate) res = sksim::cmd_simulate(cfg, opts);
        else res = sksim::cmd_verify(cfg, opts);
        return res.exit_code;
    } catch (const sksim::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return sksim::exit_code::config_error;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return sksim::exit_code::runtime_error;
    }
}
