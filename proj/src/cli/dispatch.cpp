#include <iostream>

#include <CLI11.hpp>

#include "adctl/cli.hpp"

namespace adctl::cli {

namespace {

/// Input and usage problems exit with 2, numerical ones with 1.
int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const InvalidArgumentError*>(&e) || dynamic_cast<const PreconditionError*>(&e) ||
        dynamic_cast<const MissingBindingError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e))
        return kUsageError;
    return kNumericalFailure;
}

}  // namespace

int dispatch(int argc, char** argv) {
    CLI::App app{"Equation-based models: structural analysis, surrogates, control and MPC"};
    app.require_subcommand(1);
    std::string config_file;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    auto* out_opt = app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed, overrides [run] seed");
    app.add_option("--config", config_file, "run configuration (INI)");
    for (auto* opt : app.get_options()) opt->configurable(false);

    std::string model;
    auto* blt = app.add_subcommand("blt", "print the BLT block listing of a model");
    blt->add_option("model", model, "model file (defaults to [run] model of --config)");
    blt->fallthrough();
    for (const char* name : {"linearize", "convert", "simulate", "mpc", "ekf"})
        app.add_subcommand(name, "")->fallthrough();
    app.get_subcommand("linearize")->description("equilibrium, A/B matrices and eigenvalues");
    app.get_subcommand("convert")->description("replace the Newton block with a fitted linear surrogate");
    app.get_subcommand("simulate")->description("RK4 simulation, optionally under pole-placement feedback");
    app.get_subcommand("mpc")->description("neural-network trajectory MPC solved by SQP");
    app.get_subcommand("ekf")->description("extended Kalman filter against a simulated truth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsageError;
    }

    RunContext ctx;
    ctx.out_dir = out_dir;
    if (seed_opt->count()) ctx.seed = seed;
    ctx.log = &std::cout;
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "blt") {
            std::filesystem::path path = model;
            if (model.empty()) {
                if (config_file.empty()) throw ConfigError("blt needs a model file or --config");
                path = RunConfig::load(config_file).path("run", "model");
            }
            return cmd_blt(path, std::cout, out_opt->count() ? &ctx : nullptr);
        }
        if (config_file.empty()) throw ConfigError(command + " needs --config");
        const RunConfig cfg = RunConfig::load(config_file);
        if (command == "linearize") return cmd_linearize(cfg, ctx);
        if (command == "convert") return cmd_convert(cfg, ctx);
        if (command == "simulate") return cmd_simulate(cfg, ctx);
        if (command == "mpc") return cmd_mpc(cfg, ctx);
        return cmd_ekf(cfg, ctx);
    } catch (const std::exception& e) {
        std::cerr << "adctl " << command << ": " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace adctl::cli
