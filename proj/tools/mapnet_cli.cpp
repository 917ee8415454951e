// Command-line front end: synth / train / eval / ablate / lambda / gradcheck /
// oracle. Exit codes: 0 success, 1 check failure, 2 configuration or IO error.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mapnet/runner.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_prefix = "run";
    std::string command;
};

void add_common(CLI::App* cmd, CliOptions& opt, bool* seed_set, uint64_t* seed,
                bool* threads_set, int* threads) {
    cmd->add_option("--config", opt.config_path, "flat key = value config file");
    cmd->add_option("--set", opt.overrides, "override, repeatable: --set key=value");
    cmd->add_option("--out", opt.out_prefix, "output path prefix");
    cmd->add_option("--seed", *seed, "run seed")->each([seed_set](const std::string&) {
        *seed_set = true;
    });
    cmd->add_option("--threads", *threads,
                    "evaluation worker threads (0 = deterministic single-threaded)")
        ->each([threads_set](const std::string&) { *threads_set = true; });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Episodic few-shot learning with modal-alternating graph propagation"};
    app.require_subcommand(1);

    CliOptions opt;
    uint64_t seed = 0;
    int threads = 0;
    bool seed_set = false, threads_set = false;

    for (const char* name : {"synth", "train", "eval", "ablate", "lambda", "gradcheck",
                             "oracle"}) {
        CLI::App* cmd = app.add_subcommand(name);
        add_common(cmd, opt, &seed_set, &seed, &threads_set, &threads);
        cmd->callback([&opt, name]() { opt.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? mapnet::kExitOk : mapnet::kExitConfigError;
    }

    try {
        std::vector<std::string> overrides = opt.overrides;
        if (seed_set) overrides.push_back("seed=" + std::to_string(seed));
        if (threads_set) overrides.push_back("threads=" + std::to_string(threads));
        mapnet::RunSettings rs = mapnet::parse_config(opt.config_path, overrides);
        rs.train.validate();
        rs.synth.validate();

        if (opt.command == "synth") return mapnet::run_synth(rs, opt.out_prefix);
        if (opt.command == "train") return mapnet::run_train(rs, opt.out_prefix);
        if (opt.command == "eval") return mapnet::run_eval(rs, opt.out_prefix);
        if (opt.command == "ablate") return mapnet::run_ablate(rs, opt.out_prefix);
        if (opt.command == "lambda") return mapnet::run_lambda(rs, opt.out_prefix);
        if (opt.command == "gradcheck") return mapnet::run_gradcheck(rs);
        if (opt.command == "oracle") return mapnet::run_oracle(rs);
        std::fprintf(stderr, "error: unknown command\n");
        return mapnet::kExitConfigError;
    } catch (const mapnet::InvalidConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return mapnet::kExitConfigError;
    } catch (const mapnet::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return mapnet::kExitConfigError;
    } catch (const mapnet::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return mapnet::kExitCheckFailed;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return mapnet::kExitCheckFailed;
    }
}
