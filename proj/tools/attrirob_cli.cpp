#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include <attrirob/attrirob.hpp>

namespace {

struct CliArgs {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* sub, CliArgs& args) {
    sub->add_option("--config", args.config, "experiment config JSON")->required();
    sub->add_option("--out", args.out, "override out_dir from the config");
    sub->add_option("--seed", args.seed, "override seed from the config");
}

int dispatch(const std::string& name, const CliArgs& args) {
    attrirob::ExperimentConfig cfg = attrirob::load_experiment_config(args.config);
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.train.seed = args.seed;
        cfg.raw["seed"] = args.seed;
    }
    if (!args.out.empty()) {
        cfg.out_dir = args.out;
        cfg.raw["out_dir"] = args.out;
    }
    if (name == "train")
        attrirob::cmd_train(cfg);
    else if (name == "attack")
        attrirob::cmd_attack(cfg);
    else if (name == "eval")
        attrirob::cmd_eval(cfg);
    else if (name == "simulate")
        attrirob::cmd_simulate(cfg);
    else if (name == "consistency")
        attrirob::cmd_consistency(cfg);
    else
        attrirob::cmd_theorem(cfg);
    return attrirob::exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attribution robustness toolkit"};
    app.require_subcommand(1);
    CliArgs args;
    for (const char* name :
         {"train", "attack", "eval", "simulate", "consistency", "theorem"}) {
        CLI::App* sub = app.add_subcommand(name);
        add_common(sub, args);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return attrirob::exit_config_error;
    }

    const CLI::App* sub = app.get_subcommands().front();
    args.seed_set = sub->count("--seed") > 0;

    try {
        return dispatch(sub->get_name(), args);
    } catch (const attrirob::divergence_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return attrirob::exit_divergence;
    } catch (const attrirob::config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return attrirob::exit_config_error;
    } catch (const attrirob::io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return attrirob::exit_config_error;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return attrirob::exit_config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
