// phe: run, inspect and validate experiment configs.
//   exit 0 ok, 1 usage/other, 2 config error, 3 data error, 4 numerical error

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "phe/config.hpp"
#include "phe/errors.hpp"
#include "phe/experiment.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    long long seed = -1;
    bool quiet = false;
};

phe::ExperimentConfig load(const Options& o) {
    auto cfg = phe::load_config(o.config);
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    return cfg;
}

std::string out_dir(const Options& o, const phe::ExperimentConfig& cfg) { return o.out.empty() ? cfg.output_dir : o.out; }

int cmd_run(const Options& o, bool demo_only) {
    const auto cfg = load(o);
    if (demo_only && cfg.kind != phe::ExperimentKind::demo)
        throw phe::ConfigError("kind: the demo subcommand needs a demo config");
    phe::Progress progress;
    if (!o.quiet) progress = [](const std::string& s) { std::cout << s << '\n' << std::flush; };
    const auto dir = out_dir(o, cfg);
    phe::run_experiment(cfg, dir, progress);
    if (!o.quiet) std::cout << "wrote " << dir << '\n';
    return 0;
}

int cmd_param_count(const Options& o) {
    const auto cfg = load(o);
    const auto p = phe::param_counts(cfg);
    std::printf("phe_params %zu\n", p.phe);
    std::printf("vocabulary %zu\n", p.vocabulary);
    std::printf("pee_params %zu\n", p.pee);
    std::printf("ee_params %zu\n", p.ee);
    std::printf("compression_ratio %.2f\n", p.ratio);
    return 0;
}

int cmd_validate(const Options& o) {
    const auto cfg = load(o);
    if (!o.quiet) std::cout << "ok: " << phe::to_string(cfg.kind) << " config with " << cfg.models.size() << " model(s)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic hash embeddings: streaming experiments"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (JSON)")->required();
        sub->add_option("--out", o.out, "output directory (overrides output_dir)");
        sub->add_option("--seed", o.seed, "run seed (overrides seed)")->check(CLI::NonNegativeNumber);
        sub->add_flag("--quiet", o.quiet, "suppress progress output");
    };
    auto* run = app.add_subcommand("run", "run an experiment");
    auto* pc = app.add_subcommand("param-count", "print embedding parameter counts");
    auto* demo = app.add_subcommand("demo", "run the two-item forgetting demo");
    auto* val = app.add_subcommand("validate-config", "validate a config without running it");
    for (auto* s : {run, pc, demo, val}) add_common(s);
    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(o, false);
        if (demo->parsed()) return cmd_run(o, true);
        if (pc->parsed()) return cmd_param_count(o);
        if (val->parsed()) return cmd_validate(o);
    } catch (const phe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const phe::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const phe::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
