#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowedge/commands.hpp"
#include "flowedge/errors.hpp"

using namespace flowedge;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "key=value run configuration file");
    cmd->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
}

RunConfig resolve(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    for (const std::string& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) cfg.set(k, v);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowedge: flow-matching edge detection at toy scale"};
    app.require_subcommand(1);

    Common common;
    std::string out, data, checkpoint, base, pred;
    std::optional<std::size_t> count, steps;
    std::optional<std::uint64_t> seed;
    std::optional<double> guidance;
    std::optional<std::string> scene, gammas;
    bool no_cfg = false, walls = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, common);
    gen->add_option("-o,--out", out, "output dataset directory")->required();
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--seed", seed, "generation seed");
    gen->add_option("--scene", scene, "shapes | floor_plan");

    auto* pre = app.add_subcommand("pretrain", "train the unconditional backbone");
    add_common(pre, common);
    pre->add_option("-d,--data", data, "dataset directory")->required();
    pre->add_option("-o,--out", out, "output run directory")->required();
    pre->add_option("--seed", seed, "run seed");

    auto* fine = app.add_subcommand("finetune", "train the condition adapter on a frozen backbone");
    add_common(fine, common);
    fine->add_option("-b,--base", base, "pretrained checkpoint")->required();
    fine->add_option("-d,--data", data, "dataset directory")->required();
    fine->add_option("-o,--out", out, "output run directory")->required();
    fine->add_option("--seed", seed, "run seed");

    auto* infer = app.add_subcommand("infer", "predict edge maps");
    add_common(infer, common);
    infer->add_option("-m,--checkpoint", checkpoint, "model checkpoint")->required();
    infer->add_option("-d,--data", data, "dataset directory")->required();
    infer->add_option("-o,--out", out, "output directory (predictions/ is created inside)")->required();
    infer->add_option("--steps", steps, "Euler steps K");
    infer->add_option("--guidance", guidance, "guidance scale");
    infer->add_flag("--no-cfg", no_cfg, "integrate the conditional field directly");
    infer->add_option("--seed", seed, "noise seed");

    auto* eval = app.add_subcommand("eval", "score predictions (SEval and CEval)");
    add_common(eval, common);
    eval->add_option("-d,--data", data, "dataset directory with ground truth")->required();
    eval->add_option("-p,--pred", pred, "predictions directory or infer output")->required();
    eval->add_option("-o,--out", out, "report directory")->required();
    eval->add_flag("--walls", walls, "also report wall IoU and boundary F");

    auto* sweep = app.add_subcommand("sweep-gamma", "mean predicted brightness versus guidance scale");
    add_common(sweep, common);
    sweep->add_option("-m,--checkpoint", checkpoint, "model checkpoint")->required();
    sweep->add_option("-d,--data", data, "dataset directory")->required();
    sweep->add_option("-o,--out", out, "output directory")->required();
    sweep->add_option("--gammas", gammas, "comma-separated guidance scales");
    sweep->add_option("--steps", steps, "Euler steps K");
    sweep->add_option("--seed", seed, "noise seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << error_line(2, e.what()) << "\n";
        return 2;
    }

    try {
        std::vector<std::pair<std::string, std::string>> flags;
        if (count) flags.emplace_back("count", std::to_string(*count));
        if (seed) flags.emplace_back("seed", std::to_string(*seed));
        if (scene) flags.emplace_back("scene", *scene);
        if (steps) flags.emplace_back("steps", std::to_string(*steps));
        if (guidance) flags.emplace_back("guidance", std::to_string(*guidance));
        if (gammas) flags.emplace_back("gammas", *gammas);
        if (no_cfg) flags.emplace_back("use_cfg", "false");
        const RunConfig cfg = resolve(common, flags);

        if (gen->parsed()) run_gen_data(cfg, out);
        if (pre->parsed()) run_pretrain(cfg, data, out);
        if (fine->parsed()) run_finetune(cfg, base, data, out);
        if (infer->parsed()) run_infer(cfg, checkpoint, data, out);
        if (eval->parsed()) run_eval(cfg, data, pred, out, walls);
        if (sweep->parsed()) run_sweep_gamma(cfg, checkpoint, data, out);
    } catch (const Error& e) {
        const int code = static_cast<int>(e.code());
        std::cerr << error_line(code, e.what()) << "\n";
        return code;
    } catch (const std::invalid_argument& e) {
        std::cerr << error_line(2, e.what()) << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << error_line(1, e.what()) << "\n";
        return 1;
    }
    return 0;
}
