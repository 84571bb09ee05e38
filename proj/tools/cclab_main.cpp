#include <cstdio>
#include <exception>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cclab/experiment.hpp"
#include "cclab/illuminants.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitStageFailure = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::vector<uint64_t> seeds;
    bool deterministic = false;
    int threads = 0;
    int pool_size = 0;
    double radius_de = 0.0;
    double cct_min = 0.0, cct_max = 0.0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seeds, "training seed (repeatable)");
    cmd->add_option("--seeds", args.seeds, "training seeds")->delimiter(',');
    cmd->add_flag("--deterministic", args.deterministic,
                  "single-thread bit-reproducible mode");
    cmd->add_option("--threads", args.threads, "worker threads (0 = auto)");
    cmd->add_option("--pool-size", args.pool_size, "training illuminant count");
    cmd->add_option("--radius-de", args.radius_de, "test quad radius in ΔE76");
    cmd->add_option("--cct-min", args.cct_min, "training pool CCT lower bound (K)");
    cmd->add_option("--cct-max", args.cct_max, "training pool CCT upper bound (K)");
}

cclab::ExperimentConfig resolve_config(const CommonArgs& args) {
    cclab::ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = cclab::ExperimentConfig::load(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.seeds.empty()) cfg.seeds = args.seeds;
    if (args.deterministic) cfg.deterministic = true;
    if (args.threads > 0) cfg.threads = args.threads;
    if (args.pool_size > 0) cfg.pool_size = args.pool_size;
    if (args.radius_de > 0.0) cfg.quad_radius_de = args.radius_de;
    if (args.cct_min > 0.0) cfg.cct_min = args.cct_min;
    if (args.cct_max > 0.0) cfg.cct_max = args.cct_max;
    return cfg;
}

int run_stages(const CommonArgs& args, const std::set<cclab::Stage>& stages) {
    cclab::ExperimentConfig cfg;
    try {
        cfg = resolve_config(args);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    }
    try {
        const cclab::RunLedger ledger = cclab::run_experiment(cfg, stages);
        for (const auto& [name, rec] : ledger.stages)
            std::fprintf(stderr, "%-10s %-7s %8.1fs  %zu outputs\n", name.c_str(),
                         rec.status.c_str(), rec.wall_seconds, rec.outputs.size());
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStageFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale color constancy experiments"};
    app.require_subcommand(1);

    CommonArgs args;
    const std::vector<std::pair<std::string, std::pair<const char*, std::set<cclab::Stage>>>>
        plans = {
            {"gen", {"render the datasets", {cclab::Stage::gen}}},
            {"train", {"train the configured models", {cclab::Stage::train}}},
            {"eval", {"score models on the eval sets", {cclab::Stage::eval}}},
            {"baselines", {"classical estimator comparison", {cclab::Stage::baselines}}},
            {"probes", {"linear readout probes", {cclab::Stage::probes}}},
            {"rsa", {"representational analyses", {cclab::Stage::rsa}}},
            {"report", {"summary tables and plots", {cclab::Stage::report}}},
            {"all",
             {"run the full pipeline",
              {cclab::Stage::gen, cclab::Stage::train, cclab::Stage::eval,
               cclab::Stage::baselines, cclab::Stage::probes, cclab::Stage::rsa,
               cclab::Stage::report}}},
        };
    std::vector<CLI::App*> cmds;
    for (const auto& [name, plan] : plans) {
        CLI::App* cmd = app.add_subcommand(name, plan.first);
        add_common(cmd, args);
        cmds.push_back(cmd);
    }

    // Debug helpers outside the stage pipeline.
    std::string spd_out = "dseries.spd";
    double spd_cct = 6504.0;
    CLI::App* spd = app.add_subcommand("spd", "write a daylight-series spectrum");
    spd->add_option("--cct", spd_cct, "correlated color temperature (K)")->required();
    spd->add_option("--out", spd_out, "output SPD file");

    std::string preview_dataset, preview_out = "preview.ppm";
    size_t preview_index = 0;
    double preview_exposure = 1.0;
    CLI::App* preview = app.add_subcommand("preview", "debug sRGB preview of a dataset image");
    preview->add_option("--dataset", preview_dataset, "dataset directory")->required();
    preview->add_option("--index", preview_index, "image index");
    preview->add_option("--out", preview_out, "output PPM file");
    preview->add_option("--exposure", preview_exposure, "linear exposure multiplier");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (spd->parsed()) {
            const cclab::Illuminant ill =
                cclab::d_series_spd(spd_cct, cclab::standard_judd_basis());
            cclab::write_spd_file(spd_out, ill.spd);
            std::fprintf(stderr, "wrote %s\n", spd_out.c_str());
            return kExitOk;
        }
        if (preview->parsed()) {
            cclab::write_srgb_preview(preview_dataset, preview_index, preview_out,
                                      preview_exposure);
            std::fprintf(stderr, "wrote %s\n", preview_out.c_str());
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStageFailure;
    }

    for (size_t i = 0; i < cmds.size(); ++i)
        if (cmds[i]->parsed()) return run_stages(args, plans[i].second.second);
    return kExitConfigError;
}
