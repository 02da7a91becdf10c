// Command-line driver for training, calibrating, evaluating, and inspecting
// MEDAF open-set recognition experiments.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "medaf/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<double> gamma;
    std::optional<std::string> fusion_mode;
    std::optional<double> beta1;
    std::optional<double> beta2;
    std::optional<int> num_experts;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "experiment config file (JSON)");
    cmd->add_option("--seed", a.seed, "override config seed");
    cmd->add_option("--out-dir", a.out_dir, "override output directory");
    cmd->add_option("--gamma", a.gamma, "override scoring gamma");
    cmd->add_option("--fusion-mode", a.fusion_mode,
                    "gating | mean | single_expert_<i>");
    cmd->add_option("--beta1", a.beta1, "override expert cross-entropy weight");
    cmd->add_option("--beta2", a.beta2, "override diversity loss weight");
    cmd->add_option("--num-experts", a.num_experts, "override expert count");
}

medaf::ExperimentConfig resolve(const CommonArgs& a) {
    medaf::ExperimentConfig cfg;
    if (!a.config_path.empty()) cfg = medaf::load_config_file(a.config_path);
    if (a.seed) cfg.seed = *a.seed;
    if (a.out_dir) cfg.out_dir = *a.out_dir;
    if (a.gamma) {
        cfg.scoring.gamma = *a.gamma;
        cfg.model.gamma = *a.gamma;
    }
    if (a.fusion_mode) cfg.fusion_mode = *a.fusion_mode;
    if (a.beta1) cfg.model.beta1 = *a.beta1;
    if (a.beta2) cfg.model.beta2 = *a.beta2;
    if (a.num_experts) cfg.model.num_experts = *a.num_experts;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MEDAF open set recognition experiments"};
    app.require_subcommand(1);

    CommonArgs train_args, cal_args, eval_args, cam_args, ablate_args, sweep_args;
    std::string checkpoint, tau_path;
    int cam_images = 2;
    std::optional<int> cam_class;

    auto* cmd_train = app.add_subcommand("train", "train a model, write checkpoints and loss log");
    add_common(cmd_train, train_args);

    auto* cmd_cal = app.add_subcommand("calibrate", "calibrate the rejection threshold");
    add_common(cmd_cal, cal_args);
    cmd_cal->add_option("--checkpoint", checkpoint, "checkpoint to score")->required();

    auto* cmd_eval = app.add_subcommand("evaluate", "score test sets and write the metrics report");
    add_common(cmd_eval, eval_args);
    cmd_eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
    cmd_eval->add_option("--tau-file", tau_path, "calibrated threshold file");

    auto* cmd_cam = app.add_subcommand("export-cams", "write per-expert CAM heatmaps as PGM");
    add_common(cmd_cam, cam_args);
    cmd_cam->add_option("--checkpoint", checkpoint, "checkpoint to use")->required();
    cmd_cam->add_option("--num-images", cam_images, "number of test-known images to export");
    cmd_cam->add_option("--class", cam_class, "fix the CAM class (default: per-expert argmax)");

    auto* cmd_ablate = app.add_subcommand("ablate", "run the three-row ablation grid");
    add_common(cmd_ablate, ablate_args);

    auto* cmd_sweep = app.add_subcommand("sweep-experts", "train and evaluate for N in 1..5");
    add_common(cmd_sweep, sweep_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (cmd_train->parsed()) {
            auto cfg = resolve(train_args);
            auto r = medaf::train(cfg);
            std::printf("final checkpoint: %s\n", r.checkpoint_final.c_str());
            std::printf("best checkpoint:  %s\n", r.checkpoint_best.c_str());
            std::printf("loss log:         %s\n", r.loss_log_path.c_str());
            if (!r.log.empty())
                std::printf("final test accuracy: %.4f\n", r.log.back().test_accuracy);
        } else if (cmd_cal->parsed()) {
            auto cfg = resolve(cal_args);
            std::filesystem::create_directories(cfg.out_dir);
            std::string path = cfg.out_dir + "/tau.json";
            auto cal = medaf::calibrate(cfg, checkpoint, path);
            std::printf("tau=%.17g achieved_acceptance=%.4f n=%zu -> %s\n", cal.tau,
                        cal.achieved_acceptance, cal.n_known_used, path.c_str());
        } else if (cmd_eval->parsed()) {
            auto cfg = resolve(eval_args);
            std::optional<double> tau;
            if (!tau_path.empty()) tau = medaf::load_tau_file(tau_path).tau;
            auto r = medaf::evaluate(cfg, checkpoint, tau);
            std::printf("report: %s\n", r.report_txt_path.c_str());
            if (r.report.auroc) std::printf("auroc=%.4f\n", *r.report.auroc);
            if (r.report.closed_set_accuracy)
                std::printf("closed_set_accuracy=%.4f\n", *r.report.closed_set_accuracy);
        } else if (cmd_cam->parsed()) {
            auto cfg = resolve(cam_args);
            auto data = medaf::prepare_data(cfg);
            medaf::LabeledImageSet subset;
            subset.channels = data.test_known.channels;
            subset.height = data.test_known.height;
            subset.width = data.test_known.width;
            for (std::size_t i = 0;
                 i < std::min<std::size_t>(cam_images, data.test_known.size()); ++i) {
                subset.images.push_back(data.test_known.images[i]);
                subset.labels.push_back(data.test_known.labels[i]);
            }
            auto files = medaf::export_cams(cfg, checkpoint, subset, cam_class);
            for (const auto& f : files) std::printf("%s\n", f.c_str());
        } else if (cmd_ablate->parsed()) {
            auto cfg = resolve(ablate_args);
            auto rows = medaf::ablate(cfg);
            for (const auto& r : rows)
                std::printf("%-18s acc=%.4f auroc=%.4f\n", r.name.c_str(), r.closed_set_accuracy,
                            r.auroc);
        } else if (cmd_sweep->parsed()) {
            auto cfg = resolve(sweep_args);
            auto rows = medaf::sweep_experts(cfg);
            for (const auto& r : rows)
                std::printf("N=%d acc=%.4f auroc=%.4f\n", r.num_experts, r.closed_set_accuracy,
                            r.auroc);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
