#pragma once

// Experiment orchestration: config (de)serialization, the training loop,
// threshold calibration, evaluation reporting, CAM heatmap export, and the
// ablation / expert-count sweep drivers. All file outputs are written
// atomically (temp + rename).

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "medaf/dataset.hpp"
#include "medaf/metrics.hpp"
#include "medaf/network.hpp"
#include "medaf/objective.hpp"
#include "medaf/scoring.hpp"
#include "medaf/tensor.hpp"

namespace medaf {

struct OptimizerConfig {
    double learning_rate = 0.02;
    double momentum = 0.9;
    int decay_epoch = 20;        // lr multiplied by decay_factor from this epoch on
    double decay_factor = 0.1;
};

struct DataConfig {
    std::string source = "synthetic";  // "synthetic" | "idx"
    std::string idx_images;
    std::string idx_labels;
    SyntheticSpec synthetic;
    int n_per_class = 100;
    SplitSpec split{{0, 1, 2, 3, 4, 5}, {6, 7, 8, 9}, 0, 0.75};
    int batch_size = 16;
    int epochs = 30;
};

struct ScoringConfig {
    double gamma = 0.5;
    double target_tpr = 0.95;
};

struct ExperimentConfig {
    MedafConfig model;
    OptimizerConfig optimizer;
    DataConfig data;
    ScoringConfig scoring;
    bool disable_diversity = false;
    std::string fusion_mode = "gating";  // gating | mean | single_expert_<i>
    std::string out_dir = "out";
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// JSON config round trip

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{
        {"model",
         {{"num_experts", c.model.num_experts},
          {"num_classes", c.model.num_classes},
          {"input_channels", c.model.input_channels},
          {"input_height", c.model.input_height},
          {"input_width", c.model.input_width},
          {"stem_channels", c.model.stem_channels},
          {"branch_channels", c.model.branch_channels},
          {"gating_hidden", c.model.gating_hidden},
          {"beta1", c.model.beta1},
          {"beta2", c.model.beta2},
          {"gamma", c.model.gamma}}},
        {"optimizer",
         {{"learning_rate", c.optimizer.learning_rate},
          {"momentum", c.optimizer.momentum},
          {"decay_epoch", c.optimizer.decay_epoch},
          {"decay_factor", c.optimizer.decay_factor}}},
        {"data",
         {{"source", c.data.source},
          {"idx_images", c.data.idx_images},
          {"idx_labels", c.data.idx_labels},
          {"synthetic",
           {{"num_classes", c.data.synthetic.num_classes},
            {"image_size", c.data.synthetic.image_size},
            {"noise_sigma", c.data.synthetic.noise_sigma}}},
          {"n_per_class", c.data.n_per_class},
          {"split",
           {{"known_classes", c.data.split.known_classes},
            {"unknown_classes", c.data.split.unknown_classes},
            {"seed", c.data.split.seed},
            {"train_fraction", c.data.split.train_fraction}}},
          {"batch_size", c.data.batch_size},
          {"epochs", c.data.epochs}}},
        {"scoring", {{"gamma", c.scoring.gamma}, {"target_tpr", c.scoring.target_tpr}}},
        {"disable_diversity", c.disable_diversity},
        {"fusion_mode", c.fusion_mode},
        {"out_dir", c.out_dir},
        {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    const auto& m = j.at("model");
    m.at("num_experts").get_to(c.model.num_experts);
    m.at("num_classes").get_to(c.model.num_classes);
    m.at("input_channels").get_to(c.model.input_channels);
    m.at("input_height").get_to(c.model.input_height);
    m.at("input_width").get_to(c.model.input_width);
    m.at("stem_channels").get_to(c.model.stem_channels);
    m.at("branch_channels").get_to(c.model.branch_channels);
    m.at("gating_hidden").get_to(c.model.gating_hidden);
    m.at("beta1").get_to(c.model.beta1);
    m.at("beta2").get_to(c.model.beta2);
    m.at("gamma").get_to(c.model.gamma);
    const auto& o = j.at("optimizer");
    o.at("learning_rate").get_to(c.optimizer.learning_rate);
    o.at("momentum").get_to(c.optimizer.momentum);
    o.at("decay_epoch").get_to(c.optimizer.decay_epoch);
    o.at("decay_factor").get_to(c.optimizer.decay_factor);
    const auto& d = j.at("data");
    d.at("source").get_to(c.data.source);
    d.at("idx_images").get_to(c.data.idx_images);
    d.at("idx_labels").get_to(c.data.idx_labels);
    d.at("synthetic").at("num_classes").get_to(c.data.synthetic.num_classes);
    d.at("synthetic").at("image_size").get_to(c.data.synthetic.image_size);
    d.at("synthetic").at("noise_sigma").get_to(c.data.synthetic.noise_sigma);
    d.at("n_per_class").get_to(c.data.n_per_class);
    d.at("split").at("known_classes").get_to(c.data.split.known_classes);
    d.at("split").at("unknown_classes").get_to(c.data.split.unknown_classes);
    d.at("split").at("seed").get_to(c.data.split.seed);
    d.at("split").at("train_fraction").get_to(c.data.split.train_fraction);
    d.at("batch_size").get_to(c.data.batch_size);
    d.at("epochs").get_to(c.data.epochs);
    const auto& s = j.at("scoring");
    s.at("gamma").get_to(c.scoring.gamma);
    s.at("target_tpr").get_to(c.scoring.target_tpr);
    j.at("disable_diversity").get_to(c.disable_diversity);
    j.at("fusion_mode").get_to(c.fusion_mode);
    j.at("out_dir").get_to(c.out_dir);
    j.at("seed").get_to(c.seed);
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    is >> j;
    return j.get<ExperimentConfig>();
}

// ---------------------------------------------------------------------------
// Atomic file helpers and deterministic number formatting

namespace detail {

inline void write_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
        os << content;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset preparation

inline SplitResult prepare_data(const ExperimentConfig& cfg) {
    LabeledImageSet raw;
    if (cfg.data.source == "synthetic") {
        raw = generate_synthetic(cfg.data.synthetic, cfg.data.n_per_class, cfg.seed);
    } else if (cfg.data.source == "idx") {
        raw = load_idx_pair(cfg.data.idx_images, cfg.data.idx_labels);
    } else {
        throw std::invalid_argument("unknown data source: " + cfg.data.source);
    }
    return apply_split(raw, cfg.data.split);
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
    int epoch = 0;
    double ce_global = 0.0;
    double ce_experts = 0.0;
    double diversity = 0.0;
    double total = 0.0;
    double test_accuracy = 0.0;
};

struct TrainResult {
    MedafModel model;
    std::vector<EpochLog> log;
    std::string checkpoint_final;
    std::string checkpoint_best;
    std::string loss_log_path;
};

inline double closed_set_accuracy(MedafModel& model, const LabeledImageSet& set,
                                  FusionMode fusion, int single_expert_index = 0) {
    if (set.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        Tape tape;
        Tensor img = normalized_image(set, i, model.norm.mean, model.norm.stddev);
        ForwardBundle b = forward(model, tape, img, std::nullopt, fusion, single_expert_index);
        int pred = static_cast<int>(std::max_element(b.fused_logits.data().begin(),
                                                     b.fused_logits.data().end()) -
                                    b.fused_logits.data().begin());
        if (pred == set.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

inline TrainResult train(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    if (c.disable_diversity) c.model.beta2 = 0.0;
    c.model.validate();
    FusionMode fusion = fusion_mode_from_string(c.fusion_mode);
    int single_idx = 0;
    if (fusion == FusionMode::SingleExpert && c.fusion_mode.size() > 14)
        single_idx = std::stoi(c.fusion_mode.substr(14));

    SplitResult data = prepare_data(c);
    if (data.train_known.size() == 0) throw std::runtime_error("train: empty training set");

    MedafModel model = build_model(c.model, c.seed);
    compute_normalization(data.train_known, model.norm.mean, model.norm.stddev);

    SgdMomentum opt(c.optimizer.learning_rate, c.optimizer.momentum);
    auto params = model.parameters();
    // Materialize zero gradient buffers up front: a non-gating fusion mode
    // never touches the gating network, so its parameters would otherwise
    // reach the optimizer without gradients.
    for (auto& p : params) p.grad();

    std::filesystem::create_directories(c.out_dir);
    TrainResult result;
    std::string log_csv = "epoch,ce_global,ce_experts_sum,diversity,total,test_accuracy\n";
    double best_acc = -1.0;
    result.checkpoint_final = c.out_dir + "/checkpoint_final.bin";
    result.checkpoint_best = c.out_dir + "/checkpoint_best.bin";
    result.loss_log_path = c.out_dir + "/loss_log.csv";

    for (int epoch = 0; epoch < c.data.epochs; ++epoch) {
        if (epoch == c.optimizer.decay_epoch)
            opt.set_learning_rate(c.optimizer.learning_rate * c.optimizer.decay_factor);
        auto epoch_batches =
            batches(data.train_known, c.data.batch_size, c.seed + 0x9e3779b97f4a7c15ULL * (epoch + 1),
                    /*shuffle=*/true);
        EpochLog row;
        row.epoch = epoch;
        std::size_t n_samples = 0;
        for (const auto& batch : epoch_batches) {
            double inv = 1.0 / static_cast<double>(batch.indices.size());
            for (std::size_t idx : batch.indices) {
                Tape tape;
                Tensor img = normalized_image(data.train_known, idx, model.norm.mean,
                                              model.norm.stddev);
                int label = data.train_known.labels[idx];
                ForwardBundle b = forward(model, tape, img, label, fusion, single_idx);
                LossBreakdown lb = total_loss(tape, b, label, c.model.beta1, c.model.beta2);
                double lv = lb.total.value();
                if (!std::isfinite(lv))
                    throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                             " sample " + std::to_string(idx));
                row.ce_global += lb.ce_global;
                row.ce_experts += lb.ce_experts;
                row.diversity += lb.diversity;
                row.total += lv;
                Tensor scaled = ops::scale(tape, lb.total, inv);
                tape.backward(scaled);
                ++n_samples;
            }
            opt.step(params);
        }
        row.ce_global /= n_samples;
        row.ce_experts /= n_samples;
        row.diversity /= n_samples;
        row.total /= n_samples;
        row.test_accuracy = closed_set_accuracy(model, data.test_known, fusion, single_idx);
        result.log.push_back(row);
        log_csv += std::to_string(row.epoch) + "," + detail::fmt(row.ce_global) + "," +
                   detail::fmt(row.ce_experts) + "," + detail::fmt(row.diversity) + "," +
                   detail::fmt(row.total) + "," + detail::fmt(row.test_accuracy) + "\n";
        if (row.test_accuracy > best_acc) {
            best_acc = row.test_accuracy;
            save_checkpoint_file(model, result.checkpoint_best);
        }
    }
    save_checkpoint_file(model, result.checkpoint_final);
    detail::write_file_atomic(result.loss_log_path, log_csv);
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Scoring a set with a model

struct ScoredSample {
    std::string id;
    int true_label = kUnknownLabel;  // remapped known label, or unknown
    OsrScore score;
    Tensor fused_logits;
};

inline std::vector<ScoredSample> score_set(MedafModel& model, const LabeledImageSet& set,
                                           const std::string& id_prefix, bool known, double gamma,
                                           FusionMode fusion, int single_expert_index = 0) {
    std::vector<ScoredSample> out;
    out.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        Tape tape;
        Tensor img = normalized_image(set, i, model.norm.mean, model.norm.stddev);
        ForwardBundle b = forward(model, tape, img, std::nullopt, fusion, single_expert_index);
        ScoredSample s;
        s.id = id_prefix + std::to_string(i);
        s.true_label = known ? set.labels[i] : kUnknownLabel;
        s.score = combined_score(b, gamma);
        s.fused_logits = b.fused_logits;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Calibration

inline ThresholdCalibration calibrate(const ExperimentConfig& cfg, const std::string& checkpoint,
                                      const std::string& tau_path) {
    MedafModel model = load_checkpoint_file(checkpoint);
    FusionMode fusion = fusion_mode_from_string(cfg.fusion_mode);
    int single_idx = 0;
    if (fusion == FusionMode::SingleExpert && cfg.fusion_mode.size() > 14)
        single_idx = std::stoi(cfg.fusion_mode.substr(14));
    SplitResult data = prepare_data(cfg);
    if (data.test_known.size() == 0) throw std::runtime_error("calibrate: empty calibration set");
    auto scored = score_set(model, data.test_known, "k", true, cfg.scoring.gamma, fusion,
                            single_idx);
    std::vector<double> scores;
    for (const auto& s : scored) scores.push_back(s.score.s_total);
    ThresholdCalibration cal = calibrate_threshold(scores, cfg.scoring.target_tpr);
    nlohmann::json j{{"tau", cal.tau},
                     {"target_tpr", cal.target_tpr},
                     {"n_known_used", cal.n_known_used},
                     {"achieved_acceptance", cal.achieved_acceptance},
                     {"gamma", cfg.scoring.gamma}};
    detail::write_file_atomic(tau_path, j.dump(2) + "\n");
    return cal;
}

inline ThresholdCalibration load_tau_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open threshold file " + path);
    nlohmann::json j;
    is >> j;
    ThresholdCalibration cal;
    cal.tau = j.at("tau").get<double>();
    cal.target_tpr = j.at("target_tpr").get<double>();
    cal.n_known_used = j.at("n_known_used").get<std::size_t>();
    cal.achieved_acceptance = j.at("achieved_acceptance").get<double>();
    return cal;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluateResult {
    MetricsReport report;
    std::string dump_path;
    std::string report_txt_path;
    std::string report_json_path;
};

inline std::string label_str(int label) {
    return label == kUnknownLabel ? "UNKNOWN" : std::to_string(label);
}

inline EvaluateResult evaluate(const ExperimentConfig& cfg, const std::string& checkpoint,
                               std::optional<double> tau) {
    MedafModel model = load_checkpoint_file(checkpoint);
    FusionMode fusion = fusion_mode_from_string(cfg.fusion_mode);
    int single_idx = 0;
    if (fusion == FusionMode::SingleExpert && cfg.fusion_mode.size() > 14)
        single_idx = std::stoi(cfg.fusion_mode.substr(14));
    SplitResult data = prepare_data(cfg);

    auto known = score_set(model, data.test_known, "k", true, cfg.scoring.gamma, fusion,
                           single_idx);
    auto unknown = score_set(model, data.test_unknown, "u", false, cfg.scoring.gamma, fusion,
                             single_idx);

    std::vector<double> known_scores, unknown_scores;
    for (const auto& s : known) known_scores.push_back(s.score.s_total);
    for (const auto& s : unknown) unknown_scores.push_back(s.score.s_total);

    MetricsReport report = compute_metrics(known_scores, unknown_scores);
    report.closed_set_accuracy = closed_set_accuracy(model, data.test_known, fusion, single_idx);

    // Score dump: one row per sample.
    std::string dump = "sample_id,true_label,s_lg,s_ft,s_total,decision\n";
    std::vector<int> decisions, truths;
    auto emit = [&](const std::vector<ScoredSample>& side) {
        for (const auto& s : side) {
            int d = tau ? decide(s.score, *tau, s.fused_logits) : kUnknownLabel;
            dump += s.id + "," + label_str(s.true_label) + "," + detail::fmt(s.score.s_lg) + "," +
                    detail::fmt(s.score.s_ft) + "," + detail::fmt(s.score.s_total) + "," +
                    (tau ? label_str(d) : std::string("NA")) + "\n";
            if (tau) {
                decisions.push_back(d);
                truths.push_back(s.true_label);
            }
        }
    };
    emit(known);
    emit(unknown);
    if (tau && !unknown.empty())
        report.macro_f1 = metrics::macro_f1_k_plus_1(decisions, truths, cfg.model.num_classes);

    std::filesystem::create_directories(cfg.out_dir);
    EvaluateResult out;
    out.report = report;
    out.dump_path = cfg.out_dir + "/scores.csv";
    out.report_txt_path = cfg.out_dir + "/report.txt";
    out.report_json_path = cfg.out_dir + "/report.json";
    detail::write_file_atomic(out.dump_path, dump);

    auto put = [](std::string& txt, nlohmann::json& j, const char* key,
                  const std::optional<double>& v) {
        if (v) {
            txt += std::string(key) + "=" + detail::fmt(*v) + "\n";
            j[key] = *v;
        } else {
            txt += std::string(key) + "=absent\n";
            j[key] = nullptr;
        }
    };
    std::string txt;
    nlohmann::json j;
    put(txt, j, "auroc", report.auroc);
    put(txt, j, "tnr_at_tpr95", report.tnr_at_tpr95);
    put(txt, j, "dtacc", report.dtacc);
    put(txt, j, "auin", report.auin);
    put(txt, j, "auout", report.auout);
    put(txt, j, "macro_f1", report.macro_f1);
    put(txt, j, "closed_set_accuracy", report.closed_set_accuracy);
    txt += "n_known=" + std::to_string(report.n_known) + "\n";
    txt += "n_unknown=" + std::to_string(report.n_unknown) + "\n";
    j["n_known"] = report.n_known;
    j["n_unknown"] = report.n_unknown;
    detail::write_file_atomic(out.report_txt_path, txt);
    detail::write_file_atomic(out.report_json_path, j.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// CAM heatmap export (binary PGM, min-max scaled, nearest-neighbor upsampled
// to input resolution)

namespace detail {

inline std::string render_pgm(const std::vector<double>& map, int h, int w, int out_h, int out_w) {
    double lo = *std::min_element(map.begin(), map.end());
    double hi = *std::max_element(map.begin(), map.end());
    std::string pgm = "P5\n" + std::to_string(out_w) + " " + std::to_string(out_h) + "\n255\n";
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            int sy = y * h / out_h, sx = x * w / out_w;
            double v = map[static_cast<std::size_t>(sy) * w + sx];
            int q = (hi > lo) ? static_cast<int>(std::lround((v - lo) / (hi - lo) * 255.0)) : 0;
            pgm.push_back(static_cast<char>(static_cast<unsigned char>(q)));
        }
    return pgm;
}

}  // namespace detail

// Per input: one heatmap file per expert (post-threshold CAM) plus the
// across-expert mean map. Returns the written file paths.
inline std::vector<std::string> export_cams(const ExperimentConfig& cfg,
                                            const std::string& checkpoint,
                                            const LabeledImageSet& images,
                                            std::optional<int> cam_class = std::nullopt) {
    MedafModel model = load_checkpoint_file(checkpoint);
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<std::string> written;
    int H = model.config.input_height, W = model.config.input_width;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Tape tape;
        Tensor img = normalized_image(images, i, model.norm.mean, model.norm.stddev);
        ForwardBundle b = forward(model, tape, img, cam_class);
        int h = b.expert_outputs[0].feature_map.shape()[1];
        int w = b.expert_outputs[0].feature_map.shape()[2];
        std::vector<double> mean_map(static_cast<std::size_t>(h) * w, 0.0);
        for (std::size_t e = 0; e < b.expert_outputs.size(); ++e) {
            Tensor cam = cam_postprocess(tape, b.expert_outputs[e].cam_for_label);
            for (std::size_t p = 0; p < cam.numel(); ++p)
                mean_map[p] += cam.data()[p] / static_cast<double>(b.expert_outputs.size());
            std::string path = cfg.out_dir + "/cam_s" + std::to_string(i) + "_e" +
                               std::to_string(e) + "_c" +
                               std::to_string(b.expert_outputs[e].cam_class) + ".pgm";
            detail::write_file_atomic(path, detail::render_pgm(cam.data(), h, w, H, W));
            written.push_back(path);
        }
        std::string path = cfg.out_dir + "/cam_s" + std::to_string(i) + "_mean_c" +
                           std::to_string(b.expert_outputs[0].cam_class) + ".pgm";
        detail::write_file_atomic(path, detail::render_pgm(mean_map, h, w, H, W));
        written.push_back(path);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Ablation grid (single expert / +diversity with mean fusion / +gating) and
// the expert-count sweep.

struct RunSummary {
    std::string name;
    double beta2 = 0.0;
    std::string fusion_mode;
    int num_experts = 0;
    double closed_set_accuracy = 0.0;
    double auroc = 0.0;
};

inline RunSummary run_pipeline(ExperimentConfig cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    TrainResult tr = train(cfg);
    std::string tau_path = cfg.out_dir + "/tau.json";
    ThresholdCalibration cal = calibrate(cfg, tr.checkpoint_final, tau_path);
    EvaluateResult ev = evaluate(cfg, tr.checkpoint_final, cal.tau);
    RunSummary s;
    s.name = name;
    s.beta2 = cfg.disable_diversity ? 0.0 : cfg.model.beta2;
    s.fusion_mode = cfg.fusion_mode;
    s.num_experts = cfg.model.num_experts;
    s.closed_set_accuracy = ev.report.closed_set_accuracy.value_or(0.0);
    s.auroc = ev.report.auroc.value_or(std::numeric_limits<double>::quiet_NaN());
    return s;
}

inline std::vector<RunSummary> ablate(const ExperimentConfig& base) {
    std::vector<RunSummary> rows;
    {
        ExperimentConfig c = base;
        c.disable_diversity = true;
        c.fusion_mode = "single_expert_0";
        c.out_dir = base.out_dir + "/ablate_baseline";
        rows.push_back(run_pipeline(c, "baseline"));
    }
    {
        ExperimentConfig c = base;
        c.disable_diversity = false;
        c.fusion_mode = "mean";
        c.out_dir = base.out_dir + "/ablate_diversity_mean";
        rows.push_back(run_pipeline(c, "diversity_mean"));
    }
    {
        ExperimentConfig c = base;
        c.disable_diversity = false;
        c.fusion_mode = "gating";
        c.out_dir = base.out_dir + "/ablate_diversity_gating";
        rows.push_back(run_pipeline(c, "diversity_gating"));
    }
    std::string csv = "name,beta2,fusion_mode,num_experts,closed_set_accuracy,auroc\n";
    for (const auto& r : rows)
        csv += r.name + "," + detail::fmt(r.beta2) + "," + r.fusion_mode + "," +
               std::to_string(r.num_experts) + "," + detail::fmt(r.closed_set_accuracy) + "," +
               detail::fmt(r.auroc) + "\n";
    detail::write_file_atomic(base.out_dir + "/ablation.csv", csv);
    return rows;
}

inline std::vector<RunSummary> sweep_experts(const ExperimentConfig& base,
                                             const std::vector<int>& expert_counts = {1, 2, 3, 4,
                                                                                      5}) {
    std::vector<RunSummary> rows;
    for (int n : expert_counts) {
        ExperimentConfig c = base;
        c.model.num_experts = n;
        if (n == 1) {
            // degenerate baseline: no expert pair for the diversity term,
            // gating bypassed
            c.disable_diversity = true;
            c.fusion_mode = "single_expert_0";
        }
        c.out_dir = base.out_dir + "/sweep_n" + std::to_string(n);
        rows.push_back(run_pipeline(c, "experts_" + std::to_string(n)));
    }
    std::string csv = "num_experts,closed_set_accuracy,auroc\n";
    for (const auto& r : rows)
        csv += std::to_string(r.num_experts) + "," + detail::fmt(r.closed_set_accuracy) + "," +
               detail::fmt(r.auroc) + "\n";
    detail::write_file_atomic(base.out_dir + "/sweep_experts.csv", csv);
    return rows;
}

}  // namespace medaf
