#pragma once

// The multi-expert model: a shared stem, N expert branches ending in a 1x1
// convolution to K channels (so per-class feature maps double as CAMs), and
// a gating network producing softmax fusion weights over the experts.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "medaf/tensor.hpp"

namespace medaf {

struct MedafConfig {
    int num_experts = 3;
    int num_classes = 6;
    int input_channels = 1;
    int input_height = 32;
    int input_width = 32;
    // Backbone layer list (fixed so parameter counts are checkable):
    //   stem:   3x3 conv stride 2 -> stem_channels[0], ReLU,
    //           3x3 conv stride 2 -> stem_channels[1], ReLU
    //   branch: 3x3 conv stride 1 -> branch_channels[0], ReLU,
    //           3x3 conv stride 1 -> branch_channels[1], ReLU,
    //           1x1 conv -> num_classes
    //   gating: branch feature extractor (without the 1x1 head), GAP,
    //           FC -> gating_hidden, ReLU, FC -> num_experts, softmax
    std::vector<int> stem_channels = {6, 12};
    std::vector<int> branch_channels = {16, 16};
    int gating_hidden = 16;
    double beta1 = 1.0;
    double beta2 = 0.1;
    double gamma = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_experts < 1) throw std::invalid_argument("num_experts must be >= 1");
        if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
        if (stem_channels.size() != 2 || branch_channels.size() != 2)
            throw std::invalid_argument("backbone expects two stem and two branch widths");
        for (int c : stem_channels)
            if (c < 1) throw std::invalid_argument("stem channel width must be positive");
        for (int c : branch_channels)
            if (c < 1) throw std::invalid_argument("branch channel width must be positive");
        if (gating_hidden < 1) throw std::invalid_argument("gating_hidden must be positive");
        if (input_channels < 1 || input_height < 4 || input_width < 4)
            throw std::invalid_argument("input shape too small");
    }
};

struct ExpertOutput {
    Tensor feature_map;    // [K,H,W], output of the 1x1 class head
    Tensor cam_for_label;  // [H,W], channel of feature_map at the CAM class
    Tensor logits;         // [K], GAP over feature_map
    int cam_class = -1;
};

enum class FusionMode { Gating, Mean, SingleExpert };

inline FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "gating") return FusionMode::Gating;
    if (s == "mean") return FusionMode::Mean;
    if (s.rfind("single_expert", 0) == 0) return FusionMode::SingleExpert;
    throw std::invalid_argument("unknown fusion mode: " + s);
}

struct ForwardBundle {
    std::vector<ExpertOutput> expert_outputs;
    Tensor gating_weights;  // [N], nonnegative, sums to 1
    Tensor fused_logits;    // [K], sum_i w_i * l_i
};

struct ConvLayer {
    Tensor weight;  // [Cout,Cin,kh,kw]
    Tensor bias;    // [Cout]
    int stride = 1;
    int padding = 1;
};

struct Branch {
    std::vector<ConvLayer> convs;  // feature extractor blocks
};

// Normalization constants computed on the training knowns; stored in the
// checkpoint so inference matches training.
struct Normalization {
    std::vector<double> mean;  // per input channel
    std::vector<double> stddev;
};

class MedafModel {
public:
    MedafConfig config;
    std::vector<ConvLayer> stem;
    std::vector<Branch> expert_branches;     // N branches
    std::vector<ConvLayer> expert_heads;     // N 1x1 convs to K channels
    Branch gating_branch;
    Tensor gating_fc1_w, gating_fc1_b;  // [h, branch_out], [h]
    Tensor gating_fc2_w, gating_fc2_b;  // [N, h], [N]
    Normalization norm;

    // All parameters in documented declaration order: stem convs (w,b), then
    // per expert branch convs (w,b) + head (w,b), then gating convs (w,b) +
    // fc1 (w,b) + fc2 (w,b).
    std::vector<Tensor> parameters() {
        std::vector<Tensor> out;
        auto push_conv = [&](ConvLayer& c) {
            out.push_back(c.weight);
            out.push_back(c.bias);
        };
        for (auto& c : stem) push_conv(c);
        for (int i = 0; i < config.num_experts; ++i) {
            for (auto& c : expert_branches[i].convs) push_conv(c);
            push_conv(expert_heads[i]);
        }
        for (auto& c : gating_branch.convs) push_conv(c);
        out.push_back(gating_fc1_w);
        out.push_back(gating_fc1_b);
        out.push_back(gating_fc2_w);
        out.push_back(gating_fc2_b);
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto& p : parameters()) n += p.numel();
        return n;
    }
};

namespace detail {

// Fan-in-scaled uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero.
inline Tensor init_weight(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : t.data()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

inline ConvLayer make_conv(int cin, int cout, int k, int stride, int padding,
                           std::mt19937_64& rng) {
    ConvLayer c;
    c.weight = init_weight({cout, cin, k, k}, static_cast<std::size_t>(cin) * k * k, rng);
    c.bias = Tensor({cout});
    c.bias.set_requires_grad(true);
    c.stride = stride;
    c.padding = padding;
    return c;
}

inline Branch make_branch(const MedafConfig& cfg, std::mt19937_64& rng) {
    Branch b;
    b.convs.push_back(make_conv(cfg.stem_channels[1], cfg.branch_channels[0], 3, 1, 1, rng));
    b.convs.push_back(make_conv(cfg.branch_channels[0], cfg.branch_channels[1], 3, 1, 1, rng));
    return b;
}

}  // namespace detail

inline MedafModel build_model(const MedafConfig& config, std::uint64_t rng_seed) {
    config.validate();
    MedafModel m;
    m.config = config;
    std::mt19937_64 rng(rng_seed);
    m.stem.push_back(detail::make_conv(config.input_channels, config.stem_channels[0], 3, 2, 1, rng));
    m.stem.push_back(detail::make_conv(config.stem_channels[0], config.stem_channels[1], 3, 2, 1, rng));
    for (int i = 0; i < config.num_experts; ++i) {
        m.expert_branches.push_back(detail::make_branch(config, rng));
        ConvLayer head;
        head.weight = detail::init_weight({config.num_classes, config.branch_channels[1], 1, 1},
                                          config.branch_channels[1], rng);
        head.bias = Tensor({config.num_classes});
        head.bias.set_requires_grad(true);
        head.stride = 1;
        head.padding = 0;
        m.expert_heads.push_back(head);
    }
    m.gating_branch = detail::make_branch(config, rng);
    int bout = config.branch_channels[1];
    m.gating_fc1_w = detail::init_weight({config.gating_hidden, bout}, bout, rng);
    m.gating_fc1_b = Tensor({config.gating_hidden});
    m.gating_fc1_b.set_requires_grad(true);
    // Down-scaled output layer: gating starts near uniform fusion and only
    // deviates where training finds a per-sample competence signal.
    m.gating_fc2_w = detail::init_weight({config.num_experts, config.gating_hidden},
                                         config.gating_hidden, rng);
    for (auto& v : m.gating_fc2_w.data()) v *= 0.1;
    m.gating_fc2_b = Tensor({config.num_experts});
    m.gating_fc2_b.set_requires_grad(true);
    m.norm.mean.assign(config.input_channels, 0.0);
    m.norm.stddev.assign(config.input_channels, 1.0);
    return m;
}

inline MedafModel build_model(const MedafConfig& config) { return build_model(config, config.seed); }

namespace detail {

inline Tensor run_convs(Tape& tape, const std::vector<ConvLayer>& layers, Tensor x) {
    for (const auto& c : layers) {
        x = ops::conv2d(tape, x, c.weight, c.stride, c.padding);
        x = ops::add_channel_bias(tape, x, c.bias);
        x = ops::relu(tape, x);
    }
    return x;
}

}  // namespace detail

// Slice of the expert's class feature map at class k. No normalization.
inline Tensor extract_cam(Tape& tape, const ExpertOutput& eo, int k) {
    return ops::channel_slice(tape, eo.feature_map, k);
}

// Forward pass. When label_for_cam is absent each expert's CAM uses its own
// argmax class (inference mode); when present it uses the ground-truth class.
inline ForwardBundle forward(MedafModel& model, Tape& tape, const Tensor& image,
                             std::optional<int> label_for_cam = std::nullopt,
                             FusionMode fusion = FusionMode::Gating, int single_expert_index = 0) {
    const auto& cfg = model.config;
    if (image.shape() != Shape{cfg.input_channels, cfg.input_height, cfg.input_width})
        throw std::invalid_argument("forward: image shape " + shape_str(image.shape()) +
                                    " does not match config");
    if (label_for_cam && (*label_for_cam < 0 || *label_for_cam >= cfg.num_classes))
        throw std::invalid_argument("forward: label_for_cam out of range");
    if (fusion == FusionMode::SingleExpert &&
        (single_expert_index < 0 || single_expert_index >= cfg.num_experts))
        throw std::invalid_argument("forward: single_expert_index out of range");

    ForwardBundle bundle;
    Tensor shared = detail::run_convs(tape, model.stem, image);

    for (int i = 0; i < cfg.num_experts; ++i) {
        Tensor feat = detail::run_convs(tape, model.expert_branches[i].convs, shared);
        const auto& head = model.expert_heads[i];
        Tensor fmap = ops::conv2d(tape, feat, head.weight, 1, 0);
        fmap = ops::add_channel_bias(tape, fmap, head.bias);
        ExpertOutput eo;
        eo.feature_map = fmap;
        eo.logits = ops::global_average_pool(tape, fmap);
        if (label_for_cam) {
            eo.cam_class = *label_for_cam;
        } else {
            eo.cam_class = static_cast<int>(
                std::max_element(eo.logits.data().begin(), eo.logits.data().end()) -
                eo.logits.data().begin());
        }
        eo.cam_for_label = extract_cam(tape, eo, eo.cam_class);
        bundle.expert_outputs.push_back(std::move(eo));
    }

    int N = cfg.num_experts;
    if (fusion == FusionMode::Gating && N > 1) {
        Tensor gfeat = detail::run_convs(tape, model.gating_branch.convs, shared);
        Tensor gvec = ops::global_average_pool(tape, gfeat);
        Tensor h = ops::relu(tape, ops::linear(tape, gvec, model.gating_fc1_w, model.gating_fc1_b));
        Tensor glogits = ops::linear(tape, h, model.gating_fc2_w, model.gating_fc2_b);
        bundle.gating_weights = ops::softmax(tape, glogits);
    } else if (fusion == FusionMode::Mean && N > 1) {
        bundle.gating_weights = Tensor({N}, 1.0 / N);
    } else if (fusion == FusionMode::SingleExpert) {
        bundle.gating_weights = Tensor({N});
        bundle.gating_weights.data()[single_expert_index] = 1.0;
    } else {  // N == 1: gating bypassed
        bundle.gating_weights = Tensor({1}, 1.0);
    }

    Tensor fused;
    for (int i = 0; i < N; ++i) {
        Tensor wi = ops::index(tape, bundle.gating_weights, i);
        Tensor term = ops::mul_scalar(tape, bundle.expert_outputs[i].logits, wi);
        fused = (i == 0) ? term : ops::add(tape, fused, term);
    }
    bundle.fused_logits = fused;
    return bundle;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "MEDAF1", config block, normalization constants,
// then all parameters in declaration order as little-endian doubles with
// shape headers.

namespace detail {

inline void write_i32(std::ostream& os, std::int32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::int32_t read_i32(std::istream& is) {
    std::int32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("checkpoint truncated");
    return v;
}
inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw std::runtime_error("checkpoint truncated");
    return v;
}
inline double read_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw std::runtime_error("checkpoint truncated");
    return v;
}

}  // namespace detail

inline void save_checkpoint(MedafModel& model, std::ostream& os) {
    os.write("MEDAF1", 6);
    const auto& c = model.config;
    detail::write_i32(os, c.num_experts);
    detail::write_i32(os, c.num_classes);
    detail::write_i32(os, c.input_channels);
    detail::write_i32(os, c.input_height);
    detail::write_i32(os, c.input_width);
    detail::write_i32(os, c.stem_channels[0]);
    detail::write_i32(os, c.stem_channels[1]);
    detail::write_i32(os, c.branch_channels[0]);
    detail::write_i32(os, c.branch_channels[1]);
    detail::write_i32(os, c.gating_hidden);
    detail::write_f64(os, c.beta1);
    detail::write_f64(os, c.beta2);
    detail::write_f64(os, c.gamma);
    detail::write_u64(os, c.seed);
    for (int ch = 0; ch < c.input_channels; ++ch) {
        detail::write_f64(os, model.norm.mean[ch]);
        detail::write_f64(os, model.norm.stddev[ch]);
    }
    auto params = model.parameters();
    detail::write_i32(os, static_cast<std::int32_t>(params.size()));
    for (auto& p : params) {
        detail::write_i32(os, static_cast<std::int32_t>(p.shape().size()));
        for (int d : p.shape()) detail::write_i32(os, d);
        for (double v : p.data()) detail::write_f64(os, v);
    }
}

inline MedafModel load_checkpoint(std::istream& is) {
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, "MEDAF1", 6) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    MedafConfig c;
    c.num_experts = detail::read_i32(is);
    c.num_classes = detail::read_i32(is);
    c.input_channels = detail::read_i32(is);
    c.input_height = detail::read_i32(is);
    c.input_width = detail::read_i32(is);
    c.stem_channels = {detail::read_i32(is), detail::read_i32(is)};
    c.branch_channels = {detail::read_i32(is), detail::read_i32(is)};
    c.gating_hidden = detail::read_i32(is);
    c.beta1 = detail::read_f64(is);
    c.beta2 = detail::read_f64(is);
    c.gamma = detail::read_f64(is);
    c.seed = detail::read_u64(is);
    MedafModel m = build_model(c, c.seed);
    for (int ch = 0; ch < c.input_channels; ++ch) {
        m.norm.mean[ch] = detail::read_f64(is);
        m.norm.stddev[ch] = detail::read_f64(is);
    }
    auto params = m.parameters();
    std::int32_t count = detail::read_i32(is);
    if (count != static_cast<std::int32_t>(params.size()))
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (auto& p : params) {
        std::int32_t ndim = detail::read_i32(is);
        Shape shape(ndim);
        for (auto& d : shape) d = detail::read_i32(is);
        if (shape != p.shape()) throw std::runtime_error("checkpoint: parameter shape mismatch");
        for (auto& v : p.data()) v = detail::read_f64(is);
    }
    return m;
}

inline void save_checkpoint_file(MedafModel& model, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
        save_checkpoint(model, os);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

inline MedafModel load_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path);
    return load_checkpoint(is);
}

}  // namespace medaf
