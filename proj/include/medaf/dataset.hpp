#pragma once

// Data ingestion and preparation: IDX file parsing, a deterministic synthetic
// shape-image generator, known/unknown class splits, and seeded batching.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "medaf/tensor.hpp"

namespace medaf {

struct LabeledImageSet {
    int channels = 1;
    int height = 0;
    int width = 0;
    std::vector<std::vector<double>> images;  // each C*H*W, row-major, values in [0,1]
    std::vector<int> labels;
    std::vector<std::string> class_names;

    std::size_t size() const { return images.size(); }

    Tensor image_tensor(std::size_t i) const {
        return Tensor::from({channels, height, width}, images[i]);
    }
};

struct SplitSpec {
    std::vector<int> known_classes;
    std::vector<int> unknown_classes;
    std::uint64_t seed = 0;
    double train_fraction = 0.75;
};

struct SplitResult {
    LabeledImageSet train_known;   // labels remapped to 0..K-1
    LabeledImageSet test_known;    // labels remapped to 0..K-1
    LabeledImageSet test_unknown;  // labels keep original ids
};

class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// IDX (big-endian header, u8 payload)

namespace detail {

inline std::uint32_t read_be32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IngestionError(std::string("truncated IDX header: ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace detail

inline LabeledImageSet load_idx_pair(const std::string& images_path,
                                     const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IngestionError("cannot open IDX image file " + images_path);
    std::ifstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw IngestionError("cannot open IDX label file " + labels_path);

    std::uint32_t img_magic = detail::read_be32(imgs, "image magic");
    if (img_magic != 0x00000803)
        throw IngestionError("bad IDX image magic 0x" + std::to_string(img_magic));
    std::uint32_t n_images = detail::read_be32(imgs, "image count");
    std::uint32_t rows = detail::read_be32(imgs, "rows");
    std::uint32_t cols = detail::read_be32(imgs, "cols");

    std::uint32_t lbl_magic = detail::read_be32(lbls, "label magic");
    if (lbl_magic != 0x00000801)
        throw IngestionError("bad IDX label magic 0x" + std::to_string(lbl_magic));
    std::uint32_t n_labels = detail::read_be32(lbls, "label count");
    if (n_images != n_labels)
        throw IngestionError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                             std::to_string(n_labels) + " labels");

    LabeledImageSet set;
    set.channels = 1;
    set.height = static_cast<int>(rows);
    set.width = static_cast<int>(cols);
    std::size_t px = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(px);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(px));
        if (!imgs) throw IngestionError("truncated IDX image payload at image " + std::to_string(i));
        std::vector<double> img(px);
        for (std::size_t j = 0; j < px; ++j) img[j] = buf[j] / 255.0;
        set.images.push_back(std::move(img));
        char lb;
        lbls.read(&lb, 1);
        if (!lbls) throw IngestionError("truncated IDX label payload at label " + std::to_string(i));
        set.labels.push_back(static_cast<unsigned char>(lb));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Synthetic generator: ten parametric shape families rendered at 32x32,
// single channel, with jittered geometry, intensity, and pixel noise. The
// families deliberately share local structure (bars vs crosses vs diagonal
// stripes, coarse vs fine checkers, one blob vs two) so single-feature
// shortcuts misclassify some pairs.

struct SyntheticSpec {
    int num_classes = 10;  // 2..10
    int image_size = 32;
    double noise_sigma = 0.08;
};

namespace detail {

struct SynthCanvas {
    int n;
    std::vector<double>& px;
    double& at(int y, int x) { return px[static_cast<std::size_t>(y) * n + x]; }
};

inline void draw_periodic(SynthCanvas c, double angle, int period, int thickness, double phase,
                          double intensity) {
    double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < c.n; ++y)
        for (int x = 0; x < c.n; ++x) {
            double t = x * ca + y * sa + phase;
            double m = t - period * std::floor(t / period);
            if (m < thickness) c.at(y, x) = std::max(c.at(y, x), intensity);
        }
}

inline void draw_ring(SynthCanvas c, double cy, double cx, double r, double thickness,
                      double intensity) {
    for (int y = 0; y < c.n; ++y)
        for (int x = 0; x < c.n; ++x) {
            double d = std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx));
            if (std::abs(d - r) <= thickness) c.at(y, x) = std::max(c.at(y, x), intensity);
        }
}

inline void draw_blob(SynthCanvas c, double cy, double cx, double r, double intensity) {
    for (int y = 0; y < c.n; ++y)
        for (int x = 0; x < c.n; ++x) {
            double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            double v = intensity * std::exp(-d2 / (2.0 * r * r));
            c.at(y, x) = std::max(c.at(y, x), v);
        }
}

inline void draw_checker(SynthCanvas c, int period, double phase_y, double phase_x,
                         double intensity) {
    for (int y = 0; y < c.n; ++y)
        for (int x = 0; x < c.n; ++x) {
            int cy = static_cast<int>(std::floor((y + phase_y) / period));
            int cx = static_cast<int>(std::floor((x + phase_x) / period));
            if ((cy + cx) % 2 == 0) c.at(y, x) = std::max(c.at(y, x), intensity);
        }
}

}  // namespace detail

inline std::vector<double> render_synthetic_image(int cls, int n, double noise_sigma,
                                                  std::mt19937_64& rng) {
    std::vector<double> px(static_cast<std::size_t>(n) * n, 0.0);
    detail::SynthCanvas c{n, px};
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double intensity = 0.6 + 0.4 * u01(rng);
    double jx = (u01(rng) - 0.5) * 8.0, jy = (u01(rng) - 0.5) * 8.0;
    const double pi = 3.14159265358979323846;
    switch (cls) {
        case 0:  // vertical stripes
            detail::draw_periodic(c, 0.0, 6 + (rng() % 3), 2 + (rng() % 2), u01(rng) * 8.0,
                                  intensity);
            break;
        case 1:  // horizontal stripes
            detail::draw_periodic(c, pi / 2, 6 + (rng() % 3), 2 + (rng() % 2), u01(rng) * 8.0,
                                  intensity);
            break;
        case 2:  // ring
            detail::draw_ring(c, n / 2.0 + jy / 2, n / 2.0 + jx / 2, 8.0 + 4.0 * u01(rng), 1.5,
                              intensity);
            break;
        case 3:  // single blob
            detail::draw_blob(c, n / 2.0 + jy, n / 2.0 + jx, 4.0 + 3.0 * u01(rng), intensity);
            break;
        case 4:  // coarse checker
            detail::draw_checker(c, 8, u01(rng) * 8.0, u01(rng) * 8.0, intensity);
            break;
        case 5: {  // cross: one vertical and one horizontal bar
            int bx = n / 4 + static_cast<int>(u01(rng) * n / 2);
            int by = n / 4 + static_cast<int>(u01(rng) * n / 2);
            int th = 2 + static_cast<int>(rng() % 2);
            for (int y = 0; y < n; ++y)
                for (int t = 0; t < th; ++t)
                    if (bx + t < n) c.at(y, bx + t) = std::max(c.at(y, bx + t), intensity);
            for (int x = 0; x < n; ++x)
                for (int t = 0; t < th; ++t)
                    if (by + t < n) c.at(by + t, x) = std::max(c.at(by + t, x), intensity);
            break;
        }
        case 6:  // diagonal stripes, rising
            detail::draw_periodic(c, pi / 4, 6 + (rng() % 3), 2 + (rng() % 2), u01(rng) * 8.0,
                                  intensity);
            break;
        case 7:  // diagonal stripes, falling
            detail::draw_periodic(c, -pi / 4, 6 + (rng() % 3), 2 + (rng() % 2), u01(rng) * 8.0,
                                  intensity);
            break;
        case 8:  // fine checker
            detail::draw_checker(c, 4, u01(rng) * 4.0, u01(rng) * 4.0, intensity);
            break;
        case 9: {  // two small blobs
            double dy = (u01(rng) - 0.5) * 6.0, dx = (u01(rng) - 0.5) * 6.0;
            detail::draw_blob(c, n * 0.3 + dy, n * 0.3 + dx, 2.5 + 1.5 * u01(rng), intensity);
            detail::draw_blob(c, n * 0.7 + dy, n * 0.7 + dx, 2.5 + 1.5 * u01(rng), intensity);
            break;
        }
        default:
            throw std::invalid_argument("synthetic class out of range");
    }
    if (noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, noise_sigma);
        for (auto& v : px) v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    return px;
}

inline LabeledImageSet generate_synthetic(const SyntheticSpec& spec, int n_per_class,
                                          std::uint64_t seed) {
    if (spec.num_classes < 2 || spec.num_classes > 10)
        throw std::invalid_argument("synthetic generator supports 2..10 classes");
    if (n_per_class < 1) throw std::invalid_argument("n_per_class must be positive");
    if (spec.image_size < 8) throw std::invalid_argument("image_size too small");
    static const char* kNames[10] = {"vstripes", "hstripes", "ring",       "blob", "checker8",
                                     "cross",    "diag_up",  "diag_down", "checker4", "twin_blobs"};
    LabeledImageSet set;
    set.channels = 1;
    set.height = set.width = spec.image_size;
    std::mt19937_64 rng(seed);
    for (int cls = 0; cls < spec.num_classes; ++cls) {
        set.class_names.push_back(kNames[cls]);
        for (int i = 0; i < n_per_class; ++i) {
            set.images.push_back(
                render_synthetic_image(cls, spec.image_size, spec.noise_sigma, rng));
            set.labels.push_back(cls);
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Split protocol: unknown classes appear only in test_unknown; known labels
// are remapped contiguously (known_classes[j] -> j); per-class train/test
// split by seeded shuffle.

inline SplitResult apply_split(const LabeledImageSet& data, const SplitSpec& spec) {
    for (int u : spec.unknown_classes)
        for (int k : spec.known_classes)
            if (u == k)
                throw std::invalid_argument("split: class " + std::to_string(k) +
                                            " is both known and unknown");
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    std::vector<int> remap(1 + *std::max_element(data.labels.begin(), data.labels.end()), -1);
    for (std::size_t j = 0; j < spec.known_classes.size(); ++j) {
        int cls = spec.known_classes[j];
        if (cls < 0 || cls >= static_cast<int>(remap.size()))
            throw std::invalid_argument("split: known class " + std::to_string(cls) +
                                        " not present in data");
        remap[cls] = static_cast<int>(j);
    }

    SplitResult out;
    auto init_like = [&](LabeledImageSet& s) {
        s.channels = data.channels;
        s.height = data.height;
        s.width = data.width;
    };
    init_like(out.train_known);
    init_like(out.test_known);
    init_like(out.test_unknown);

    std::mt19937_64 rng(spec.seed);
    for (int cls : spec.known_classes) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.labels[i] == cls) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t n_train =
            static_cast<std::size_t>(std::llround(spec.train_fraction * idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            auto& dst = (j < n_train) ? out.train_known : out.test_known;
            dst.images.push_back(data.images[idx[j]]);
            dst.labels.push_back(remap[cls]);
        }
    }
    for (int cls : spec.unknown_classes)
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.labels[i] == cls) {
                out.test_unknown.images.push_back(data.images[i]);
                out.test_unknown.labels.push_back(cls);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Batching: each epoch covers every sample exactly once; the last batch may
// be short; shuffle order is a pure function of the seed.

struct Batch {
    std::vector<std::size_t> indices;
};

inline std::vector<Batch> batches(const LabeledImageSet& data, std::size_t batch_size,
                                  std::uint64_t seed, bool shuffle) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<Batch> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        Batch b;
        for (std::size_t j = i; j < std::min(i + batch_size, order.size()); ++j)
            b.indices.push_back(order[j]);
        out.push_back(std::move(b));
    }
    return out;
}

// Per-channel mean/std over a set, for train-set normalization.
inline void compute_normalization(const LabeledImageSet& data, std::vector<double>& mean,
                                  std::vector<double>& stddev) {
    int C = data.channels;
    std::size_t hw = static_cast<std::size_t>(data.height) * data.width;
    mean.assign(C, 0.0);
    stddev.assign(C, 0.0);
    if (data.size() == 0) {
        stddev.assign(C, 1.0);
        return;
    }
    std::size_t count = data.size() * hw;
    for (const auto& img : data.images)
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < hw; ++i) mean[c] += img[c * hw + i];
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(count);
    for (const auto& img : data.images)
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < hw; ++i) {
                double d = img[c * hw + i] - mean[c];
                stddev[c] += d * d;
            }
    for (int c = 0; c < C; ++c)
        stddev[c] = std::max(std::sqrt(stddev[c] / static_cast<double>(count)), 1e-8);
}

inline Tensor normalized_image(const LabeledImageSet& data, std::size_t i,
                               const std::vector<double>& mean,
                               const std::vector<double>& stddev) {
    std::vector<double> px = data.images[i];
    std::size_t hw = static_cast<std::size_t>(data.height) * data.width;
    for (int c = 0; c < data.channels; ++c)
        for (std::size_t j = 0; j < hw; ++j) px[c * hw + j] = (px[c * hw + j] - mean[c]) / stddev[c];
    return Tensor::from({data.channels, data.height, data.width}, std::move(px));
}

}  // namespace medaf
