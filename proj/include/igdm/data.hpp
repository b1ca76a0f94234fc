#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "igdm/errors.hpp"
#include "igdm/rng.hpp"
#include "igdm/tensor.hpp"

namespace igdm {

struct dataset {
    tensor inputs;             // (N x d)
    std::vector<int> labels;   // N entries, each in [0, num_classes)
    std::size_t num_classes = 0;
    double clamp_lo = 0.0;     // valid input range, shared with attacks
    double clamp_hi = 1.0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.rank() == 2 ? inputs.shape()[1] : 0; }

    tensor row(std::size_t i) const {
        std::size_t d = dim();
        tensor x = tensor::zeros({d});
        for (std::size_t j = 0; j < d; ++j) x[j] = inputs.at2(i, j);
        return x;
    }

    void validate() const {
        if (inputs.rank() != 2 || inputs.shape()[0] != labels.size()) {
            throw std::invalid_argument("dataset: inputs shape does not match label count");
        }
        if (num_classes < 2) throw std::invalid_argument("dataset: needs at least 2 classes");
        if (!(clamp_lo < clamp_hi)) throw std::invalid_argument("dataset: empty clamp range");
        for (int y : labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
                throw std::invalid_argument("dataset: label out of range");
            }
        }
        for (std::size_t i = 0; i < inputs.numel(); ++i) {
            if (inputs[i] < clamp_lo || inputs[i] > clamp_hi) {
                throw std::invalid_argument("dataset: input outside clamp range");
            }
        }
    }
};

enum class synthetic_kind : std::uint8_t { gaussian_mixture, two_spirals };

struct synthetic_spec {
    synthetic_kind kind = synthetic_kind::gaussian_mixture;
    std::size_t num_classes = 2;
    std::size_t dim = 2;
    std::size_t samples_per_class = 100;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("synthetic_spec: num_classes must be >= 2");
        if (dim < 2) throw std::invalid_argument("synthetic_spec: dim must be >= 2");
        if (samples_per_class < 1) {
            throw std::invalid_argument("synthetic_spec: samples_per_class must be >= 1");
        }
        if (noise_scale < 0.0) throw std::invalid_argument("synthetic_spec: noise_scale must be >= 0");
        if (kind == synthetic_kind::two_spirals && num_classes != 2) {
            throw std::invalid_argument("synthetic_spec: two_spirals generates exactly 2 classes");
        }
    }
};

// Samples are interleaved by class (sample i belongs to class i mod K), so
// any contiguous split — in particular the trainer's last-20% holdout — stays
// class-balanced.  All inputs end up affinely rescaled into [0, 1] by the
// global min/max.
inline dataset gen_synthetic(const synthetic_spec& spec) {
    spec.validate();
    std::size_t n = spec.num_classes * spec.samples_per_class;
    std::size_t d = spec.dim;
    dataset ds;
    ds.inputs = tensor::zeros({n, d});
    ds.labels.resize(n);
    ds.num_classes = spec.num_classes;
    rng r(derive_seed(spec.seed, {0x5D417Aull}));

    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = i % spec.num_classes;
        std::size_t within = i / spec.num_classes;
        ds.labels[i] = static_cast<int>(c);
        if (spec.kind == synthetic_kind::gaussian_mixture) {
            // Class means sit on the unit circle in the first two coordinates.
            double angle = two_pi * static_cast<double>(c) / static_cast<double>(spec.num_classes);
            ds.inputs.at2(i, 0) = std::cos(angle);
            ds.inputs.at2(i, 1) = std::sin(angle);
            for (std::size_t j = 0; j < d; ++j) {
                ds.inputs.at2(i, j) += spec.noise_scale * r.normal();
            }
        } else {
            // Two interleaved spirals, the second rotated by pi.
            double t = (static_cast<double>(within) + 0.5) /
                       static_cast<double>(spec.samples_per_class);
            double angle = t * 2.0 * two_pi + (c == 1 ? two_pi / 2.0 : 0.0);
            ds.inputs.at2(i, 0) = t * std::cos(angle);
            ds.inputs.at2(i, 1) = t * std::sin(angle);
            for (std::size_t j = 0; j < d; ++j) {
                ds.inputs.at2(i, j) += spec.noise_scale * r.normal();
            }
        }
    }

    double lo = ds.inputs[0], hi = ds.inputs[0];
    for (std::size_t i = 1; i < ds.inputs.numel(); ++i) {
        lo = std::min(lo, ds.inputs[i]);
        hi = std::max(hi, ds.inputs[i]);
    }
    if (!(hi > lo)) throw std::invalid_argument("gen_synthetic: degenerate value range");
    for (std::size_t i = 0; i < ds.inputs.numel(); ++i) {
        double v = (ds.inputs[i] - lo) / (hi - lo);
        ds.inputs[i] = std::min(std::max(v, 0.0), 1.0);
    }
    ds.clamp_lo = 0.0;
    ds.clamp_hi = 1.0;
    return ds;
}

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw io_error("idx: truncated read in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

constexpr std::uint32_t idx_image_magic = 0x00000803;
constexpr std::uint32_t idx_label_magic = 0x00000801;

// Reads a big-endian unsigned-byte image/label file pair.  Pixels map to
// f64 in [0, 1] by dividing by 255; num_classes comes from the largest label.
inline dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw io_error("idx: cannot open " + images_path);
    std::uint32_t magic = detail::read_u32_be(img, images_path);
    if (magic != idx_image_magic) {
        throw format_error("idx: " + images_path + " has magic " + std::to_string(magic) +
                           ", expected " + std::to_string(idx_image_magic));
    }
    std::uint32_t n = detail::read_u32_be(img, images_path);
    std::uint32_t rows = detail::read_u32_be(img, images_path);
    std::uint32_t cols = detail::read_u32_be(img, images_path);
    std::size_t d = static_cast<std::size_t>(rows) * cols;
    if (n == 0 || d == 0) throw format_error("idx: " + images_path + " has empty dimensions");
    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * d);
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (img.gcount() != static_cast<std::streamsize>(pixels.size())) {
        throw io_error("idx: truncated pixel data in " + images_path);
    }

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw io_error("idx: cannot open " + labels_path);
    magic = detail::read_u32_be(lab, labels_path);
    if (magic != idx_label_magic) {
        throw format_error("idx: " + labels_path + " has magic " + std::to_string(magic) +
                           ", expected " + std::to_string(idx_label_magic));
    }
    std::uint32_t n2 = detail::read_u32_be(lab, labels_path);
    if (n2 != n) {
        throw format_error("idx: " + images_path + " holds " + std::to_string(n) +
                           " items but " + labels_path + " holds " + std::to_string(n2));
    }
    std::vector<unsigned char> raw_labels(n);
    lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n));
    if (lab.gcount() != static_cast<std::streamsize>(n)) {
        throw io_error("idx: truncated label data in " + labels_path);
    }

    dataset ds;
    ds.inputs = tensor::zeros({n, d});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        ds.inputs[i] = static_cast<double>(pixels[i]) / 255.0;
    }
    ds.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<int>(raw_labels[i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    ds.clamp_lo = 0.0;
    ds.clamp_hi = 1.0;
    ds.validate();
    return ds;
}

// Inverse of load_idx: inputs are quantized back to bytes with round(v*255).
// Datasets whose values are exact byte multiples (anything loaded from IDX)
// round-trip bit-identically.
inline void save_idx(const dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    ds.validate();
    std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
    if (!img) throw io_error("idx: cannot write " + images_path);
    detail::write_u32_be(img, idx_image_magic);
    detail::write_u32_be(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_u32_be(img, 1);
    detail::write_u32_be(img, static_cast<std::uint32_t>(ds.dim()));
    for (std::size_t i = 0; i < ds.inputs.numel(); ++i) {
        double q = std::nearbyint(ds.inputs[i] * 255.0);
        q = std::min(std::max(q, 0.0), 255.0);
        unsigned char b = static_cast<unsigned char>(q);
        img.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!img) throw io_error("idx: short write to " + images_path);

    std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
    if (!lab) throw io_error("idx: cannot write " + labels_path);
    detail::write_u32_be(lab, idx_label_magic);
    detail::write_u32_be(lab, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels) {
        unsigned char b = static_cast<unsigned char>(y);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!lab) throw io_error("idx: short write to " + labels_path);
}

// Seeded permutation of [0, n) in ceil(n/batch_size) contiguous slices; the
// permutation depends on (seed, epoch) only.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t seed, std::size_t epoch) {
    if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be >= 1");
    if (n == 0) return {};
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng r(derive_seed(seed, {0xBA7C4ull, epoch}));
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(r.below(i + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::size_t stop = std::min(start + batch_size, n);
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

}  // namespace igdm
