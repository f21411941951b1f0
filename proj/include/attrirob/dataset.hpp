#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "attrirob/errors.hpp"
#include "attrirob/rng.hpp"
#include "attrirob/tensor.hpp"

namespace attrirob {

struct Dataset {
    std::vector<Vec> inputs;
    std::vector<std::size_t> labels;
    std::size_t class_count = 2;
    double lo = 0.0;
    double hi = 1.0;

    std::size_t size() const { return inputs.size(); }
    std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }

    void validate() const {
        if (inputs.size() != labels.size())
            throw shape_error("dataset: inputs/labels length mismatch");
        if (lo >= hi) throw argument_error("dataset: value range requires lo < hi");
        const std::size_t d = dim();
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i].size() != d) throw shape_error("dataset: ragged input dimensions");
            if (labels[i] >= class_count)
                throw argument_error("dataset: label out of range at sample " +
                                     std::to_string(i));
            for (double v : inputs[i])
                if (!(v >= lo - 1e-12 && v <= hi + 1e-12))
                    throw argument_error("dataset: input outside value range at sample " +
                                         std::to_string(i));
        }
    }
};

enum class SyntheticKind { blobs, moons };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "blobs") return SyntheticKind::blobs;
    if (s == "moons") return SyntheticKind::moons;
    throw config_error("unknown synthetic dataset kind: " + s);
}

// Two-class toy data in [0,1]^dim. The base shapes live in 2-D; extra
// coordinates are a fixed random tanh lift so attribution vectors have
// nontrivial dimension. Min-max normalized per coordinate.
inline Dataset generate_synthetic(SyntheticKind kind, std::size_t n, double noise,
                                  std::uint64_t seed, std::size_t dim = 2) {
    if (n < 2) throw argument_error("generate_synthetic: n must be >= 2");
    if (dim < 2) throw argument_error("generate_synthetic: dim must be >= 2");
    if (noise < 0.0) throw argument_error("generate_synthetic: noise must be >= 0");

    Rng rng(seed);
    std::vector<double> px(n), py(n);
    Dataset ds;
    ds.labels.resize(n);
    constexpr double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % 2;
        ds.labels[i] = cls;
        if (kind == SyntheticKind::blobs) {
            const double cx = cls == 0 ? 0.3 : 0.7;
            const double cy = cls == 0 ? 0.3 : 0.7;
            px[i] = cx + noise * rng.normal();
            py[i] = cy + noise * rng.normal();
        } else {
            const double t = pi * rng.uniform();
            if (cls == 0) {
                px[i] = std::cos(t);
                py[i] = std::sin(t);
            } else {
                px[i] = 1.0 - std::cos(t);
                py[i] = 1.0 - std::sin(t) - 0.5;
            }
            px[i] += noise * rng.normal();
            py[i] += noise * rng.normal();
        }
    }

    std::vector<std::vector<double>> proj;
    if (dim > 2) {
        Rng lift = rng.derive(0x11f7);
        proj.assign(2, std::vector<double>(dim - 2));
        for (auto& row : proj)
            for (double& v : row) v = lift.normal();
    }

    ds.inputs.assign(n, Vec(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        ds.inputs[i][0] = px[i];
        ds.inputs[i][1] = py[i];
        for (std::size_t j = 2; j < dim; ++j)
            ds.inputs[i][j] = std::tanh(px[i] * proj[0][j - 2] + py[i] * proj[1][j - 2]);
    }

    for (std::size_t j = 0; j < dim; ++j) {
        double mn = ds.inputs[0][j], mx = ds.inputs[0][j];
        for (std::size_t i = 1; i < n; ++i) {
            mn = std::min(mn, ds.inputs[i][j]);
            mx = std::max(mx, ds.inputs[i][j]);
        }
        const double span = mx - mn;
        for (std::size_t i = 0; i < n; ++i)
            ds.inputs[i][j] = span > 0.0 ? (ds.inputs[i][j] - mn) / span : 0.5;
    }
    ds.class_count = 2;
    ds.validate();
    return ds;
}

namespace detail {

inline std::uint32_t read_u32_be(const std::vector<unsigned char>& buf, std::size_t offset,
                                 const std::string& path) {
    if (offset + 4 > buf.size())
        throw io_error("idx: truncated file at offset " + std::to_string(offset) + " in " +
                       path);
    return (std::uint32_t(buf[offset]) << 24) | (std::uint32_t(buf[offset + 1]) << 16) |
           (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

inline void write_u32_be(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

}  // namespace detail

inline std::uint64_t fnv1a64(const std::vector<unsigned char>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
    return fnv1a64(detail::read_file_bytes(path));
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::size_t limit = std::numeric_limits<std::size_t>::max(),
                        std::size_t class_count = 10) {
    const auto img = detail::read_file_bytes(images_path);
    const auto lab = detail::read_file_bytes(labels_path);

    const std::uint32_t img_magic = detail::read_u32_be(img, 0, images_path);
    if (img_magic != 0x00000803u)
        throw io_error("idx: bad magic at offset 0 in " + images_path + " (expected 0x803)");
    const std::uint32_t lab_magic = detail::read_u32_be(lab, 0, labels_path);
    if (lab_magic != 0x00000801u)
        throw io_error("idx: bad magic at offset 0 in " + labels_path + " (expected 0x801)");

    const std::uint32_t n_img = detail::read_u32_be(img, 4, images_path);
    const std::uint32_t rows = detail::read_u32_be(img, 8, images_path);
    const std::uint32_t cols = detail::read_u32_be(img, 12, images_path);
    const std::uint32_t n_lab = detail::read_u32_be(lab, 4, labels_path);
    if (n_img != n_lab)
        throw io_error("idx: image/label count mismatch (" + std::to_string(n_img) + " vs " +
                       std::to_string(n_lab) + ")");

    const std::size_t d = std::size_t(rows) * cols;
    if (img.size() < 16 + std::size_t(n_img) * d)
        throw io_error("idx: truncated image payload in " + images_path);
    if (lab.size() < 8 + std::size_t(n_lab))
        throw io_error("idx: truncated label payload in " + labels_path);

    Dataset ds;
    ds.class_count = class_count;
    const std::size_t n = std::min<std::size_t>(n_img, limit);
    ds.inputs.assign(n, Vec(d));
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            ds.inputs[i][j] = img[16 + i * d + j] / 255.0;
        ds.labels[i] = lab[8 + i];
        if (ds.labels[i] >= class_count)
            throw io_error("idx: label " + std::to_string(ds.labels[i]) +
                           " exceeds class count in " + labels_path);
    }
    return ds;
}

inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path, std::uint32_t rows, std::uint32_t cols) {
    if (std::size_t(rows) * cols != ds.dim())
        throw argument_error("save_idx: rows*cols must equal dataset dimension");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw io_error("cannot write file: " + images_path);
    detail::write_u32_be(img, 0x00000803u);
    detail::write_u32_be(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_u32_be(img, rows);
    detail::write_u32_be(img, cols);
    for (const Vec& x : ds.inputs)
        for (double v : x) {
            const double s = std::min(std::max(v, 0.0), 1.0) * 255.0;
            const unsigned char b = static_cast<unsigned char>(std::lround(s));
            img.write(reinterpret_cast<const char*>(&b), 1);
        }
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw io_error("cannot write file: " + labels_path);
    detail::write_u32_be(lab, 0x00000801u);
    detail::write_u32_be(lab, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t y : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(y);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

}  // namespace attrirob
