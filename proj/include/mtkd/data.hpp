#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mtkd/matrix.hpp"
#include "mtkd/rng.hpp"

namespace mtkd {

/// Immutable sample store with disjoint, covering train/test index lists.
struct Dataset {
    Matrix2D features;                 // N x d
    std::vector<std::size_t> labels;   // N, values in [0, class_count)
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    std::size_t class_count = 0;

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }

    Matrix2D gather_features(const std::vector<std::size_t>& idx) const {
        Matrix2D out(idx.size(), features.cols);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < features.cols; ++j)
                out.at(i, j) = features.at(idx[i], j);
        return out;
    }

    std::vector<std::size_t> gather_labels(const std::vector<std::size_t>& idx) const {
        std::vector<std::size_t> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
        return out;
    }
};

/// How shard labels are corrupted. Uniform flips to a random other class;
/// pairflip maps class c to c+1 mod C, a systematic corruption whose errors
/// line up across teachers instead of averaging out.
enum class NoiseMode { Uniform, Pairflip };

inline NoiseMode noise_mode_from_name(const std::string& s) {
    if (s == "uniform") return NoiseMode::Uniform;
    if (s == "pairflip") return NoiseMode::Pairflip;
    throw ParameterError("unknown noise mode: " + s);
}

inline std::string noise_mode_name(NoiseMode m) {
    return m == NoiseMode::Uniform ? "uniform" : "pairflip";
}

/// Parameters of the synthetic Gaussian-mixture task. Each teacher trains on
/// a shard: the train split with labels corrupted at that teacher's noise
/// rate, which is what makes the teachers differ.
struct SyntheticSpec {
    std::size_t classes = 4;
    std::size_t dim = 16;
    std::size_t clusters_per_class = 2;
    double spread = 1.0;
    std::size_t samples_per_class = 300;
    std::vector<double> noise_rates = {0.0, 0.1, 0.2, 0.4};
    NoiseMode noise_mode = NoiseMode::Uniform;
    double test_fraction = 0.25;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2 || dim == 0 || clusters_per_class == 0 || samples_per_class == 0)
            throw ParameterError("SyntheticSpec: counts must be positive");
        for (double r : noise_rates)
            if (r < 0.0 || r >= 1.0)
                throw ParameterError("SyntheticSpec: noise rate must be in [0, 1)");
        if (test_fraction <= 0.0 || test_fraction >= 1.0)
            throw ParameterError("SyntheticSpec: test fraction must be in (0, 1)");
    }
};

struct SyntheticData {
    Dataset dataset;
    // per teacher: labels for the train split (aligned with dataset.train_idx),
    // corrupted at that teacher's noise rate
    std::vector<std::vector<std::size_t>> shard_labels;
};

inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed, "data");

    const std::size_t n = spec.classes * spec.samples_per_class;
    SyntheticData out;
    out.dataset.features = Matrix2D(n, spec.dim);
    out.dataset.labels.resize(n);
    out.dataset.class_count = spec.classes;

    // cluster centers, then samples around them
    std::vector<std::vector<double>> centers(spec.classes * spec.clusters_per_class,
                                             std::vector<double>(spec.dim));
    for (auto& c : centers)
        for (double& v : c) v = rng.normal(0.0, 2.0);

    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
            const auto& center =
                centers[c * spec.clusters_per_class + s % spec.clusters_per_class];
            for (std::size_t j = 0; j < spec.dim; ++j)
                out.dataset.features.at(row, j) = center[j] + rng.normal(0.0, spec.spread);
            out.dataset.labels[row] = c;
        }
    }

    // seeded split
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng split_rng = rng.split("split");
    for (std::size_t i = n; i-- > 1;)
        std::swap(perm[i], perm[split_rng.below(i + 1)]);
    std::size_t test_n = static_cast<std::size_t>(
        static_cast<double>(n) * spec.test_fraction);
    out.dataset.test_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_n));
    out.dataset.train_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(test_n), perm.end());

    // per-teacher noisy shards over the train split
    for (std::size_t m = 0; m < spec.noise_rates.size(); ++m) {
        Rng noise_rng = rng.split("shard-" + std::to_string(m));
        std::vector<std::size_t> shard = out.dataset.gather_labels(out.dataset.train_idx);
        for (std::size_t& label : shard) {
            if (noise_rng.uniform() < spec.noise_rates[m]) {
                if (spec.noise_mode == NoiseMode::Pairflip) {
                    label = (label + 1) % spec.classes;
                } else {
                    std::size_t flip = noise_rng.below(spec.classes - 1);
                    label = flip >= label ? flip + 1 : flip;  // any other class
                }
            }
        }
        out.shard_labels.push_back(std::move(shard));
    }
    return out;
}

namespace detail {

inline std::uint32_t read_u32_be(std::ifstream& f, const std::string& path,
                                 long long offset) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("IDX: truncated file " + path, offset);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

/// Big-endian IDX loader (the MNIST container): rank-3 u8 images paired
/// with rank-1 u8 labels. Pixels are scaled to [0,1] and rows flattened to
/// d = H*W. Everything lands in the train split; use split_dataset after.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("IDX: cannot open " + images_path);
    std::uint32_t magic = detail::read_u32_be(img, images_path, 0);
    if (magic != 0x00000803)
        throw FormatError("IDX: bad image magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
        }() + " in " + images_path + " (expected 0x00000803)", 0);
    std::uint32_t count = detail::read_u32_be(img, images_path, 4);
    std::uint32_t h = detail::read_u32_be(img, images_path, 8);
    std::uint32_t w = detail::read_u32_be(img, images_path, 12);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("IDX: cannot open " + labels_path);
    std::uint32_t lmagic = detail::read_u32_be(lab, labels_path, 0);
    if (lmagic != 0x00000801)
        throw FormatError("IDX: bad label magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", lmagic);
            return std::string(buf);
        }() + " in " + labels_path + " (expected 0x00000801)", 0);
    std::uint32_t lcount = detail::read_u32_be(lab, labels_path, 4);
    if (count != lcount)
        throw FormatError("IDX: image count " + std::to_string(count) +
                          " != label count " + std::to_string(lcount), 4);

    const std::size_t d = static_cast<std::size_t>(h) * w;
    Dataset ds;
    ds.features = Matrix2D(count, d);
    ds.labels.resize(count);

    std::vector<unsigned char> pix(d);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!img.read(reinterpret_cast<char*>(pix.data()),
                      static_cast<std::streamsize>(d)))
            throw FormatError("IDX: truncated image payload in " + images_path,
                              16 + static_cast<long long>(i) * static_cast<long long>(d));
        for (std::size_t j = 0; j < d; ++j)
            ds.features.at(i, j) = static_cast<double>(pix[j]) / 255.0;
        unsigned char label;
        if (!lab.read(reinterpret_cast<char*>(&label), 1))
            throw FormatError("IDX: truncated label payload in " + labels_path,
                              8 + static_cast<long long>(i));
        ds.labels[i] = label;
    }
    ds.class_count = ds.labels.empty()
                         ? 0
                         : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.train_idx.resize(count);
    std::iota(ds.train_idx.begin(), ds.train_idx.end(), 0);
    return ds;
}

/// Rectangular numeric CSV with a header row; labels come from the named
/// column and must be non-negative integers.
inline Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream f(path);
    if (!f) throw FormatError("CSV: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw FormatError("CSV: empty file " + path);

    auto split_fields = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string field;
        while (std::getline(ss, field, ',')) out.push_back(field);
        if (!s.empty() && s.back() == ',') out.push_back("");
        return out;
    };
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_fields(line);
    auto it = std::find(header.begin(), header.end(), label_column);
    if (it == header.end())
        throw ParameterError("CSV: label column '" + label_column + "' not in header");
    std::size_t label_col = static_cast<std::size_t>(it - header.begin());

    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size())
            throw FormatError("CSV: row " + std::to_string(lineno) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        std::vector<double> feat;
        for (std::size_t j = 0; j < fields.size(); ++j) {
            double v;
            try {
                std::size_t pos = 0;
                v = std::stod(fields[j], &pos);
                if (pos != fields[j].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw FormatError("CSV: non-numeric cell '" + fields[j] + "' at row " +
                                  std::to_string(lineno));
            }
            if (j == label_col) {
                if (v < 0.0 || v != std::floor(v))
                    throw FormatError("CSV: label '" + fields[j] + "' at row " +
                                      std::to_string(lineno) +
                                      " is not a non-negative integer");
                labels.push_back(static_cast<std::size_t>(v));
            } else {
                feat.push_back(v);
            }
        }
        rows.push_back(std::move(feat));
    }
    if (rows.empty()) throw FormatError("CSV: no data rows in " + path);

    Dataset ds;
    ds.features = Matrix2D(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) ds.features.at(i, j) = rows[i][j];
    ds.labels = std::move(labels);
    ds.class_count = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.train_idx.resize(rows.size());
    std::iota(ds.train_idx.begin(), ds.train_idx.end(), 0);
    return ds;
}

/// Move a seeded random fraction of the train split into the test split.
inline void split_dataset(Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ParameterError("split_dataset: test fraction must be in (0, 1)");
    std::vector<std::size_t> all = ds.train_idx;
    for (std::size_t i : ds.test_idx) all.push_back(i);
    Rng rng(seed, "split");
    for (std::size_t i = all.size(); i-- > 1;) std::swap(all[i], all[rng.below(i + 1)]);
    std::size_t test_n =
        static_cast<std::size_t>(static_cast<double>(all.size()) * test_fraction);
    ds.test_idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(test_n));
    ds.train_idx.assign(all.begin() + static_cast<std::ptrdiff_t>(test_n), all.end());
}

/// Per-dimension z-scoring with statistics from the train split, applied to
/// every sample. Default preprocessing for CSV/IDX inputs.
inline void standardize_features(Dataset& ds) {
    for (std::size_t j = 0; j < ds.features.cols; ++j) {
        double mu = 0.0;
        for (std::size_t i : ds.train_idx) mu += ds.features.at(i, j);
        mu /= static_cast<double>(ds.train_idx.size());
        double var = 0.0;
        for (std::size_t i : ds.train_idx) {
            double d = ds.features.at(i, j) - mu;
            var += d * d;
        }
        double sd = std::sqrt(var / static_cast<double>(ds.train_idx.size()));
        if (sd < 1e-12) sd = 1.0;
        for (std::size_t i = 0; i < ds.features.rows; ++i)
            ds.features.at(i, j) = (ds.features.at(i, j) - mu) / sd;
    }
}

/// Deterministic epoch shuffle: a permutation of [0, n) chopped into
/// batches of size B (last one may be smaller). The permutation depends
/// only on (seed, epoch).
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t b,
                                                     std::uint64_t seed,
                                                     std::size_t epoch) {
    if (b == 0) throw ParameterError("batches: batch size must be >= 1");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = Rng(seed, "batches").split(std::to_string(epoch));
    for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += b) {
        std::size_t end = std::min(start + b, n);
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

}  // namespace mtkd
