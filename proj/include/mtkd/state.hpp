#pragma once

#include <string>
#include <vector>

#include "mtkd/distill.hpp"
#include "mtkd/matrix.hpp"
#include "mtkd/net.hpp"

namespace mtkd {

/// Ablation toggles for the state components. Per teacher the flat layout is
/// [feature || logits || ce || cos || kl], with masked-out parts omitted.
struct StateMask {
    bool feature = true;
    bool logits = true;
    bool ce = true;
    bool cos = true;
    bool kl = true;

    void validate() const {
        if (!(feature || logits || ce || cos || kl))
            throw ParameterError("StateMask: at least one component must be enabled");
    }

    static StateMask full() { return {}; }
    static StateMask performance_only() { return {true, true, true, false, false}; }
    static StateMask gaps_only() { return {false, false, false, true, true}; }

    static StateMask from_name(const std::string& name) {
        if (name == "full" || name == "all") return full();
        if (name == "performance") return performance_only();
        if (name == "gaps") return gaps_only();
        throw ParameterError("StateMask: unknown preset " + name);
    }
    std::string name() const {
        if (feature && logits && ce && cos && kl) return "full";
        if (feature && logits && ce && !cos && !kl) return "performance";
        if (!feature && !logits && !ce && cos && kl) return "gaps";
        return "custom";
    }
};

/// Flat per-teacher state length for one teacher of feature dim d_m.
inline std::size_t state_dim_per_teacher(const StateMask& mask, std::size_t d_m,
                                         std::size_t classes) {
    mask.validate();
    std::size_t n = 0;
    if (mask.feature) n += d_m;
    if (mask.logits) n += classes;
    if (mask.ce) n += 1;
    if (mask.cos) n += 1;
    if (mask.kl) n += 1;
    return n;
}

/// Integrated agent-input length: concatenation over all teachers.
inline std::size_t state_dim(const StateMask& mask,
                             const std::vector<std::size_t>& teacher_feature_dims,
                             std::size_t classes) {
    std::size_t n = 0;
    for (std::size_t d : teacher_feature_dims)
        n += state_dim_per_teacher(mask, d, classes);
    return n;
}

/// One batch of state embeddings plus the raw components they were built
/// from (kept separately so the weight rules can reuse them).
struct StateBatch {
    Matrix2D flat;  // B x state_dim, agent input
    Matrix2D ce;    // B x M, teacher cross-entropy
    Matrix2D cos;   // B x M, cosine(r(f^S), f^T)
    Matrix2D kl;    // B x M, KL(student || teacher gap) at temperature 1
    StateMask mask;
    std::vector<std::size_t> teacher_feature_dims;
    std::size_t classes = 0;
};

/// Assemble the per-sample, per-teacher state. Regressor forwards are
/// cache-free so an in-flight distillation backward is unaffected.
inline StateBatch build_state(const StudentOutputs& student,
                              const TeacherOutputs& teachers,
                              std::vector<DenseNet>& regressors, const StateMask& mask,
                              bool zscore = false) {
    mask.validate();
    const std::size_t m_count = teachers.teacher_count();
    const std::size_t batch = student.logits.rows;
    const std::size_t classes = student.logits.cols;
    if (regressors.size() != m_count)
        throw ShapeError("build_state: regressor count " +
                         std::to_string(regressors.size()) + " != teacher count " +
                         std::to_string(m_count));

    StateBatch out;
    out.mask = mask;
    out.classes = classes;
    out.ce = Matrix2D(batch, m_count);
    out.cos = Matrix2D(batch, m_count);
    out.kl = Matrix2D(batch, m_count);

    std::vector<Matrix2D> regressed;  // per teacher, B x d_m
    for (std::size_t m = 0; m < m_count; ++m) {
        out.teacher_feature_dims.push_back(teachers.features[m].cols);
        regressed.push_back(
            regressors[m].forward(student.feature, /*retain_cache=*/false));
        for (std::size_t i = 0; i < batch; ++i) out.ce.at(i, m) = teachers.ce[m][i];
        auto [kl_loss, kl_grad] =
            kl_divergence(student.logits, teachers.logits[m], /*temperature=*/1.0);
        (void)kl_grad;
        for (std::size_t i = 0; i < batch; ++i) out.kl.at(i, m) = kl_loss[i];
        for (std::size_t i = 0; i < batch; ++i) {
            std::vector<double> rs(regressed[m].data.begin() +
                                       static_cast<std::ptrdiff_t>(i * regressed[m].cols),
                                   regressed[m].data.begin() +
                                       static_cast<std::ptrdiff_t>((i + 1) * regressed[m].cols));
            std::vector<double> tf(teachers.features[m].data.begin() +
                                       static_cast<std::ptrdiff_t>(i * teachers.features[m].cols),
                                   teachers.features[m].data.begin() +
                                       static_cast<std::ptrdiff_t>((i + 1) * teachers.features[m].cols));
            // a dead-ReLU sample can zero the regressed feature; score it
            // as orthogonal rather than failing the whole batch
            double rn = 0.0, tn = 0.0;
            for (double v : rs) rn += v * v;
            for (double v : tf) tn += v * v;
            out.cos.at(i, m) =
                (rn == 0.0 || tn == 0.0) ? 0.0 : cosine_similarity(rs, tf);
        }
    }

    const std::size_t dim = state_dim(mask, out.teacher_feature_dims, classes);
    out.flat = Matrix2D(batch, dim);
    for (std::size_t i = 0; i < batch; ++i) {
        std::size_t off = 0;
        for (std::size_t m = 0; m < m_count; ++m) {
            if (mask.feature)
                for (std::size_t j = 0; j < out.teacher_feature_dims[m]; ++j)
                    out.flat.at(i, off++) = teachers.features[m].at(i, j);
            if (mask.logits)
                for (std::size_t j = 0; j < classes; ++j)
                    out.flat.at(i, off++) = teachers.logits[m].at(i, j);
            if (mask.ce) out.flat.at(i, off++) = out.ce.at(i, m);
            if (mask.cos) out.flat.at(i, off++) = out.cos.at(i, m);
            if (mask.kl) out.flat.at(i, off++) = out.kl.at(i, m);
        }
    }

    if (zscore) {
        // per-column standardization over the batch
        for (std::size_t j = 0; j < out.flat.cols; ++j) {
            double mu = 0.0;
            for (std::size_t i = 0; i < batch; ++i) mu += out.flat.at(i, j);
            mu /= static_cast<double>(batch);
            double var = 0.0;
            for (std::size_t i = 0; i < batch; ++i) {
                double d = out.flat.at(i, j) - mu;
                var += d * d;
            }
            double sd = std::sqrt(var / static_cast<double>(batch));
            if (sd < 1e-12) sd = 1.0;
            for (std::size_t i = 0; i < batch; ++i)
                out.flat.at(i, j) = (out.flat.at(i, j) - mu) / sd;
        }
    }
    return out;
}

}  // namespace mtkd
