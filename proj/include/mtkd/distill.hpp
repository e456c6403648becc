#pragma once

#include <vector>

#include "mtkd/matrix.hpp"
#include "mtkd/net.hpp"
#include "mtkd/weights.hpp"

namespace mtkd {

/// Loss weights for the composite KD objective: task + alpha * logit KD
/// + beta * feature KD.
struct KDConfig {
    double alpha = 1.0;
    double beta = 5.0;
    double temperature = 4.0;

    void validate() const {
        if (alpha < 0.0 || beta < 0.0)
            throw ParameterError("KDConfig: alpha and beta must be >= 0");
        if (temperature <= 0.0)
            throw ParameterError("KDConfig: temperature must be > 0");
    }
};

struct StudentOutputs {
    Matrix2D feature;  // B x d_s
    Matrix2D logits;   // B x C
};

/// Frozen per-teacher forward results for one batch.
struct TeacherOutputs {
    std::vector<Matrix2D> features;        // per teacher, B x d_m
    std::vector<Matrix2D> logits;          // per teacher, B x C
    std::vector<std::vector<double>> ce;   // per teacher, per-sample CE

    std::size_t teacher_count() const { return logits.size(); }
    std::size_t batch() const { return logits.empty() ? 0 : logits[0].rows; }
};

/// Per-sample teacher cross-entropy. No gradient flows into the teacher.
inline std::vector<double> teacher_ce(const Matrix2D& teacher_logits,
                                      const std::vector<std::size_t>& labels) {
    return cross_entropy(teacher_logits, labels).first;
}

inline TeacherOutputs compute_teacher_outputs(std::vector<DenseNet>& pool,
                                              const Matrix2D& x,
                                              const std::vector<std::size_t>& labels) {
    TeacherOutputs out;
    for (DenseNet& t : pool) {
        auto [f, z] = t.forward_features(x, /*retain_cache=*/false);
        out.ce.push_back(teacher_ce(z, labels));
        out.features.push_back(std::move(f));
        out.logits.push_back(std::move(z));
    }
    return out;
}

struct KDBreakdown {
    double total = 0.0;
    double task = 0.0;
    double logit_kd = 0.0;
    double feature_kd = 0.0;
};

/// Gradients of the batch-mean loss with respect to the student outputs.
/// Regressor parameter grads are accumulated in the regressor nets.
struct KDGrads {
    Matrix2D d_logits;
    Matrix2D d_feature;
};

/// Weighted multi-teacher KD loss (batch mean):
///   H(student, labels) + alpha * sum_m w_l[i,m] * KL_m + beta * sum_m w_f[i,m] * MSE_m
/// where MSE_m compares the regressed student feature with teacher m's
/// feature. Teachers are constants; gradients flow into the student outputs
/// and the regressors only.
inline std::pair<KDBreakdown, KDGrads> mtkd_loss(
    const StudentOutputs& student, const TeacherOutputs& teachers,
    const ActionWeights& weights, const std::vector<std::size_t>& labels,
    const KDConfig& cfg, std::vector<DenseNet>& regressors, bool with_grad = true) {
    cfg.validate();
    const std::size_t m_count = teachers.teacher_count();
    const std::size_t batch = student.logits.rows;
    if (weights.w_logit.rows != batch || weights.w_logit.cols != m_count ||
        weights.w_feature.rows != batch || weights.w_feature.cols != m_count)
        throw ShapeError("mtkd_loss: weight matrices must be " + std::to_string(batch) +
                         "x" + std::to_string(m_count) + ", got " +
                         weights.w_logit.shape_str());
    if (regressors.size() != m_count)
        throw ShapeError("mtkd_loss: " + std::to_string(regressors.size()) +
                         " regressors for " + std::to_string(m_count) + " teachers");

    const double inv_b = 1.0 / static_cast<double>(batch);
    KDBreakdown bd;
    KDGrads grads{Matrix2D(batch, student.logits.cols),
                  Matrix2D(batch, student.feature.cols)};

    auto [task_loss, task_grad] = cross_entropy(student.logits, labels);
    bd.task = mean(task_loss);
    if (with_grad)
        for (std::size_t i = 0; i < task_grad.data.size(); ++i)
            grads.d_logits.data[i] += inv_b * task_grad.data[i];

    for (std::size_t m = 0; m < m_count; ++m) {
        if (cfg.alpha > 0.0) {
            auto [kl_loss, kl_grad] =
                kl_divergence(student.logits, teachers.logits[m], cfg.temperature);
            for (std::size_t i = 0; i < batch; ++i) {
                double w = weights.w_logit.at(i, m);
                bd.logit_kd += inv_b * w * kl_loss[i];
                if (with_grad)
                    for (std::size_t j = 0; j < kl_grad.cols; ++j)
                        grads.d_logits.at(i, j) +=
                            inv_b * cfg.alpha * w * kl_grad.at(i, j);
            }
        }
        if (cfg.beta > 0.0) {
            Matrix2D regressed = regressors[m].forward(student.feature, with_grad);
            auto [mse_loss, mse_grad] = mse(regressed, teachers.features[m]);
            for (std::size_t i = 0; i < batch; ++i) {
                double w = weights.w_feature.at(i, m);
                bd.feature_kd += inv_b * w * mse_loss[i];
                if (with_grad) {
                    double s = inv_b * cfg.beta * w;
                    for (std::size_t j = 0; j < mse_grad.cols; ++j)
                        mse_grad.at(i, j) *= s;
                }
            }
            if (with_grad) {
                Matrix2D d_student_feat = regressors[m].backward(mse_grad);
                grads.d_feature = add(grads.d_feature, d_student_feat);
            }
        }
    }
    // breakdown terms are the weighted sums before alpha/beta scaling,
    // so the reported logit/feature terms stay linear in w
    bd.total = bd.task + cfg.alpha * bd.logit_kd + cfg.beta * bd.feature_kd;
    return {bd, std::move(grads)};
}

/// Single-teacher KD: Eq-style H + alpha*KL + beta*MSE with unit weight.
inline std::pair<KDBreakdown, KDGrads> single_kd_loss(
    const StudentOutputs& student, const Matrix2D& teacher_feature,
    const Matrix2D& teacher_logits, const std::vector<std::size_t>& labels,
    const KDConfig& cfg, DenseNet& regressor, bool with_grad = true) {
    TeacherOutputs t;
    t.features.push_back(teacher_feature);
    t.logits.push_back(teacher_logits);
    t.ce.push_back(teacher_ce(teacher_logits, labels));
    ActionWeights w;
    Matrix2D ones(student.logits.rows, 1, 1.0);
    w.w_logit = ones;
    w.w_feature = ones;
    w.w_logit_gen = ones;
    w.w_feature_gen = ones;
    w.w_conf = ones;
    w.w_logit_div = ones;
    w.w_feature_div = std::move(ones);
    std::vector<DenseNet> regs;
    regs.push_back(std::move(regressor));
    auto out = mtkd_loss(student, t, w, labels, cfg, regs, with_grad);
    regressor = std::move(regs.front());
    return out;
}

}  // namespace mtkd
