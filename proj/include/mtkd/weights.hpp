#pragma once

#include "mtkd/matrix.hpp"

namespace mtkd {

/// Balancing coefficients for fusing generator, confidence, and divergence
/// weight vectors. Each head's triple should sum to 1.
struct GammaSet {
    double l_gen = 1.0 / 3.0, l_conf = 1.0 / 3.0, l_div = 1.0 / 3.0;
    double f_gen = 1.0 / 3.0, f_conf = 1.0 / 3.0, f_div = 1.0 / 3.0;
};

/// Per-sample teacher weight vectors over M teachers, logit and feature
/// level, plus the constituent vectors they were fused from. All matrices
/// are B x M; every row of every constituent lies on the simplex.
struct ActionWeights {
    Matrix2D w_logit;    // final fused, used in the weighted KD loss
    Matrix2D w_feature;  // final fused
    Matrix2D w_logit_gen;
    Matrix2D w_feature_gen;
    Matrix2D w_conf;
    Matrix2D w_logit_div;
    Matrix2D w_feature_div;
    GammaSet gammas;

    std::size_t batch() const { return w_logit.rows; }
    std::size_t teachers() const { return w_logit.cols; }

    /// Uniform 1/M weights everywhere (the equal-weight baseline action).
    static ActionWeights uniform(std::size_t batch, std::size_t m) {
        ActionWeights a;
        Matrix2D u(batch, m, 1.0 / static_cast<double>(m));
        a.w_logit = u;
        a.w_feature = u;
        a.w_logit_gen = u;
        a.w_feature_gen = u;
        a.w_conf = u;
        a.w_logit_div = u;
        a.w_feature_div = std::move(u);
        return a;
    }
};

}  // namespace mtkd
