#pragma once

#include <cstdio>
#include <utility>
#include <vector>

#include "mtkd/net.hpp"
#include "mtkd/state.hpp"
#include "mtkd/weights.hpp"

namespace mtkd {

/// The policy: a shared trunk (affine + ReLU) and two separate affine heads
/// over the M teachers, one for logit-level and one for feature-level
/// weights, each finished by a softmax.
class PolicyNet {
public:
    PolicyNet() = default;

    PolicyNet(std::size_t state_dim, std::size_t hidden, std::size_t teachers,
              std::uint64_t seed)
        : trunk_(NetSpec{{state_dim, hidden}, {Activation::Relu}, seed}),
          head_logit_(NetSpec{{hidden, teachers}, {Activation::None}, seed ^ 0x1}),
          head_feature_(NetSpec{{hidden, teachers}, {Activation::None}, seed ^ 0x2}),
          teachers_(teachers) {}

    PolicyNet(DenseNet trunk, DenseNet head_logit, DenseNet head_feature)
        : trunk_(std::move(trunk)),
          head_logit_(std::move(head_logit)),
          head_feature_(std::move(head_feature)),
          teachers_(head_logit_.output_dim()) {}

    std::size_t teachers() const { return teachers_; }
    std::size_t state_dim() const { return trunk_.input_dim(); }

    DenseNet& trunk() { return trunk_; }
    DenseNet& head_logit() { return head_logit_; }
    DenseNet& head_feature() { return head_feature_; }

    std::vector<ParamTensor*> params() {
        std::vector<ParamTensor*> out = trunk_.params();
        for (ParamTensor* p : head_logit_.params()) out.push_back(p);
        for (ParamTensor* p : head_feature_.params()) out.push_back(p);
        return out;
    }

    /// Generator forward: two M-simplex weight matrices (B x M), logit head
    /// first. The forward cache is retained for the policy-gradient backward.
    std::pair<Matrix2D, Matrix2D> forward(const Matrix2D& state,
                                          bool retain_cache = true) {
        Matrix2D t = trunk_.forward(state, retain_cache);
        Matrix2D a_l = head_logit_.forward(t, retain_cache);
        Matrix2D a_f = head_feature_.forward(t, retain_cache);
        return {softmax_rows(a_l), softmax_rows(a_f)};
    }

    /// Backward from gradients wrt the two heads' pre-softmax outputs.
    void backward(const Matrix2D& d_head_logit, const Matrix2D& d_head_feature) {
        Matrix2D dt = head_logit_.backward(d_head_logit);
        dt = add(dt, head_feature_.backward(d_head_feature));
        trunk_.backward(dt);
    }

private:
    DenseNet trunk_;
    DenseNet head_logit_;
    DenseNet head_feature_;
    std::size_t teachers_ = 0;
};

/// Confidence-aware weights from per-teacher CE losses:
///   w_m = (1/(M-1)) * (1 - exp(L_m) / sum_j exp(L_j))
/// Sums to 1 by construction; a lower CE earns a higher weight. For M=1 the
/// rule is inapplicable and falls back to [1].
inline std::vector<double> confidence_weights(const std::vector<double>& ce_losses) {
    const std::size_t m = ce_losses.size();
    if (m == 0) throw ParameterError("confidence_weights: no teachers");
    if (m == 1) {
        static bool warned = false;
        if (!warned) {
            std::fprintf(stderr,
                         "confidence_weights: M=1, strategy inapplicable; using w=[1]\n");
            warned = true;
        }
        return {1.0};
    }
    // softmax with max subtraction
    double mx = *std::max_element(ce_losses.begin(), ce_losses.end());
    double sum = 0.0;
    std::vector<double> e(m);
    for (std::size_t j = 0; j < m; ++j) {
        e[j] = std::exp(ce_losses[j] - mx);
        sum += e[j];
    }
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j)
        w[j] = (1.0 - e[j] / sum) / static_cast<double>(m - 1);
    return w;
}

inline std::vector<double> softmax_vec(const std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    std::vector<double> out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        out[j] = std::exp(v[j] - mx);
        sum += out[j];
    }
    for (double& x : out) x /= sum;
    return out;
}

/// Feature-level divergence weights: softmax over cosines, so a teacher
/// closer to the student in feature space gets more weight.
inline std::vector<double> divergence_weights_feature(const std::vector<double>& cosines) {
    if (cosines.empty()) throw ParameterError("divergence_weights_feature: no teachers");
    return softmax_vec(cosines);
}

/// Logit-level divergence weights: softmax over KL values, so a teacher
/// more divergent from the student in probability space gets more weight.
inline std::vector<double> divergence_weights_logit(const std::vector<double>& kls) {
    if (kls.empty()) throw ParameterError("divergence_weights_logit: no teachers");
    return softmax_vec(kls);
}

/// Convex fusion of generator, confidence, and divergence vectors per head.
inline std::pair<std::vector<double>, std::vector<double>> fuse_weights(
    const std::vector<double>& gen_logit, const std::vector<double>& gen_feature,
    const std::vector<double>& conf, const std::vector<double>& div_logit,
    const std::vector<double>& div_feature, const GammaSet& g) {
    const std::size_t m = gen_logit.size();
    if (gen_feature.size() != m || conf.size() != m || div_logit.size() != m ||
        div_feature.size() != m)
        throw ShapeError("fuse_weights: constituent length mismatch");
    std::vector<double> w_l(m), w_f(m);
    for (std::size_t j = 0; j < m; ++j) {
        w_l[j] = g.l_gen * gen_logit[j] + g.l_conf * conf[j] + g.l_div * div_logit[j];
        w_f[j] = g.f_gen * gen_feature[j] + g.f_conf * conf[j] + g.f_div * div_feature[j];
    }
    return {std::move(w_l), std::move(w_f)};
}

namespace detail {
inline std::vector<double> matrix_row(const Matrix2D& m, std::size_t i) {
    return std::vector<double>(
        m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols),
        m.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * m.cols));
}
}  // namespace detail

/// Full action construction for one batch: run the generator, derive the
/// rule-based constituents from the state components, and gamma-fuse.
inline ActionWeights build_action(PolicyNet& policy, const StateBatch& state,
                                  const GammaSet& gammas, bool retain_cache = true) {
    auto [gen_l, gen_f] = policy.forward(state.flat, retain_cache);
    const std::size_t batch = gen_l.rows;
    const std::size_t m = gen_l.cols;

    ActionWeights a;
    a.gammas = gammas;
    a.w_logit_gen = std::move(gen_l);
    a.w_feature_gen = std::move(gen_f);
    a.w_conf = Matrix2D(batch, m);
    a.w_logit_div = Matrix2D(batch, m);
    a.w_feature_div = Matrix2D(batch, m);
    a.w_logit = Matrix2D(batch, m);
    a.w_feature = Matrix2D(batch, m);

    for (std::size_t i = 0; i < batch; ++i) {
        std::vector<double> conf = confidence_weights(detail::matrix_row(state.ce, i));
        std::vector<double> div_l = divergence_weights_logit(detail::matrix_row(state.kl, i));
        std::vector<double> div_f =
            divergence_weights_feature(detail::matrix_row(state.cos, i));
        auto [w_l, w_f] =
            fuse_weights(detail::matrix_row(a.w_logit_gen, i),
                         detail::matrix_row(a.w_feature_gen, i), conf, div_l, div_f, gammas);
        for (std::size_t j = 0; j < m; ++j) {
            a.w_conf.at(i, j) = conf[j];
            a.w_logit_div.at(i, j) = div_l[j];
            a.w_feature_div.at(i, j) = div_f[j];
            a.w_logit.at(i, j) = w_l[j];
            a.w_feature.at(i, j) = w_f[j];
        }
    }
    return a;
}

}  // namespace mtkd
