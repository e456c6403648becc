#pragma once

#include <string>
#include <vector>

#include "mtkd/agent.hpp"
#include "mtkd/distill.hpp"
#include "mtkd/state.hpp"

namespace mtkd {

enum class RewardNorm { RescaledMean, Literal };
enum class PgSurrogate { Log, Linear };

inline RewardNorm reward_norm_from_name(const std::string& s) {
    if (s == "rescaled-mean") return RewardNorm::RescaledMean;
    if (s == "literal") return RewardNorm::Literal;
    throw ParameterError("unknown reward-norm: " + s);
}

inline PgSurrogate pg_surrogate_from_name(const std::string& s) {
    if (s == "log") return PgSurrogate::Log;
    if (s == "linear") return PgSurrogate::Linear;
    throw ParameterError("unknown pg-surrogate: " + s);
}

/// Raw per-sample, per-teacher reward: the negated composite student loss
///   R[i][m] = -H(y^S, y) - alpha * KL(y^S, y^Tm) - beta * MSE(r(f^S), f^Tm)
/// computed on fresh student outputs; no gradients are retained anywhere.
inline Matrix2D compute_reward(const StudentOutputs& student,
                               const TeacherOutputs& teachers,
                               const std::vector<std::size_t>& labels,
                               const KDConfig& cfg, std::vector<DenseNet>& regressors) {
    const std::size_t m_count = teachers.teacher_count();
    const std::size_t batch = student.logits.rows;
    if (regressors.size() != m_count)
        throw ShapeError("compute_reward: regressor/teacher count mismatch");
    Matrix2D raw(batch, m_count);
    auto [task_loss, task_grad] = cross_entropy(student.logits, labels);
    (void)task_grad;
    for (std::size_t m = 0; m < m_count; ++m) {
        auto [kl_loss, kl_grad] =
            kl_divergence(student.logits, teachers.logits[m], cfg.temperature);
        (void)kl_grad;
        Matrix2D regressed = regressors[m].forward(student.feature, /*retain_cache=*/false);
        auto [mse_loss, mse_grad] = mse(regressed, teachers.features[m]);
        (void)mse_grad;
        for (std::size_t i = 0; i < batch; ++i)
            raw.at(i, m) = -task_loss[i] - cfg.alpha * kl_loss[i] - cfg.beta * mse_loss[i];
    }
    return raw;
}

/// Per-sample min-max rescaling to [0,1] followed by mean subtraction.
/// RescaledMean subtracts the mean of the rescaled values (zero-sum output);
/// Literal subtracts the mean of the raw rewards. A degenerate row with
/// max == min yields all zeros: no teacher is distinguishable.
inline Matrix2D normalize_rewards(const Matrix2D& raw,
                                  RewardNorm mode = RewardNorm::RescaledMean) {
    Matrix2D out(raw.rows, raw.cols);
    for (std::size_t i = 0; i < raw.rows; ++i) {
        double lo = raw.at(i, 0), hi = raw.at(i, 0), raw_sum = 0.0;
        for (std::size_t m = 0; m < raw.cols; ++m) {
            lo = std::min(lo, raw.at(i, m));
            hi = std::max(hi, raw.at(i, m));
            raw_sum += raw.at(i, m);
        }
        if (hi == lo) continue;  // all zeros
        double span = hi - lo;
        double rescaled_sum = 0.0;
        for (std::size_t m = 0; m < raw.cols; ++m) {
            out.at(i, m) = (raw.at(i, m) - lo) / span;
            rescaled_sum += out.at(i, m);
        }
        double sub = mode == RewardNorm::RescaledMean
                         ? rescaled_sum / static_cast<double>(raw.cols)
                         : raw_sum / static_cast<double>(raw.cols);
        for (std::size_t m = 0; m < raw.cols; ++m) out.at(i, m) -= sub;
    }
    return out;
}

/// Ordered record of one epoch's (state, action, normalized reward) batches.
class EpisodeHistory {
public:
    struct Entry {
        StateBatch state;
        ActionWeights action;
        Matrix2D rewards;  // normalized, B x M
    };

    void record(StateBatch state, ActionWeights action, Matrix2D normalized_rewards) {
        if (normalized_rewards.rows != state.flat.rows ||
            normalized_rewards.cols != action.teachers())
            throw ShapeError("record_episode: reward shape " +
                             normalized_rewards.shape_str() + " inconsistent");
        entries_.push_back(
            Entry{std::move(state), std::move(action), std::move(normalized_rewards)});
    }

    void clear() { entries_.clear(); }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

namespace detail {

// dJ/d(head pre-softmax) for one head given normalized rewards and the
// head's softmax output w.
inline Matrix2D surrogate_head_grad(const Matrix2D& rewards, const Matrix2D& w,
                                    PgSurrogate surrogate) {
    Matrix2D d(rewards.rows, rewards.cols);
    for (std::size_t i = 0; i < rewards.rows; ++i) {
        if (surrogate == PgSurrogate::Log) {
            // J_row = sum_m R[m] * log w[m];  dJ/da_j = R[j] - (sum_m R[m]) w[j]
            double rsum = 0.0;
            for (std::size_t m = 0; m < rewards.cols; ++m) rsum += rewards.at(i, m);
            for (std::size_t j = 0; j < rewards.cols; ++j)
                d.at(i, j) = rewards.at(i, j) - rsum * w.at(i, j);
        } else {
            // J_row = sum_m R[m] * w[m];  dJ/da_j = w[j] (R[j] - sum_m R[m] w[m])
            double rw = 0.0;
            for (std::size_t m = 0; m < rewards.cols; ++m)
                rw += rewards.at(i, m) * w.at(i, m);
            for (std::size_t j = 0; j < rewards.cols; ++j)
                d.at(i, j) = w.at(i, j) * (rewards.at(i, j) - rw);
        }
    }
    return d;
}

}  // namespace detail

/// Replay the episode history and ascend the surrogate objective
///   J = sum_i sum_m R[i][m] * (log w_l_gen[i][m] + log w_f_gen[i][m])
/// (or its linear variant) one gradient step per history entry. When
/// `gammas` is non-null the six fusion coefficients are updated as well and
/// renormalized so each head's triple stays on the simplex.
inline void pg_update(PolicyNet& policy, const EpisodeHistory& history, double eta,
                      PgSurrogate surrogate = PgSurrogate::Log,
                      GammaSet* gammas = nullptr) {
    if (eta <= 0.0) throw ParameterError("pg_update: eta must be > 0");
    if (history.empty()) throw StateError("pg_update: empty episode history");
    for (const auto& entry : history.entries()) {
        auto [w_l, w_f] = policy.forward(entry.state.flat, /*retain_cache=*/true);
        Matrix2D d_l = detail::surrogate_head_grad(entry.rewards, w_l, surrogate);
        Matrix2D d_f = detail::surrogate_head_grad(entry.rewards, w_f, surrogate);
        // descend -J
        policy.backward(scale(d_l, -1.0), scale(d_f, -1.0));
        sgd_step(policy.params(), eta, /*momentum=*/0.0, /*weight_decay=*/0.0);

        if (gammas) {
            // dJ/dgamma for the fused weights, linear in each constituent
            auto dot = [&](const Matrix2D& a) {
                double s = 0.0;
                for (std::size_t i = 0; i < a.data.size(); ++i)
                    s += entry.rewards.data[i] * a.data[i];
                return s;
            };
            gammas->l_gen += eta * dot(entry.action.w_logit_gen);
            gammas->l_conf += eta * dot(entry.action.w_conf);
            gammas->l_div += eta * dot(entry.action.w_logit_div);
            gammas->f_gen += eta * dot(entry.action.w_feature_gen);
            gammas->f_conf += eta * dot(entry.action.w_conf);
            gammas->f_div += eta * dot(entry.action.w_feature_div);
            auto renorm = [](double& a, double& b, double& c) {
                a = std::max(a, 0.0);
                b = std::max(b, 0.0);
                c = std::max(c, 0.0);
                double s = a + b + c;
                if (s <= 0.0) {
                    a = b = c = 1.0 / 3.0;
                } else {
                    a /= s;
                    b /= s;
                    c /= s;
                }
            };
            renorm(gammas->l_gen, gammas->l_conf, gammas->l_div);
            renorm(gammas->f_gen, gammas->f_conf, gammas->f_div);
        }
    }
}

}  // namespace mtkd
