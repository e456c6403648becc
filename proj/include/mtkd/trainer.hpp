#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "mtkd/agent.hpp"
#include "mtkd/data.hpp"
#include "mtkd/distill.hpp"
#include "mtkd/net.hpp"
#include "mtkd/rl.hpp"
#include "mtkd/state.hpp"

namespace mtkd {

enum class Strategy { Baseline, Aver, Conf, Div, Rl };

inline Strategy strategy_from_name(const std::string& s) {
    if (s == "baseline") return Strategy::Baseline;
    if (s == "aver") return Strategy::Aver;
    if (s == "conf") return Strategy::Conf;
    if (s == "div") return Strategy::Div;
    if (s == "rl") return Strategy::Rl;
    throw ParameterError("unknown strategy: " + s);
}

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Baseline: return "baseline";
        case Strategy::Aver: return "aver";
        case Strategy::Conf: return "conf";
        case Strategy::Div: return "div";
        case Strategy::Rl: return "rl";
    }
    return "?";
}

enum class RewardTiming { Post, Pre };

inline RewardTiming reward_timing_from_name(const std::string& s) {
    if (s == "post") return RewardTiming::Post;
    if (s == "pre") return RewardTiming::Pre;
    throw ParameterError("unknown reward-timing: " + s);
}

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    double lr_student = 0.05;
    double lr_agent = 1e-3;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    KDConfig kd;
    std::size_t teacher_count = 4;
    Strategy strategy = Strategy::Rl;
    StateMask state_mask;
    bool state_zscore = false;
    RewardNorm reward_norm = RewardNorm::RescaledMean;
    PgSurrogate pg_surrogate = PgSurrogate::Log;
    RewardTiming reward_timing = RewardTiming::Post;
    bool learnable_gammas = false;

    // architecture; teacher m gets two hidden layers of teacher_hidden[m]
    std::vector<std::size_t> teacher_hidden = {40, 36, 32, 28};
    std::size_t student_hidden = 16;
    std::size_t agent_hidden = 128;

    std::size_t teacher_epochs = 40;
    double teacher_lr = 0.05;

    // 0 disables the plateau test and uses the fixed epoch budget
    std::size_t plateau_patience = 0;

    void validate() const {
        if (batch_size < 1 || epochs < 1)
            throw ParameterError("TrainConfig: batch_size and epochs must be >= 1");
        if (lr_student <= 0.0 || lr_agent <= 0.0 || teacher_lr <= 0.0)
            throw ParameterError("TrainConfig: learning rates must be > 0");
        kd.validate();
        state_mask.validate();
        if (teacher_count < 1) throw ParameterError("TrainConfig: need at least one teacher");
    }
};

struct EpochRow {
    std::size_t epoch = 0;
    std::string strategy;
    double total_loss = 0.0;
    double task_loss = 0.0;
    double logit_kd = 0.0;
    double feature_kd = 0.0;
    double acc = 0.0;
    std::vector<double> mean_w_logit;    // per teacher
    std::vector<double> mean_w_feature;  // per teacher
    std::vector<double> mean_reward;     // per teacher, raw
};

struct RunMetrics {
    std::string strategy;
    std::size_t teacher_count = 0;
    std::vector<EpochRow> rows;
};

inline std::string metrics_csv_header(std::size_t teacher_count) {
    std::string h = "epoch,strategy,total_loss,task_loss,logit_kd,feature_kd,acc";
    for (std::size_t m = 1; m <= teacher_count; ++m) h += ",w_l_" + std::to_string(m);
    for (std::size_t m = 1; m <= teacher_count; ++m) h += ",w_f_" + std::to_string(m);
    for (std::size_t m = 1; m <= teacher_count; ++m) h += ",reward_" + std::to_string(m);
    return h;
}

inline std::string metrics_to_csv(const RunMetrics& rm) {
    std::string out = metrics_csv_header(rm.teacher_count) + "\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const EpochRow& r : rm.rows) {
        out += std::to_string(r.epoch) + "," + r.strategy + "," + num(r.total_loss) +
               "," + num(r.task_loss) + "," + num(r.logit_kd) + "," +
               num(r.feature_kd) + "," + num(r.acc);
        for (double v : r.mean_w_logit) out += "," + num(v);
        for (double v : r.mean_w_feature) out += "," + num(v);
        for (double v : r.mean_reward) out += "," + num(v);
        out += "\n";
    }
    return out;
}

/// Top-1 accuracy on the dataset's test split. Cache-free; no mutation.
inline double evaluate(DenseNet& net, const Dataset& ds) {
    if (ds.test_idx.empty()) throw ParameterError("evaluate: empty test split");
    Matrix2D x = ds.gather_features(ds.test_idx);
    std::vector<std::size_t> y = ds.gather_labels(ds.test_idx);
    Matrix2D logits = net.forward(x, /*retain_cache=*/false);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best == y[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

/// Train the frozen teacher pool, one teacher per noisy shard, each from a
/// seed-offset init.
inline std::vector<DenseNet> train_teachers(const TrainConfig& cfg,
                                            const SyntheticData& data) {
    cfg.validate();
    std::vector<DenseNet> pool;
    Matrix2D train_x = data.dataset.gather_features(data.dataset.train_idx);
    const std::size_t n = data.dataset.train_idx.size();
    for (std::size_t m = 0; m < cfg.teacher_count; ++m) {
        std::size_t width = cfg.teacher_hidden[m % cfg.teacher_hidden.size()];
        std::uint64_t init_seed =
            Rng(cfg.seed, "teacher-init-" + std::to_string(m)).next_u64();
        DenseNet teacher(NetSpec::mlp(
            {data.dataset.dim(), width, width, data.dataset.class_count}, init_seed));
        const std::vector<std::size_t>& shard =
            m < data.shard_labels.size() ? data.shard_labels[m]
                                         : data.shard_labels.back();
        std::uint64_t shuffle_seed =
            Rng(cfg.seed, "teacher-batches-" + std::to_string(m)).next_u64();
        for (std::size_t epoch = 0; epoch < cfg.teacher_epochs; ++epoch) {
            double lr = epoch >= cfg.teacher_epochs * 2 / 3 ? cfg.teacher_lr * 0.1
                                                            : cfg.teacher_lr;
            for (const auto& batch : batches(n, cfg.batch_size, shuffle_seed, epoch)) {
                Matrix2D x(batch.size(), train_x.cols);
                std::vector<std::size_t> y(batch.size());
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    for (std::size_t j = 0; j < train_x.cols; ++j)
                        x.at(i, j) = train_x.at(batch[i], j);
                    y[i] = shard[batch[i]];
                }
                Matrix2D logits = teacher.forward(x);
                auto [loss, grad] = cross_entropy(logits, y);
                teacher.backward(scale(grad, 1.0 / static_cast<double>(batch.size())));
                sgd_step(teacher.params(), lr, cfg.momentum, cfg.weight_decay);
            }
        }
        teacher.invalidate_cache();
        pool.push_back(std::move(teacher));
    }
    return pool;
}

/// Everything mutable a distillation run owns: the student, its per-teacher
/// feature regressors, the policy, and the fusion coefficients.
struct DistillRun {
    DenseNet student;
    std::vector<DenseNet> regressors;
    PolicyNet policy;
    GammaSet gammas;
    EpisodeHistory history;

    std::vector<ParamTensor*> student_params() {
        std::vector<ParamTensor*> out = student.params();
        for (DenseNet& r : regressors)
            for (ParamTensor* p : r.params()) out.push_back(p);
        return out;
    }
};

/// Build the student, regressors, and policy for a pool, all seeded from
/// independent streams of the config seed.
inline DistillRun make_distill_run(const TrainConfig& cfg, const Dataset& ds,
                                   std::vector<DenseNet>& pool) {
    DistillRun run;
    run.student = DenseNet(NetSpec::mlp({ds.dim(), cfg.student_hidden, ds.class_count},
                                        Rng(cfg.seed, "student-init").next_u64()));
    if (pool.empty()) return run;  // baseline: no teachers, no agent
    std::vector<std::size_t> feature_dims;
    for (std::size_t m = 0; m < pool.size(); ++m) {
        feature_dims.push_back(pool[m].feature_dim());
        run.regressors.emplace_back(
            NetSpec{{cfg.student_hidden, pool[m].feature_dim()},
                    {Activation::None},
                    Rng(cfg.seed, "regressor-init-" + std::to_string(m)).next_u64()});
    }
    std::size_t sdim = state_dim(cfg.state_mask, feature_dims, ds.class_count);
    run.policy = PolicyNet(sdim, cfg.agent_hidden, pool.size(),
                           Rng(cfg.seed, "agent-init").next_u64());
    return run;
}

namespace detail {

struct BatchView {
    Matrix2D x;
    std::vector<std::size_t> y;
};

inline BatchView gather_batch(const Dataset& ds, const Matrix2D& train_x,
                              const std::vector<std::size_t>& train_y,
                              const std::vector<std::size_t>& batch) {
    BatchView out;
    out.x = Matrix2D(batch.size(), train_x.cols);
    out.y.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = 0; j < train_x.cols; ++j)
            out.x.at(i, j) = train_x.at(batch[i], j);
        out.y[i] = train_y[batch[i]];
    }
    (void)ds;
    return out;
}

inline ActionWeights strategy_action(Strategy strategy, const StateBatch& state,
                                     PolicyNet& policy, const GammaSet& gammas,
                                     std::size_t batch, std::size_t m_count) {
    switch (strategy) {
        case Strategy::Aver:
            return ActionWeights::uniform(batch, m_count);
        case Strategy::Conf: {
            ActionWeights a = ActionWeights::uniform(batch, m_count);
            for (std::size_t i = 0; i < batch; ++i) {
                std::vector<double> conf =
                    confidence_weights(mtkd::detail::matrix_row(state.ce, i));
                for (std::size_t j = 0; j < m_count; ++j) {
                    a.w_conf.at(i, j) = conf[j];
                    a.w_logit.at(i, j) = conf[j];
                    a.w_feature.at(i, j) = conf[j];
                }
            }
            return a;
        }
        case Strategy::Div: {
            ActionWeights a = ActionWeights::uniform(batch, m_count);
            for (std::size_t i = 0; i < batch; ++i) {
                std::vector<double> dl =
                    divergence_weights_logit(mtkd::detail::matrix_row(state.kl, i));
                std::vector<double> df =
                    divergence_weights_feature(mtkd::detail::matrix_row(state.cos, i));
                for (std::size_t j = 0; j < m_count; ++j) {
                    a.w_logit_div.at(i, j) = dl[j];
                    a.w_feature_div.at(i, j) = df[j];
                    a.w_logit.at(i, j) = dl[j];
                    a.w_feature.at(i, j) = df[j];
                }
            }
            return a;
        }
        case Strategy::Rl:
            return build_action(policy, state, gammas, /*retain_cache=*/false);
        default:
            throw ParameterError("strategy_action: no weighted action for this strategy");
    }
}

}  // namespace detail

/// Algorithm step 1: one full epoch of equal-weight multi-teacher KD.
inline void pretrain_student(DistillRun& run, std::vector<DenseNet>& pool,
                             const SyntheticData& data, const TrainConfig& cfg) {
    const Dataset& ds = data.dataset;
    Matrix2D train_x = ds.gather_features(ds.train_idx);
    std::vector<std::size_t> train_y = ds.gather_labels(ds.train_idx);
    std::uint64_t shuffle_seed = Rng(cfg.seed, "pretrain-batches").next_u64();
    for (const auto& batch : batches(ds.train_idx.size(), cfg.batch_size, shuffle_seed, 0)) {
        auto bv = detail::gather_batch(ds, train_x, train_y, batch);
        TeacherOutputs teachers = compute_teacher_outputs(pool, bv.x, bv.y);
        auto [f, z] = run.student.forward_features(bv.x);
        StudentOutputs student{std::move(f), std::move(z)};
        ActionWeights w = ActionWeights::uniform(batch.size(), pool.size());
        auto [bd, grads] = mtkd_loss(student, teachers, w, bv.y, cfg.kd, run.regressors);
        run.student.backward(grads.d_logits, grads.d_feature);
        sgd_step(run.student_params(), cfg.lr_student, cfg.momentum, cfg.weight_decay);
    }
}

/// Algorithm step 2: one pass collecting (state, equal-weight action,
/// reward) over all samples, then a policy-gradient update from that
/// history. The student is untouched.
inline void pretrain_agent(DistillRun& run, std::vector<DenseNet>& pool,
                           const SyntheticData& data, const TrainConfig& cfg) {
    const Dataset& ds = data.dataset;
    Matrix2D train_x = ds.gather_features(ds.train_idx);
    std::vector<std::size_t> train_y = ds.gather_labels(ds.train_idx);
    std::uint64_t shuffle_seed = Rng(cfg.seed, "agent-pretrain-batches").next_u64();
    run.history.clear();
    for (const auto& batch : batches(ds.train_idx.size(), cfg.batch_size, shuffle_seed, 0)) {
        auto bv = detail::gather_batch(ds, train_x, train_y, batch);
        TeacherOutputs teachers = compute_teacher_outputs(pool, bv.x, bv.y);
        auto [f, z] = run.student.forward_features(bv.x, /*retain_cache=*/false);
        StudentOutputs student{std::move(f), std::move(z)};
        StateBatch state = build_state(student, teachers, run.regressors, cfg.state_mask,
                                       cfg.state_zscore);
        ActionWeights action = ActionWeights::uniform(batch.size(), pool.size());
        Matrix2D raw = compute_reward(student, teachers, bv.y, cfg.kd, run.regressors);
        run.history.record(std::move(state), std::move(action),
                           normalize_rewards(raw, cfg.reward_norm));
    }
    pg_update(run.policy, run.history, cfg.lr_agent, cfg.pg_surrogate,
              cfg.learnable_gammas ? &run.gammas : nullptr);
    run.history.clear();
}

/// Algorithm 2: alternating multi-teacher KD and agent optimization, plus
/// the simpler strategies as dispatch cases. Returns one metrics row per
/// epoch.
inline RunMetrics alternating_train(DistillRun& run, std::vector<DenseNet>& pool,
                                    const SyntheticData& data, const TrainConfig& cfg) {
    cfg.validate();
    const Dataset& ds = data.dataset;
    const std::size_t m_count = cfg.strategy == Strategy::Baseline ? cfg.teacher_count
                                                                   : pool.size();
    Matrix2D train_x = ds.gather_features(ds.train_idx);
    std::vector<std::size_t> train_y = ds.gather_labels(ds.train_idx);
    std::uint64_t shuffle_seed = Rng(cfg.seed, "train-batches").next_u64();

    RunMetrics metrics;
    metrics.strategy = strategy_name(cfg.strategy);
    metrics.teacher_count = m_count;

    double best_acc = -1.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = epoch >= cfg.epochs * 2 / 3 ? cfg.lr_student * 0.1 : cfg.lr_student;
        EpochRow row;
        row.epoch = epoch;
        row.strategy = metrics.strategy;
        row.mean_w_logit.assign(m_count, 0.0);
        row.mean_w_feature.assign(m_count, 0.0);
        row.mean_reward.assign(m_count, 0.0);
        std::size_t sample_total = 0;
        run.history.clear();

        auto epoch_batches = batches(ds.train_idx.size(), cfg.batch_size, shuffle_seed, epoch);
        for (const auto& batch : epoch_batches) {
            auto bv = detail::gather_batch(ds, train_x, train_y, batch);

            if (cfg.strategy == Strategy::Baseline) {
                Matrix2D logits = run.student.forward(bv.x);
                auto [loss, grad] = cross_entropy(logits, bv.y);
                run.student.backward(
                    scale(grad, 1.0 / static_cast<double>(batch.size())));
                sgd_step(run.student.params(), lr, cfg.momentum, cfg.weight_decay);
                double task = mean(loss);
                row.task_loss += task * static_cast<double>(batch.size());
                row.total_loss += task * static_cast<double>(batch.size());
                sample_total += batch.size();
                continue;
            }

            TeacherOutputs teachers = compute_teacher_outputs(pool, bv.x, bv.y);
            auto [f, z] = run.student.forward_features(bv.x);
            StudentOutputs student{std::move(f), std::move(z)};

            StateBatch state;
            bool need_state = cfg.strategy == Strategy::Rl ||
                              cfg.strategy == Strategy::Div ||
                              cfg.strategy == Strategy::Conf;
            if (need_state)
                state = build_state(student, teachers, run.regressors, cfg.state_mask,
                                    cfg.state_zscore);
            ActionWeights action = detail::strategy_action(
                cfg.strategy, state, run.policy, run.gammas, batch.size(), m_count);

            auto [bd, grads] =
                mtkd_loss(student, teachers, action, bv.y, cfg.kd, run.regressors);
            run.student.backward(grads.d_logits, grads.d_feature);
            sgd_step(run.student_params(), lr, cfg.momentum, cfg.weight_decay);

            if (cfg.strategy == Strategy::Rl) {
                StudentOutputs reward_out = student;
                if (cfg.reward_timing == RewardTiming::Post) {
                    auto [f2, z2] = run.student.forward_features(bv.x, false);
                    reward_out = StudentOutputs{std::move(f2), std::move(z2)};
                }
                Matrix2D raw =
                    compute_reward(reward_out, teachers, bv.y, cfg.kd, run.regressors);
                for (std::size_t i = 0; i < raw.rows; ++i)
                    for (std::size_t m = 0; m < m_count; ++m)
                        row.mean_reward[m] += raw.at(i, m);
                run.history.record(std::move(state), action,
                                   normalize_rewards(raw, cfg.reward_norm));
            }

            double b = static_cast<double>(batch.size());
            row.total_loss += bd.total * b;
            row.task_loss += bd.task * b;
            row.logit_kd += bd.logit_kd * b;
            row.feature_kd += bd.feature_kd * b;
            for (std::size_t i = 0; i < batch.size(); ++i)
                for (std::size_t m = 0; m < m_count; ++m) {
                    row.mean_w_logit[m] += action.w_logit.at(i, m);
                    row.mean_w_feature[m] += action.w_feature.at(i, m);
                }
            sample_total += batch.size();
        }

        // history replay: the agent update happens strictly after the epoch's
        // batch loop
        if (cfg.strategy == Strategy::Rl && !run.history.empty()) {
            pg_update(run.policy, run.history, cfg.lr_agent, cfg.pg_surrogate,
                      cfg.learnable_gammas ? &run.gammas : nullptr);
            run.history.clear();
        }

        double inv = 1.0 / static_cast<double>(sample_total);
        row.total_loss *= inv;
        row.task_loss *= inv;
        row.logit_kd *= inv;
        row.feature_kd *= inv;
        for (std::size_t m = 0; m < m_count; ++m) {
            row.mean_w_logit[m] *= inv;
            row.mean_w_feature[m] *= inv;
            row.mean_reward[m] *= inv;
        }
        row.acc = evaluate(run.student, ds);
        metrics.rows.push_back(std::move(row));

        if (cfg.plateau_patience > 0) {
            if (metrics.rows.back().acc > best_acc) {
                best_acc = metrics.rows.back().acc;
                since_best = 0;
            } else if (++since_best >= cfg.plateau_patience) {
                break;
            }
        }
    }
    return metrics;
}

/// One full run: Algorithm 1 then Algorithm 2 for the given strategy.
/// The pool may be empty only for the baseline strategy.
inline RunMetrics run_strategy(const TrainConfig& cfg, const SyntheticData& data,
                               std::vector<DenseNet>& pool) {
    cfg.validate();
    if (cfg.strategy != Strategy::Baseline && pool.empty())
        throw ParameterError("run_strategy: this strategy needs a teacher pool");
    DistillRun run = make_distill_run(cfg, data.dataset, pool);
    if (cfg.strategy == Strategy::Rl) {
        pretrain_student(run, pool, data, cfg);
        pretrain_agent(run, pool, data, cfg);
    }
    return alternating_train(run, pool, data, cfg);
}

}  // namespace mtkd
