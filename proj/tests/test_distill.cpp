#include <catch_amalgamated.hpp>

#include "mtkd/distill.hpp"

using namespace mtkd;

namespace {

double rel_err(double got, double want) {
    double denom = std::max({std::abs(got), std::abs(want), 1e-10});
    return std::abs(got - want) / denom;
}

Matrix2D random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix2D m(r, c);
    for (double& v : m.data) v = rng.uniform(-scale, scale);
    return m;
}

struct Fixture {
    std::vector<DenseNet> teachers;
    DenseNet student{NetSpec::mlp({4, 5, 3}, 100)};
    std::vector<DenseNet> regressors;
    Matrix2D x;
    std::vector<std::size_t> labels = {0, 2};

    explicit Fixture(std::size_t m_count = 2) {
        Rng rng(55, "distill-fixture");
        x = random_matrix(2, 4, rng);
        for (std::size_t m = 0; m < m_count; ++m) {
            teachers.emplace_back(NetSpec::mlp({4, 6 + m, 3}, 200 + m));
            regressors.emplace_back(
                NetSpec{{5, 6 + m}, {Activation::None}, 300 + m});
        }
    }

    TeacherOutputs teacher_outputs() {
        return compute_teacher_outputs(teachers, x, labels);
    }

    StudentOutputs student_outputs(bool retain = true) {
        auto [f, z] = student.forward_features(x, retain);
        return StudentOutputs{std::move(f), std::move(z)};
    }
};

}  // namespace

TEST_CASE("teacher_ce limit and uniform cases, shared with cross_entropy") {
    Matrix2D certain(1, 3, {60, 0, 0});
    CHECK(teacher_ce(certain, {0})[0] < 1e-9);

    Matrix2D uniform(1, 5, {2, 2, 2, 2, 2});
    CHECK(teacher_ce(uniform, {3})[0] == Catch::Approx(std::log(5.0)));

    Rng rng(9, "tce");
    Matrix2D logits = random_matrix(4, 6, rng, 2.0);
    std::vector<std::size_t> labels = {0, 5, 2, 3};
    auto direct = cross_entropy(logits, labels).first;
    CHECK(teacher_ce(logits, labels) == direct);
}

TEST_CASE("single_kd_loss with alpha=beta=0 is pure cross-entropy") {
    Fixture fx(1);
    KDConfig cfg{0.0, 0.0, 4.0};
    auto student = fx.student_outputs();
    auto teachers = fx.teacher_outputs();
    auto [bd, grads] = single_kd_loss(student, teachers.features[0], teachers.logits[0],
                                      fx.labels, cfg, fx.regressors[0]);
    double ce = mean(cross_entropy(student.logits, fx.labels).first);
    CHECK(bd.total == Catch::Approx(ce));
    CHECK(bd.logit_kd == 0.0);
    CHECK(bd.feature_kd == 0.0);
}

TEST_CASE("perfect mimic zeroes both KD terms") {
    Fixture fx(1);
    KDConfig cfg;
    auto student = fx.student_outputs();
    // teacher outputs fabricated to equal the student's
    Matrix2D t_logits = student.logits;
    Matrix2D t_feature = fx.regressors[0].forward(student.feature, false);
    auto [bd, grads] = single_kd_loss(student, t_feature, t_logits, fx.labels, cfg,
                                      fx.regressors[0]);
    CHECK(std::abs(bd.logit_kd) < 1e-12);
    CHECK(std::abs(bd.feature_kd) < 1e-12);
}

TEST_CASE("single_kd_loss equals hand-composed H + alpha*KL + beta*MSE") {
    Fixture fx(1);
    KDConfig cfg{1.0, 5.0, 4.0};
    auto student = fx.student_outputs();
    auto teachers = fx.teacher_outputs();

    double want_task = mean(cross_entropy(student.logits, fx.labels).first);
    double want_kl =
        mean(kl_divergence(student.logits, teachers.logits[0], cfg.temperature).first);
    Matrix2D regressed = fx.regressors[0].forward(student.feature, false);
    double want_mse = mean(mse(regressed, teachers.features[0]).first);

    auto [bd, grads] = single_kd_loss(student, teachers.features[0], teachers.logits[0],
                                      fx.labels, cfg, fx.regressors[0]);
    CHECK(bd.task == Catch::Approx(want_task));
    CHECK(bd.logit_kd == Catch::Approx(want_kl));
    CHECK(bd.feature_kd == Catch::Approx(want_mse));
    CHECK(bd.total == Catch::Approx(want_task + 1.0 * want_kl + 5.0 * want_mse));
}

TEST_CASE("mtkd_loss with M=1 and w=1 reduces to single_kd_loss") {
    Fixture fx(1);
    KDConfig cfg;
    auto student = fx.student_outputs();
    auto teachers = fx.teacher_outputs();

    ActionWeights w = ActionWeights::uniform(2, 1);  // 1/M == 1 for M=1
    auto [bd_m, g_m] = mtkd_loss(student, teachers, w, fx.labels, cfg, fx.regressors);

    std::vector<DenseNet> reg_copy = fx.regressors;
    auto [bd_s, g_s] = single_kd_loss(student, teachers.features[0], teachers.logits[0],
                                      fx.labels, cfg, reg_copy[0]);
    CHECK(std::abs(bd_m.total - bd_s.total) < 1e-10);
    CHECK(std::abs(bd_m.task - bd_s.task) < 1e-10);
    CHECK(std::abs(bd_m.logit_kd - bd_s.logit_kd) < 1e-10);
    CHECK(std::abs(bd_m.feature_kd - bd_s.feature_kd) < 1e-10);
}

TEST_CASE("all-zero weights leave only the task loss") {
    Fixture fx(2);
    KDConfig cfg;
    auto student = fx.student_outputs();
    auto teachers = fx.teacher_outputs();
    ActionWeights w = ActionWeights::uniform(2, 2);
    w.w_logit = Matrix2D(2, 2);
    w.w_feature = Matrix2D(2, 2);
    auto [bd, grads] = mtkd_loss(student, teachers, w, fx.labels, cfg, fx.regressors);
    CHECK(bd.logit_kd == 0.0);
    CHECK(bd.feature_kd == 0.0);
    CHECK(bd.total == Catch::Approx(bd.task));
}

TEST_CASE("equal weights match the mean of single-teacher KD terms") {
    Fixture fx(3);
    KDConfig cfg;
    auto student = fx.student_outputs();
    auto teachers = fx.teacher_outputs();
    ActionWeights w = ActionWeights::uniform(2, 3);
    auto [bd, grads] = mtkd_loss(student, teachers, w, fx.labels, cfg, fx.regressors);

    double kl_sum = 0.0, mse_sum = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
        kl_sum +=
            mean(kl_divergence(student.logits, teachers.logits[m], cfg.temperature).first);
        Matrix2D regressed = fx.regressors[m].forward(student.feature, false);
        mse_sum += mean(mse(regressed, teachers.features[m]).first);
    }
    CHECK(std::abs(bd.logit_kd - kl_sum / 3.0) < 1e-10);
    CHECK(std::abs(bd.feature_kd - mse_sum / 3.0) < 1e-10);
}

TEST_CASE("mtkd_loss is linear in the weight vectors") {
    Fixture fx(2);
    KDConfig cfg;
    auto student = fx.student_outputs();
    auto teachers = fx.teacher_outputs();
    ActionWeights w = ActionWeights::uniform(2, 2);
    auto [bd1, g1] = mtkd_loss(student, teachers, w, fx.labels, cfg, fx.regressors);
    w.w_logit = scale(w.w_logit, 2.0);
    auto [bd2, g2] = mtkd_loss(student, teachers, w, fx.labels, cfg, fx.regressors);
    CHECK(bd2.logit_kd == Catch::Approx(2.0 * bd1.logit_kd));
    CHECK(bd2.task == Catch::Approx(bd1.task));
    CHECK(bd2.feature_kd == Catch::Approx(bd1.feature_kd));
}

TEST_CASE("mtkd_loss student gradients pass finite differences; teachers frozen") {
    Fixture fx(2);
    KDConfig cfg{1.0, 5.0, 4.0};
    auto teachers = fx.teacher_outputs();
    Rng wrng(77, "w");
    ActionWeights w = ActionWeights::uniform(2, 2);
    for (double& v : w.w_logit.data) v = wrng.uniform(0.1, 0.9);
    for (double& v : w.w_feature.data) v = wrng.uniform(0.1, 0.9);

    std::vector<double> teacher_params_before;
    for (DenseNet& t : fx.teachers)
        for (ParamTensor* p : t.params())
            for (double v : p->value.data) teacher_params_before.push_back(v);

    auto loss_fn = [&] {
        auto student = fx.student_outputs(false);
        std::vector<DenseNet> regs = fx.regressors;
        auto [bd, g] = mtkd_loss(student, teachers, w, fx.labels, cfg, regs, false);
        return bd.total;
    };

    // analytic pass
    fx.student.zero_grads();
    for (DenseNet& r : fx.regressors) r.zero_grads();
    auto student = fx.student_outputs();
    auto [bd, grads] = mtkd_loss(student, teachers, w, fx.labels, cfg, fx.regressors);
    fx.student.backward(grads.d_logits, grads.d_feature);

    std::vector<ParamTensor*> all = fx.student.params();
    for (DenseNet& r : fx.regressors)
        for (ParamTensor* p : r.params()) all.push_back(p);
    std::vector<Matrix2D> analytic;
    for (ParamTensor* p : all) analytic.push_back(p->grad);
    std::vector<Matrix2D> fd = finite_diff_grad(loss_fn, all);
    for (std::size_t k = 0; k < fd.size(); ++k)
        for (std::size_t i = 0; i < fd[k].data.size(); ++i)
            CHECK(rel_err(analytic[k].data[i], fd[k].data[i]) < 1e-4);

    // teacher parameters are untouched bit for bit
    std::vector<double> teacher_params_after;
    for (DenseNet& t : fx.teachers)
        for (ParamTensor* p : t.params())
            for (double v : p->value.data) teacher_params_after.push_back(v);
    CHECK(teacher_params_before == teacher_params_after);
    for (DenseNet& t : fx.teachers)
        for (ParamTensor* p : t.params())
            for (double g : p->grad.data) CHECK(g == 0.0);
}

TEST_CASE("mtkd_loss rejects weight/teacher count mismatches") {
    Fixture fx(2);
    KDConfig cfg;
    auto student = fx.student_outputs();
    auto teachers = fx.teacher_outputs();
    ActionWeights w = ActionWeights::uniform(2, 3);
    CHECK_THROWS_AS(mtkd_loss(student, teachers, w, fx.labels, cfg, fx.regressors),
                    ShapeError);
}
