#include <catch_amalgamated.hpp>

#include "mtkd/net.hpp"

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

void check_param_grads_vs_fd(DenseNet& net, const std::function<double()>& loss_fn,
                             double tol = 1e-4) {
    // capture analytic grads accumulated by the caller before this call
    std::vector<Matrix2D> analytic;
    for (ParamTensor* p : net.params()) analytic.push_back(p->grad);
    std::vector<Matrix2D> fd = finite_diff_grad(loss_fn, net.params());
    for (std::size_t k = 0; k < fd.size(); ++k)
        for (std::size_t i = 0; i < fd[k].data.size(); ++i)
            CHECK(rel_err(analytic[k].data[i], fd[k].data[i]) < tol);
}

}  // namespace

TEST_CASE("build_net shapes, determinism, and seed sensitivity") {
    DenseNet net(NetSpec{{4, 3}, {Activation::None}, 9});
    REQUIRE(net.layers().size() == 1);
    CHECK(net.layers()[0].weights.value.rows == 4);
    CHECK(net.layers()[0].weights.value.cols == 3);
    for (double v : net.layers()[0].bias.value.data) CHECK(v == 0.0);

    DenseNet again(NetSpec{{4, 3}, {Activation::None}, 9});
    CHECK(net.layers()[0].weights.value.data == again.layers()[0].weights.value.data);

    DenseNet other(NetSpec{{4, 3}, {Activation::None}, 10});
    CHECK(net.layers()[0].weights.value.data != other.layers()[0].weights.value.data);
}

TEST_CASE("NetSpec validation") {
    CHECK_THROWS_AS(DenseNet(NetSpec{{4}, {}, 0}), ParameterError);
    CHECK_THROWS_AS(DenseNet(NetSpec{{4, 3}, {}, 0}), ParameterError);
    CHECK_THROWS_AS(DenseNet(NetSpec{{4, 0}, {Activation::None}, 0}), ParameterError);
}

TEST_CASE("forward_features degenerate depth: feature equals input") {
    DenseNet net(NetSpec{{3, 2}, {Activation::None}, 1});
    Matrix2D x(2, 3, {1, 2, 3, 4, 5, 6});
    auto [feature, logits] = net.forward_features(x);
    CHECK(feature.data == x.data);
    CHECK(logits.rows == 2);
    CHECK(logits.cols == 2);
}

TEST_CASE("forward_features shape contract") {
    DenseNet net(NetSpec::mlp({5, 7, 4}, 2));
    Rng rng(1, "x");
    Matrix2D x = random_matrix(6, 5, rng);
    auto [feature, logits] = net.forward_features(x);
    CHECK(feature.rows == 6);
    CHECK(feature.cols == 7);
    CHECK(logits.rows == 6);
    CHECK(logits.cols == 4);
    CHECK_THROWS_AS(net.forward_features(Matrix2D(2, 4)), ShapeError);
}

TEST_CASE("forward matches layer-by-layer hand evaluation") {
    DenseNet net(NetSpec{{2, 2, 1}, {Activation::Relu, Activation::None}, 0});
    // fixed small weights
    net.layers()[0].weights.value = Matrix2D(2, 2, {1, -1, 2, 0.5});
    net.layers()[0].bias.value = Matrix2D(1, 2, {0.1, -0.2});
    net.layers()[1].weights.value = Matrix2D(2, 1, {3, -2});
    net.layers()[1].bias.value = Matrix2D(1, 1, {0.25});

    Matrix2D x(1, 2, {1.0, 0.5});
    // z0 = [1*1+0.5*2+0.1, 1*-1+0.5*0.5-0.2] = [2.1, -0.95]; a1 = [2.1, 0]
    // logits = 2.1*3 + 0*-2 + 0.25 = 6.55
    auto [feature, logits] = net.forward_features(x);
    CHECK(feature.at(0, 0) == Catch::Approx(2.1));
    CHECK(feature.at(0, 1) == 0.0);
    CHECK(logits.at(0, 0) == Catch::Approx(6.55));
}

TEST_CASE("forward_features is pure given fixed parameters") {
    DenseNet net(NetSpec::mlp({4, 6, 3}, 5));
    Rng rng(2, "x");
    Matrix2D x = random_matrix(3, 4, rng);
    auto a = net.forward_features(x);
    auto b = net.forward_features(x, false);
    CHECK(a.first.data == b.first.data);
    CHECK(a.second.data == b.second.data);
}

TEST_CASE("backward requires a forward cache") {
    DenseNet net(NetSpec::mlp({2, 3}, 0));
    CHECK_THROWS_AS(net.backward(Matrix2D(1, 3)), StateError);
    net.forward(Matrix2D(1, 2));
    net.invalidate_cache();
    CHECK_THROWS_AS(net.backward(Matrix2D(1, 3)), StateError);
}

TEST_CASE("zero upstream grads give zero parameter grads") {
    DenseNet net(NetSpec::mlp({3, 4, 2}, 3));
    Rng rng(3, "x");
    net.forward_features(random_matrix(2, 3, rng));
    net.backward(Matrix2D(2, 2));
    for (ParamTensor* p : net.params())
        for (double g : p->grad.data) CHECK(g == 0.0);
}

TEST_CASE("logit-path-only gradients equal plain backprop") {
    DenseNet a(NetSpec::mlp({3, 4, 2}, 7));
    DenseNet b(NetSpec::mlp({3, 4, 2}, 7));
    Rng rng(4, "x");
    Matrix2D x = random_matrix(2, 3, rng);
    Matrix2D up = random_matrix(2, 2, rng);
    a.forward_features(x);
    b.forward_features(x);
    Matrix2D da = a.backward(up);
    Matrix2D db = b.backward(up, std::nullopt);
    CHECK(da.data == db.data);
    auto pa = a.params();
    auto pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i]->grad.data == pb[i]->grad.data);
}

TEST_CASE("two-path gradient matches finite differences of a KL+MSE composite") {
    DenseNet net(NetSpec::mlp({4, 5, 3}, 11));
    Rng rng(5, "x");
    Matrix2D x = random_matrix(3, 4, rng);
    Matrix2D teacher_logits = random_matrix(3, 3, rng);
    Matrix2D teacher_feature = random_matrix(3, 5, rng);
    const double alpha = 1.0, beta = 5.0, tau = 4.0;

    auto loss_fn = [&] {
        auto [f, z] = net.forward_features(x, false);
        auto [kl, klg] = kl_divergence(z, teacher_logits, tau);
        auto [ms, msg] = mse(f, teacher_feature);
        double s = 0.0;
        for (std::size_t i = 0; i < kl.size(); ++i) s += alpha * kl[i] + beta * ms[i];
        return s;
    };

    auto [f, z] = net.forward_features(x);
    auto [kl, klg] = kl_divergence(z, teacher_logits, tau);
    auto [ms, msg] = mse(f, teacher_feature);
    net.backward(scale(klg, alpha), scale(msg, beta));

    std::vector<Matrix2D> analytic;
    for (ParamTensor* p : net.params()) analytic.push_back(p->grad);
    std::vector<Matrix2D> fd = finite_diff_grad(loss_fn, net.params());
    for (std::size_t k = 0; k < fd.size(); ++k)
        for (std::size_t i = 0; i < fd[k].data.size(); ++i)
            CHECK(rel_err(analytic[k].data[i], fd[k].data[i]) < 1e-4);
}

TEST_CASE("full parameter gradients match finite differences on a 3-layer net") {
    DenseNet net(NetSpec::mlp({4, 8, 6, 3}, 13));
    Rng rng(6, "x");
    Matrix2D x = random_matrix(4, 4, rng);
    std::vector<std::size_t> labels = {0, 2, 1, 2};

    auto loss_fn = [&] {
        Matrix2D z = net.forward(x, false);
        auto [loss, grad] = cross_entropy(z, labels);
        double s = 0.0;
        for (double l : loss) s += l;
        return s;
    };

    net.zero_grads();
    Matrix2D z = net.forward(x);
    auto [loss, grad] = cross_entropy(z, labels);
    net.backward(grad);
    check_param_grads_vs_fd(net, loss_fn);
}
