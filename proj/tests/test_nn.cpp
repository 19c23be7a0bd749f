#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lamp/nn.hpp"

using namespace lamp::nn;

namespace {

// Central-difference check of backward() for loss = sum(upstream . f(x)).
void check_backward(Activation hidden, Activation out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Mlp net({4, 6, 5, 3}, hidden, out, rng);
    std::normal_distribution<double> g(0.0, 1.0);
    const Matrix x = Matrix::NullaryExpr(4, 7, [&] { return g(rng); });
    const Matrix up = Matrix::NullaryExpr(3, 7, [&] { return g(rng); });
    auto loss = [&] { return (up.array() * net.forward_batch(x).array()).sum(); };
    Tape tape;
    net.forward_batch(x, tape);
    Matrix dx;
    const GradientSet grads = net.backward(tape, up, &dx);
    const auto views = grads.views();
    auto params = net.parameters();
    constexpr double h = 1e-6;
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (Eigen::Index i = 0; i < params[b].size(); ++i) {
            const double keep = params[b](i);
            params[b](i) = keep + h;
            const double lp = loss();
            params[b](i) = keep - h;
            const double lm = loss();
            params[b](i) = keep;
            CHECK(views[b](i) == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5).scale(1.0));
        }
    }
    Matrix xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = xp(i);
        auto f = [&](double v) {
            xp(i) = v;
            return (up.array() * net.forward_batch(xp).array()).sum();
        };
        const double fd = (f(keep + h) - f(keep - h)) / (2 * h);
        xp(i) = keep;
        CHECK(dx(i) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
    CHECK(net.input_gradient(tape, up).isApprox(dx, 1e-14));
}

}  // namespace

TEST_CASE("backward matches finite differences") {
    check_backward(Activation::Tanh, Activation::Identity, 1);
    check_backward(Activation::Relu, Activation::Tanh, 2);
    check_backward(Activation::Tanh, Activation::Tanh, 3);
}

TEST_CASE("single and batched forward agree") {
    std::mt19937_64 rng(4);
    Mlp net({3, 8, 2}, Activation::Relu, Activation::Tanh, rng);
    const Matrix x = Matrix::Random(3, 5);
    const Matrix y = net.forward_batch(x);
    for (int c = 0; c < 5; ++c) CHECK(net.forward(x.col(c)).isApprox(y.col(c), 1e-14));
    CHECK(y.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("tanh activation matches the standard library") {
    Vector z(7);
    z << -30.0, -2.5, -1e-9, 0.0, 1e-9, 0.7, 30.0;
    const Vector t = apply_activation(Activation::Tanh, z);
    for (Eigen::Index i = 0; i < z.size(); ++i) CHECK(std::abs(t(i) - std::tanh(z(i))) <= 1e-15);
}

TEST_CASE("initialization is bounded by fan-in") {
    std::mt19937_64 rng(5);
    Mlp net({16, 32, 4}, Activation::Relu, Activation::Identity, rng);
    CHECK(net.parameter_count() == 16 * 32 + 32 + 32 * 4 + 4);
    CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(16.0));
    CHECK(net.layers()[1].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
}

TEST_CASE("first Adam step moves each parameter by lr against the gradient sign") {
    Vector w = Vector::Zero(4);
    Vector g(4);
    g << 3.0, -0.01, 250.0, -7.0;
    Adam opt(1e-3);
    opt.step({ParamRef(w.data(), 4)}, {ConstParamRef(g.data(), 4)});
    for (int i = 0; i < 4; ++i) CHECK(w(i) == doctest::Approx(-1e-3 * (g(i) > 0 ? 1 : -1)).epsilon(1e-4));
    CHECK(opt.steps() == 1);
}

TEST_CASE("Adam minimizes a quadratic") {
    Vector w(3);
    w << 4.0, -2.0, 1.0;
    Vector target(3);
    target << 1.0, 0.5, -3.0;
    Adam opt(5e-2);
    for (int k = 0; k < 3000; ++k) {
        const Vector g = 2.0 * (w - target);
        opt.step({ParamRef(w.data(), 3)}, {ConstParamRef(g.data(), 3)});
    }
    CHECK((w - target).norm() < 1e-3);
}

TEST_CASE("polyak interpolates and copies at tau one") {
    std::mt19937_64 rng(6);
    Mlp a({3, 4, 2}, Activation::Tanh, Activation::Identity, rng);
    Mlp b({3, 4, 2}, Activation::Tanh, Activation::Identity, rng);
    const Mlp b0 = b;
    polyak_update(b, a, 0.25);
    const auto pa = std::as_const(a).parameters(), pb = std::as_const(b).parameters(), p0 = b0.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k)
        CHECK((pb[k] - (0.25 * pa[k] + 0.75 * p0[k])).cwiseAbs().maxCoeff() <= 1e-15);
    polyak_update(b, a, 1.0);
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(std::as_const(b).parameters()[k] == pa[k]);
    polyak_update(b, b0, 0.0);
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(std::as_const(b).parameters()[k] == pa[k]);
}

TEST_CASE("save and load round-trip exactly") {
    std::mt19937_64 rng(7);
    Mlp net({5, 7, 3}, Activation::Relu, Activation::Tanh, rng);
    std::stringstream s;
    net.save(s);
    const Mlp back = Mlp::load(s);
    REQUIRE(back.same_shape(net));
    const auto p = std::as_const(net).parameters(), q = back.parameters();
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k] == q[k]);
    CHECK(back.layers().back().activation == Activation::Tanh);

    std::stringstream m;
    const Matrix x = Matrix::Random(2, 3) * 1e-300;
    write_matrix(m, "x", x);
    CHECK(read_matrix(m, "x") == x);
    std::stringstream bad;
    write_matrix(bad, "x", x);
    CHECK_THROWS(read_matrix(bad, "y"));
}

TEST_CASE("gradient sets add and scale elementwise") {
    std::mt19937_64 rng(8);
    Mlp net({2, 3, 1}, Activation::Tanh, Activation::Identity, rng);
    GradientSet g = net.zero_gradients();
    g.weight[0].setConstant(1.0);
    GradientSet h = g;
    h.add(g);
    h.scale(0.25);
    CHECK(h.weight[0](0, 0) == 0.5);
    CHECK(h.bias[1](0) == 0.0);
}

TEST_CASE("activation names round-trip") {
    for (auto a : {Activation::Identity, Activation::Tanh, Activation::Relu})
        CHECK(activation_from_string(to_string(a)) == a);
    CHECK_THROWS(activation_from_string("gelu"));
}
