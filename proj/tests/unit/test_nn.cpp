#include "doctest.h"

#include <cmath>
#include <random>

#include "ngcnn/error.hpp"
#include "ngcnn/nn.hpp"

using namespace ngcnn;

namespace {

Tensor<double> seq(std::vector<double> v, std::size_t channels = 1)
{
    const std::size_t n = v.size() / channels;
    return Tensor<double>({n, channels}, std::move(v));
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values) {
        v = g(rng);
    }
    return t;
}

}  // namespace

TEST_CASE("conv1d forward examples")
{
    const auto x = seq({1, 2, 3});
    const Tensor<double> zero_bias({1});

    const auto id = conv1d_forward(x, Tensor<double>({1, 1, 1}, {1.0}), zero_bias, 1, Activation::identity);
    CHECK(id.values == std::vector<double>{1, 2, 3});

    const auto pair = conv1d_forward(x, Tensor<double>({2, 1, 1}, {1.0, 1.0}), zero_bias, 1, Activation::identity);
    CHECK(pair.values == std::vector<double>{3, 5});

    CHECK(conv_output_length(400, 3, 1) == 398);
    CHECK(conv_output_length(10, 3, 2) == 4);
    CHECK(conv_output_length(2, 3, 1) == 0);

    try {
        conv1d_forward(x, Tensor<double>({4, 1, 1}), zero_bias, 1, Activation::identity);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string what = e.what();
        CHECK(what.find('3') != std::string::npos);
        CHECK(what.find('4') != std::string::npos);
    }
}

TEST_CASE("regional max pooling examples")
{
    const auto a = maxpool_forward(seq({1, 3, 2, 5}), 2);
    CHECK(a.output.values == std::vector<double>{3, 5});
    CHECK(a.argmax == std::vector<std::uint32_t>{1, 3});

    const auto b = maxpool_forward(seq({5, 1, 4}), 2);
    CHECK(b.output.values == std::vector<double>{5, 4});

    CHECK(pool_output_length(398, 25) == 16);
    CHECK(pool_output_length(28, 2) == 14);
}

TEST_CASE("max pooling backward routes to the argmax only")
{
    const auto x = seq({1, 3, 2, 5, 4});
    const auto r = maxpool_forward(x, 2);
    Tensor<double> up({3, 1}, {10.0, 20.0, 30.0});
    Tensor<double> g({5, 1});
    maxpool_backward(r.argmax, up, g);
    CHECK(g.values == std::vector<double>{0, 10, 0, 20, 30});
}

TEST_CASE("max pooling tie-break is the first maximum")
{
    // Rows after the first maximum can be permuted freely.
    const auto a = maxpool_forward(seq({7, 7, 1, 7}), 4);
    const auto b = maxpool_forward(seq({7, 1, 7, 7}), 4);
    CHECK(a.output.values == b.output.values);
    CHECK(a.argmax[0] == 0);
    CHECK(b.argmax[0] == 0);
}

TEST_CASE("shape algebra: conv then pool")
{
    for (std::size_t n = 10; n <= 500; ++n) {
        for (std::size_t k : {1, 2, 3}) {
            for (std::size_t r : {2, 4, 5, 16, 25, 27}) {
                const std::size_t expected = (n - k + 1 + r - 1) / r;
                REQUIRE(pool_output_length(conv_output_length(n, k, 1), r) == expected);
            }
        }
    }
}

TEST_CASE("binary cross-entropy")
{
    CHECK(bce_loss(1.0 - 1e-12, 1) < 1e-11);
    CHECK(bce_loss(0.5, 1) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(bce_loss(0.9, 0) == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK(std::isfinite(bce_loss(0.0, 1)));
    CHECK(std::isfinite(bce_loss(1.0, 0)));
    CHECK(clamp_probability(1.0f) < 1.0f);
    CHECK(clamp_probability(0.0f) > 0.0f);
}

TEST_CASE("adam step")
{
    Parameter<double> p("w", Shape{1});
    p.value.values = {0.5};
    p.grad.values = {1.0};
    adam_step(p);
    // m_hat = v_hat = 1 on the first step: delta = -lr * 1 / (1 + eps)
    CHECK(p.value.values[0] - 0.5 == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(p.step_count == 1);

    Parameter<double> q("z", Shape{2});
    q.value.values = {1.0, -2.0};
    adam_step(q);
    CHECK(q.value.values == std::vector<double>{1.0, -2.0});

    Parameter<double> a("a", Shape{3}), b("b", Shape{3});
    a.value.values = b.value.values = {0.1, 0.2, 0.3};
    for (int i = 0; i < 5; ++i) {
        a.grad.values = b.grad.values = {0.3 * i, -1.0, 2.0};
        adam_step(a);
        adam_step(b);
    }
    CHECK(a.value.values == b.value.values);
    CHECK(a.adam_m.values == b.adam_m.values);
    CHECK(a.adam_v.values == b.adam_v.values);
}

TEST_CASE("dropout")
{
    Rng rng(1);
    const auto x = random_tensor({10000}, 2);
    CHECK(dropout_forward(x, 0.0, Mode::train, rng).values == x.values);
    CHECK(dropout_forward(x, 0.35, Mode::infer, rng).values == x.values);

    std::vector<std::uint32_t> mask;
    const auto y = dropout_forward(x, 0.35, Mode::train, rng, &mask);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (mask[i]) {
            ++kept;
            CHECK(y.values[i] == doctest::Approx(x.values[i] / 0.65));
        } else {
            CHECK(y.values[i] == 0.0);
        }
    }
    const double fraction = static_cast<double>(kept) / 10000.0;
    CHECK(fraction > 0.60);
    CHECK(fraction < 0.70);
}

TEST_CASE("backward of a linear dense layer")
{
    Network<double> net({3});
    net.add("dense", Dense{1, Activation::identity, 0.0}, kNetworkInput);
    net.initialize(4);
    const Tensor<double> x({3}, {0.5, -1.0, 2.0});
    const auto trace = net.forward(x, Mode::infer);
    net.backward(trace, Tensor<double>({1}, {1.0}));
    CHECK(net.parameters()[0].grad.values == x.values);
    CHECK(net.parameters()[1].grad.values == std::vector<double>{1.0});
}

TEST_CASE("backward before forward is rejected")
{
    Network<double> net({3});
    net.add("dense", Dense{1, Activation::identity, 0.0}, kNetworkInput);
    CHECK_THROWS_AS(net.backward(Trace<double>{}, Tensor<double>({1}, {1.0})), Error);
}

TEST_CASE("L2 penalty and gradient")
{
    Network<double> net({4});
    net.add("hidden", Dense{3, Activation::tanh, 0.1}, kNetworkInput);
    net.add("out", Dense{1, Activation::identity, 0.25}, 0);
    net.initialize(8);
    auto& ps = net.parameters();
    ps[1].value.values = {1.0, 2.0, 3.0};  // biases are not penalised
    double expected = 0.0;
    for (double w : ps[0].value.values) expected += 0.1 * w * w;
    for (double w : ps[2].value.values) expected += 0.25 * w * w;
    CHECK(net.l2_penalty() == doctest::Approx(expected).epsilon(1e-14));

    auto g = net.zero_gradients();
    net.add_l2_gradient(g);
    for (std::size_t i = 0; i < ps[0].value.size(); ++i) {
        CHECK(g[0].values[i] == doctest::Approx(2 * 0.1 * ps[0].value.values[i]));
    }
    CHECK(g[1].values == std::vector<double>{0, 0, 0});
    for (std::size_t i = 0; i < ps[2].value.size(); ++i) {
        CHECK(g[2].values[i] == doctest::Approx(2 * 0.25 * ps[2].value.values[i]));
    }
}

TEST_CASE("gradcheck oracles")
{
    SUBCASE("dense only")
    {
        Network<double> net({6});
        net.add("hidden", Dense{5, Activation::tanh, 0.1}, kNetworkInput);
        net.add("logit", Dense{1, Activation::identity, 0.1}, 0);
        net.add("output", SigmoidOutput{}, 1);
        net.initialize(3);
        const auto r = gradcheck(net, random_tensor({6}, 4), 1);
        CHECK(r.max_relative_error < 1e-6);
        CHECK(r.checked == net.parameter_count());
    }
    SUBCASE("conv, pool and dense")
    {
        Network<double> net({12, 3});
        net.add("conv", Conv1D{3, 4, 1, Activation::tanh, 0}, kNetworkInput);
        net.add("pool", RegionalMaxPool{3}, 0);
        net.add("flatten", Flatten{}, 1);
        net.add("logit", Dense{1, Activation::identity, 0.1}, 2);
        net.add("output", SigmoidOutput{}, 3);
        net.initialize(5);
        CHECK(gradcheck(net, random_tensor({12, 3}, 6), 0).max_relative_error < 1e-4);
    }
    SUBCASE("softplus output saturated by the clamp has zero gradient")
    {
        Network<double> net({3});
        net.add("logit", Dense{1, Activation::identity, 0.0}, kNetworkInput);
        net.add("output", SigmoidOutput{OutputActivation::softplus}, 0);
        net.initialize(2);
        auto& w = net.parameters()[0].value.values;
        w = {10.0, 10.0, 10.0};
        const Tensor<double> x({3}, std::vector<double>{1.0, 1.0, 1.0});
        const auto trace = net.forward(x, Mode::infer);
        CHECK(trace.output().values[0] < 1.0);
        auto g = net.zero_gradients();
        net.loss_backward(trace, 0, g);
        CHECK(g[0].values == std::vector<double>{0, 0, 0});
        CHECK(gradcheck(net, x, 0).max_relative_error < 1e-6);
    }
    SUBCASE("dropout in train mode is rejected")
    {
        Network<double> net({4});
        net.add("drop", Dropout{0.5}, kNetworkInput);
        net.add("logit", Dense{1, Activation::identity, 0.0}, 0);
        net.add("output", SigmoidOutput{}, 1);
        net.initialize(1);
        CHECK_THROWS_AS(gradcheck(net, random_tensor({4}, 1), 1, 1e-5, Mode::train), ArgumentError);
        CHECK(gradcheck(net, random_tensor({4}, 1), 1).max_relative_error < 1e-6);
    }
}

TEST_CASE("shape errors name the layer")
{
    Network<double> net({5, 2});
    try {
        net.add("too_wide", Conv1D{6, 3, 1, Activation::relu, 0}, kNetworkInput);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("too_wide") != std::string::npos);
    }
}
