#include "debias/tensor.hpp"

#include "debias/errors.hpp"
#include "testutil.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace debias;

TEST_CASE("affine_forward identity") {
    AffineLayer layer(2, 2);
    layer.weight = Matrix::Identity(2, 2);
    Vector x(2);
    x << 2.0, 3.0;
    const Vector y = affine_forward(layer, x);
    CHECK(y[0] == 2.0);
    CHECK(y[1] == 3.0);
}

TEST_CASE("affine_forward 1x2 with bias") {
    AffineLayer layer(1, 2);
    layer.weight << 1.0, 2.0;
    layer.bias << 1.0;
    Vector x(2);
    x << 3.0, 4.0;
    CHECK(affine_forward(layer, x)[0] == doctest::Approx(12.0).epsilon(1e-15));
}

TEST_CASE("affine_forward matches naive double-loop oracle") {
    SeededRng rng(7, "init");
    AffineLayer layer = AffineLayer::uniform_init(8, 16, rng);
    layer.bias = rng.standard_normal(8);
    const Vector x = rng.standard_normal(16);
    const Vector y = affine_forward(layer, x);
    for (Index r = 0; r < 8; ++r) {
        double expected = layer.bias[r];
        for (Index c = 0; c < 16; ++c) {
            expected += layer.weight(r, c) * x[c];
        }
        CHECK(std::abs(y[r] - expected) < 1e-12);
    }
}

TEST_CASE("affine_forward shape error names both dimensions") {
    AffineLayer layer(2, 16);
    Vector x = Vector::Zero(8);
    try {
        affine_forward(layer, x);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("16") != std::string::npos);
        CHECK(msg.find("8") != std::string::npos);
    }
}

TEST_CASE("affine_backward with zero upstream gradient") {
    SeededRng rng(3, "init");
    AffineLayer layer = AffineLayer::uniform_init(4, 6, rng);
    const Matrix w_before = layer.weight;
    const Vector x = rng.standard_normal(6);
    const Vector grad_in = affine_backward(layer, x, Vector::Zero(4));
    CHECK(grad_in.isZero(0.0));
    CHECK(layer.grad_weight.isZero(0.0));
    CHECK(layer.grad_bias.isZero(0.0));
    CHECK(layer.weight == w_before);
}

TEST_CASE("affine_backward scalar chain rule") {
    AffineLayer layer(1, 1);
    layer.weight << 3.0;
    Vector x(1), g(1);
    x << 2.0;
    g << 5.0;
    const Vector grad_in = affine_backward(layer, x, g);
    CHECK(grad_in[0] == 15.0);
    CHECK(layer.grad_weight(0, 0) == 10.0);
    CHECK(layer.grad_bias[0] == 5.0);
}

TEST_CASE("affine_backward gradients match finite differences") {
    SeededRng rng(11, "init");
    AffineLayer layer = AffineLayer::uniform_init(4, 6, rng);
    layer.bias = rng.standard_normal(4);
    const Vector x = rng.standard_normal(6);
    const Vector c = rng.standard_normal(4); // loss = c . (W x + b)

    Vector x_mut = x;
    const Vector grad_in = affine_backward(layer, x_mut, c);
    const auto loss = [&] { return c.dot(affine_forward(layer, x_mut)); };
    CHECK(testutil::max_rel_err_layer(layer, layer.grad_weight, layer.grad_bias, loss) < 1e-4);
    CHECK(testutil::max_rel_err(x_mut, grad_in, loss) < 1e-4);
}

TEST_CASE("forward then backward leaves parameters unchanged") {
    SeededRng rng(5, "init");
    const Index shapes[][2] = {{1, 1}, {4, 6}, {16, 8}};
    for (const auto& shape : shapes) {
        AffineLayer layer = AffineLayer::uniform_init(shape[0], shape[1], rng);
        const Matrix w = layer.weight;
        const Vector b = layer.bias;
        const Vector x = rng.standard_normal(shape[1]);
        const Vector g = rng.standard_normal(shape[0]);
        affine_forward(layer, x);
        affine_backward(layer, x, g);
        CHECK(layer.weight == w);
        CHECK(layer.bias == b);
        CHECK_FALSE(layer.grad_weight.isZero(0.0));
    }
}

TEST_CASE("batch affine agrees with per-row calls") {
    SeededRng rng(13, "init");
    AffineLayer batch_layer = AffineLayer::uniform_init(5, 7, rng);
    AffineLayer row_layer = batch_layer;
    const Matrix x = rng.standard_normal(9, 7);
    const Matrix g = rng.standard_normal(9, 5);

    const Matrix y = affine_forward(batch_layer, x);
    const Matrix grad_in = affine_backward(batch_layer, x, g);
    for (Index r = 0; r < x.rows(); ++r) {
        const Vector yr = affine_forward(row_layer, Vector(x.row(r).transpose()));
        CHECK((yr - y.row(r).transpose()).cwiseAbs().maxCoeff() < 1e-12);
        const Vector gr = affine_backward(row_layer, Vector(x.row(r).transpose()),
                                          Vector(g.row(r).transpose()));
        CHECK((gr - grad_in.row(r).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK((batch_layer.grad_weight - row_layer.grad_weight).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch_layer.grad_bias - row_layer.grad_bias).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam_step with zero gradients is a fixed point") {
    SeededRng rng(17, "init");
    AffineLayer layer = AffineLayer::uniform_init(3, 3, rng);
    AdamState state(layer);
    const Matrix w = layer.weight;
    adam_step(layer, state, 0.01);
    CHECK(layer.weight == w);
    CHECK(state.step_count == 1);
}

TEST_CASE("adam_step first-step magnitude equals the learning rate") {
    AffineLayer layer(1, 1);
    layer.weight << 0.0;
    layer.grad_weight << 1.0;
    AdamState state(layer);
    adam_step(layer, state, 0.1);
    CHECK(std::abs(std::abs(layer.weight(0, 0)) - 0.1) < 1e-8);
}

TEST_CASE("adam matches an independent scalar reference on f(w) = w^2") {
    AffineLayer layer(1, 1);
    layer.weight << 1.0;
    AdamState state(layer);
    const double lr = 0.1;

    // Reference descent written out directly.
    double w = 1.0, m = 0.0, v = 0.0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 100; ++t) {
        const double g = 2.0 * w;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double mhat = m / (1.0 - std::pow(b1, t));
        const double vhat = v / (1.0 - std::pow(b2, t));
        w -= lr * mhat / (std::sqrt(vhat) + eps);
    }

    for (int t = 0; t < 100; ++t) {
        layer.grad_weight(0, 0) = 2.0 * layer.weight(0, 0);
        adam_step(layer, state, lr);
    }
    CHECK(std::abs(layer.weight(0, 0) - w) < 1e-12);
    CHECK(std::abs(layer.weight(0, 0)) < 0.5);
    CHECK(state.step_count == 100);
}

TEST_CASE("adam_step rejects non-finite gradients naming the block") {
    AffineLayer layer(1, 1);
    layer.grad_weight << std::numeric_limits<double>::quiet_NaN();
    AdamState state(layer);
    try {
        adam_step(layer, state, 0.1, "vae/enc_mu");
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("vae/enc_mu") != std::string::npos);
    }
}

TEST_CASE("rng determinism and stream separation") {
    SeededRng a(42, "reparam");
    SeededRng b(42, "reparam");
    const Vector va = a.standard_normal(32);
    const Vector vb = b.standard_normal(32);
    CHECK(va == vb);

    SeededRng c(42, "shuffle");
    CHECK(c.standard_normal(32) != va);

    SeededRng d(43, "reparam");
    CHECK(d.standard_normal(32) != va);
}

TEST_CASE("rng standard normal moments") {
    SeededRng rng(1, "synth");
    const Index n = 100000;
    const Vector draws = rng.standard_normal(n);
    const double mean = draws.mean();
    const double var = (draws.array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("rng shuffle is a deterministic permutation") {
    std::vector<int> v(20);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> w = v;
    SeededRng a(9, "shuffle");
    SeededRng b(9, "shuffle");
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 20; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("rng bounded stays in range and covers values") {
    SeededRng rng(2, "poison");
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const auto v = rng.bounded(5);
        REQUIRE(v < 5);
        counts[static_cast<std::size_t>(v)]++;
    }
    for (const int c : counts) CHECK(c > 800);
}
