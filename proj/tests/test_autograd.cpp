#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"
#include "vesseg/autograd.hpp"

using namespace vesseg;
using test_support::grad_check;
using test_support::random_tensor;

namespace {
constexpr double kGradTol = 1e-4;
}

TEST_CASE("elementwise op values") {
    Tensor a({2, 2}, {1.0, -2.0, 0.5, 0.0});
    Tensor b({2, 2}, {3.0, 1.0, -1.0, 2.0});

    CHECK(ag::add(ag::leaf(a), ag::leaf(b)).val().data == std::vector<double>{4.0, -1.0, -0.5, 2.0});
    CHECK(ag::axpy(ag::leaf(a), 2.0, ag::leaf(b)).val().data == std::vector<double>{7.0, 0.0, -1.5, 4.0});
    CHECK(ag::relu(ag::leaf(a)).val().data == std::vector<double>{1.0, 0.0, 0.5, 0.0});

    const auto sig = ag::sigmoid(ag::leaf(a)).val();
    CHECK(sig.data[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    for (double v : sig.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("add mismatch throws") {
    Tensor a({2, 2});
    Tensor b({2, 3});
    CHECK_THROWS_AS(ag::add(ag::leaf(a), ag::leaf(b)), ShapeError);
}

TEST_CASE("conv2d identity kernel") {
    Rng rng(7);
    Tensor x = random_tensor({1, 1, 4, 4}, rng);
    Tensor w = Tensor::zeros({1, 1, 3, 3});
    w.data[4] = 1.0;  // center tap
    Tensor b = Tensor::zeros({1});
    const Tensor y = ag::conv2d(ag::leaf(x), ag::leaf(w), ag::leaf(b)).val();
    CHECK(y.data == x.data);
}

TEST_CASE("conv_transpose2d doubles spatial dims") {
    Rng rng(8);
    Tensor x = random_tensor({2, 3, 4, 5}, rng);
    Tensor w = random_tensor({3, 2, 2, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    const Tensor y = ag::conv_transpose2d(ag::leaf(x), ag::leaf(w), ag::leaf(b)).val();
    CHECK(y.shape == std::vector<index_t>{2, 2, 8, 10});
}

TEST_CASE("maxpool picks maxima") {
    Tensor x({1, 1, 2, 4}, {1, 5, 2, 0, 3, -1, 7, 2});
    const Tensor y = ag::maxpool2d(ag::leaf(x), 2, 2).val();
    CHECK(y.shape == std::vector<index_t>{1, 1, 1, 2});
    CHECK(y.data == std::vector<double>{5, 7});
}

TEST_CASE("bilinear resize preserves constants") {
    Tensor x = Tensor::full({1, 2, 6, 6}, 0.37);
    for (auto [oh, ow] : {std::pair<index_t, index_t>{12, 12}, {3, 3}, {9, 4}}) {
        const Tensor y = ag::bilinear_resize(ag::leaf(x), oh, ow).val();
        CHECK(y.shape == std::vector<index_t>{1, 2, oh, ow});
        for (double v : y.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm normalizes in training mode") {
    Rng rng(9);
    Tensor x = random_tensor({4, 3, 5, 5}, rng);
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0);
    const Tensor y =
        ag::batchnorm2d(ag::leaf(x), ag::leaf(gamma), ag::leaf(beta), rm, rv, true).val();
    for (index_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (index_t n = 0; n < 4; ++n)
            for (index_t i = 0; i < 25; ++i) mean += y.data[(n * 3 + c) * 25 + i];
        mean /= 100.0;
        for (index_t n = 0; n < 4; ++n)
            for (index_t i = 0; i < 25; ++i) {
                const double d = y.data[(n * 3 + c) * 25 + i] - mean;
                var += d * d;
            }
        var /= 100.0;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps in the denominator
        CHECK(rm.data[c] != 0.0);                          // running stats updated
    }
}

TEST_CASE("backward accumulates across shared nodes") {
    Tensor x({1}, {3.0});
    ag::Var v = ag::leaf(x);
    ag::Var y = ag::add(v, v);  // y = 2x
    ag::backward(y);
    CHECK(v.grad().data[0] == doctest::Approx(2.0));
}

TEST_CASE("detach stops gradients") {
    Tensor x({1}, {2.0});
    ag::Var v = ag::leaf(x);
    ag::Var d = ag::detach(ag::scale(v, 3.0));
    ag::Var loss = ag::mse_loss(d, ag::leaf(Tensor({1}, {0.0})));
    ag::backward(loss);
    CHECK_FALSE(v.has_grad());
}

// ---------------------------------------------------------------------------
// finite-difference checks, one per primitive
// ---------------------------------------------------------------------------

TEST_CASE("gradients: conv2d") {
    Rng rng(11);
    std::vector<Tensor> inputs = {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                                  random_tensor({3}, rng)};
    auto res = grad_check(inputs, [](const std::vector<ag::Var>& v) {
        return ag::mse_loss(ag::conv2d(v[0], v[1], v[2]), ag::leaf(Tensor::zeros({2, 3, 5, 5})));
    });
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: conv2d 1x1") {
    Rng rng(12);
    std::vector<Tensor> inputs = {random_tensor({1, 4, 4, 4}, rng), random_tensor({2, 4, 1, 1}, rng),
                                  random_tensor({2}, rng)};
    auto res = grad_check(inputs, [](const std::vector<ag::Var>& v) {
        return ag::mse_loss(ag::conv2d(v[0], v[1], v[2]), ag::leaf(Tensor::zeros({1, 2, 4, 4})));
    });
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: conv_transpose2d") {
    Rng rng(13);
    std::vector<Tensor> inputs = {random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, 2, 2}, rng),
                                  random_tensor({2}, rng)};
    auto res = grad_check(inputs, [](const std::vector<ag::Var>& v) {
        return ag::mse_loss(ag::conv_transpose2d(v[0], v[1], v[2]), ag::leaf(Tensor::zeros({2, 2, 6, 6})));
    });
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: maxpool2d") {
    Rng rng(14);
    std::vector<Tensor> inputs = {random_tensor({2, 2, 6, 6}, rng)};
    auto res = grad_check(inputs, [](const std::vector<ag::Var>& v) {
        return ag::mse_loss(ag::maxpool2d(v[0], 2, 2), ag::leaf(Tensor::zeros({2, 2, 3, 3})));
    });
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: fusion-style maxpool kernel 2 stride 4") {
    Rng rng(15);
    std::vector<Tensor> inputs = {random_tensor({1, 2, 8, 8}, rng)};
    auto res = grad_check(inputs, [](const std::vector<ag::Var>& v) {
        return ag::mse_loss(ag::maxpool2d(v[0], 2, 4), ag::leaf(Tensor::zeros({1, 2, 2, 2})));
    });
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: bilinear up and down") {
    Rng rng(16);
    std::vector<Tensor> up_in = {random_tensor({1, 2, 4, 4}, rng)};
    auto up = grad_check(up_in, [](const std::vector<ag::Var>& v) {
        return ag::mse_loss(ag::bilinear_resize(v[0], 8, 8), ag::leaf(Tensor::zeros({1, 2, 8, 8})));
    });
    CHECK(up.max_rel_err < kGradTol);

    std::vector<Tensor> down_in = {random_tensor({1, 2, 8, 8}, rng)};
    auto down = grad_check(down_in, [](const std::vector<ag::Var>& v) {
        return ag::mse_loss(ag::bilinear_resize(v[0], 4, 4), ag::leaf(Tensor::zeros({1, 2, 4, 4})));
    });
    CHECK(down.max_rel_err < kGradTol);
}

TEST_CASE("gradients: batchnorm training and eval") {
    Rng rng(17);
    for (bool training : {true, false}) {
        std::vector<Tensor> inputs = {random_tensor({3, 2, 4, 4}, rng), random_tensor({2}, rng, 0.5, 1.5),
                                      random_tensor({2}, rng)};
        Tensor rm = random_tensor({2}, rng, -0.2, 0.2);
        Tensor rv = random_tensor({2}, rng, 0.5, 1.5);
        auto res = grad_check(inputs, [&, training](const std::vector<ag::Var>& v) {
            Tensor rm_copy = rm,
                   rv_copy = rv;  // forward mutates running stats in training mode
            return ag::mse_loss(ag::batchnorm2d(v[0], v[1], v[2], rm_copy, rv_copy, training),
                                ag::leaf(Tensor::zeros({3, 2, 4, 4})));
        });
        CAPTURE(training);
        CHECK(res.max_rel_err < kGradTol);
    }
}

TEST_CASE("gradients: activations, concat, reshape") {
    Rng rng(18);
    std::vector<Tensor> inputs = {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)};
    auto res = grad_check(inputs, [](const std::vector<ag::Var>& v) {
        ag::Var a = ag::relu(v[0]);
        ag::Var b = ag::sigmoid(v[1]);
        ag::Var c = ag::concat_channels(a, b);
        ag::Var d = ag::reshape(c, {2, 5 * 9});
        return ag::mse_loss(d, ag::leaf(Tensor::zeros({2, 45})));
    });
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: losses") {
    Rng rng(19);

    std::vector<Tensor> mse_in = {random_tensor({2, 1, 3, 3}, rng), random_tensor({2, 1, 3, 3}, rng)};
    auto mse = grad_check(mse_in, [](const std::vector<ag::Var>& v) { return ag::mse_loss(v[0], v[1]); });
    CHECK(mse.max_rel_err < kGradTol);

    std::vector<Tensor> bce_in = {random_tensor({1, 1, 3, 3}, rng, 0.05, 0.95)};
    Tensor target({1, 1, 3, 3});
    for (index_t i = 0; i < 9; ++i) target.data[i] = i % 2;
    auto bce = grad_check(bce_in, [&](const std::vector<ag::Var>& v) {
        return ag::weighted_bce_loss(v[0], ag::leaf(target), 2.5);
    });
    CHECK(bce.max_rel_err < kGradTol);

    std::vector<Tensor> cos_in = {random_tensor({3, 8}, rng), random_tensor({3, 8}, rng)};
    auto cos = grad_check(cos_in, [](const std::vector<ag::Var>& v) {
        return ag::cosine_prior_loss(v[0], v[1]).loss;
    });
    CHECK(cos.max_rel_err < kGradTol);
}

TEST_CASE("forward determinism") {
    Rng rng(20);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    const Tensor y1 = ag::conv2d(ag::leaf(x), ag::leaf(w), ag::leaf(b)).val();
    const Tensor y2 = ag::conv2d(ag::leaf(x), ag::leaf(w), ag::leaf(b)).val();
    CHECK(y1.data == y2.data);
}
