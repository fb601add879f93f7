#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"
#include "vesseg/architectures.hpp"

using namespace vesseg;
using test_support::network_grad_check;
using test_support::random_tensor;

namespace {
constexpr double kGradTol = 1e-4;

ModelConfig small_cfg(index_t depth, index_t base, index_t size, index_t channels = 1) {
    ModelConfig c;
    c.depth = depth;
    c.base_channels = base;
    c.input_channels = channels;
    c.input_h = c.input_w = size;
    return c;
}

void set_zero(NetworkParams& params, const std::string& suffix_contains) {
    for (auto& [path, p] : params.items())
        if (path.find(suffix_contains) != std::string::npos)
            for (double& v : p.value.data) v = 0.0;
}
}  // namespace

// ---------------------------------------------------------------------------
// config validation
// ---------------------------------------------------------------------------

TEST_CASE("model config validation") {
    CHECK_NOTHROW(small_cfg(4, 16, 64).validate());
    CHECK_THROWS_AS(small_cfg(3, 16, 33).validate(), ConfigError);  // 33 not divisible by 4
    CHECK_THROWS_AS(small_cfg(2, 16, 64).validate(), ConfigError);  // depth >= 3

    ModelConfig bad = small_cfg(4, 16, 64);
    bad.residual_units = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_cfg(4, 16, 64);
    bad.overcomplete_factor = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("model config round-trips through key=value text") {
    ModelConfig c = small_cfg(5, 8, 512, 3);
    c.residual_units = 1;
    c.overcomplete_factor = 3;
    KeyValueConfig kv;
    c.to_config(kv);
    kv.require_known_keys(ModelConfig::config_keys());
    ModelConfig back = ModelConfig::from_config(kv);
    CHECK(back.depth == 5);
    CHECK(back.base_channels == 8);
    CHECK(back.overcomplete_factor == 3);
    CHECK(back.residual_units == 1);
    CHECK(back.input_channels == 3);
    CHECK(back.input_h == 512);
    CHECK(back.input_w == 512);
}

// ---------------------------------------------------------------------------
// U-Net
// ---------------------------------------------------------------------------

TEST_CASE("unet downsampling recurrence") {
    // depth 4 at 64x64: deepest grid is 64 / 2^3 = 8
    ModelConfig c = small_cfg(4, 16, 64);
    CHECK(c.spatial_h_at(4) == 8);
    UNet net = UNet::build(c, 1);
    CHECK(net.params.at("enc4.block1.conv.w").value.shape ==
          std::vector<index_t>{128, 64, 3, 3});  // deepest level doubles channels per level

    // depth 5 at 512x512: deepest grid 32
    CHECK(small_cfg(5, 16, 512).spatial_h_at(5) == 32);

    CHECK_THROWS_AS(UNet::build(small_cfg(3, 16, 33), 1), ConfigError);
}

TEST_CASE("unet forward shapes and range") {
    ModelConfig c = small_cfg(3, 4, 16);
    UNet net = UNet::build(c, 2);
    Rng rng(3);
    Tensor x = random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
    const Tensor y = net.predict(x);
    CHECK(y.shape == std::vector<index_t>{2, 1, 16, 16});
    for (double v : y.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    // multi-channel config keeps a single-channel head
    ModelConfig c3 = small_cfg(3, 2, 32, 3);
    UNet net3 = UNet::build(c3, 4);
    const Tensor y3 = net3.predict(random_tensor({4, 3, 32, 32}, rng, 0.0, 1.0));
    CHECK(y3.shape == std::vector<index_t>{4, 1, 32, 32});

    CHECK_THROWS_AS(net.predict(Tensor::zeros({1, 1, 8, 16})), ShapeError);
    CHECK_THROWS_AS(net.predict(Tensor::zeros({1, 3, 16, 16})), ShapeError);
}

// ---------------------------------------------------------------------------
// CAE
// ---------------------------------------------------------------------------

TEST_CASE("cae undercompleteness enforced at build") {
    // 64 bottleneck channels at depth 4: latent 64*8*8 = 4096 equals the input size
    CHECK_THROWS_AS(Cae::build(small_cfg(4, 8, 64), 1), ConfigError);
    // 32 bottleneck channels: latent 2048 < 4096
    Cae net = Cae::build(small_cfg(4, 4, 64), 1);
    CHECK(net.config().latent_length() == 2048);
}

TEST_CASE("cae encode/decode shapes and determinism") {
    Cae net = Cae::build(small_cfg(4, 4, 64), 5);
    Rng rng(6);
    Tensor y({1, 1, 64, 64});
    for (double& v : y.data) v = rng.coin(0.1) ? 1.0 : 0.0;

    const Tensor z = cae_encode(net, y);
    CHECK(z.shape == std::vector<index_t>{1, 2048});
    CHECK(static_cast<index_t>(z.data.size()) < y.numel());  // undercomplete

    const Tensor z2 = cae_encode(net, y);
    CHECK(z.data == z2.data);  // bit-for-bit determinism

    const Tensor rec = cae_decode(net, z);
    CHECK(rec.shape == std::vector<index_t>{1, 1, 64, 64});
    for (double v : rec.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    Tensor bad({1, 2047});
    CHECK_THROWS_AS(cae_decode(net, bad), ShapeError);
    CHECK_THROWS_AS(cae_encode(net, Tensor::zeros({1, 1, 48, 64})), ShapeError);
}

// ---------------------------------------------------------------------------
// residual chain
// ---------------------------------------------------------------------------

TEST_CASE("residual chain: zero weights collapse to identity for any J") {
    Rng rng(7);
    for (index_t J : {1, 2, 3, 5}) {
        NetworkParams params;
        Rng prng(11);
        ResidualChain chain = ResidualChain::build(params, prng, "chain", 3, J);
        set_zero(params, ".conv.");
        ParamBank bank(params);
        Tensor r0 = random_tensor({2, 3, 4, 4}, rng);
        const Tensor out = chain.forward(bank, ag::leaf(r0), true).val();
        CHECK(out.data == r0.data);  // exact identity
    }
}

TEST_CASE("residual chain: J=3 matches independent scalar recursion") {
    // constant input on a 1x1 grid; only the center tap of each 3x3 kernel acts
    const double a = 0.8;
    const double w[3] = {0.4, -0.7, 0.25};
    const double b[3] = {0.1, 0.05, -0.2};

    NetworkParams params;
    Rng prng(2);
    ResidualChain chain = ResidualChain::build(params, prng, "ch", 1, 3);
    for (int i = 0; i < 3; ++i) {
        const std::string up = "ch.unit" + std::to_string(i);
        Param& cw = params.at(up + ".conv.w");
        for (double& v : cw.value.data) v = 0.0;
        cw.value.data[4] = w[i];  // center of the 3x3 kernel
        params.at(up + ".conv.b").value.data[0] = b[i];
    }

    // evaluation mode: BN with fresh running stats is x / sqrt(1 + eps)
    const double s = 1.0 / std::sqrt(1.0 + 1e-5);
    auto F = [&](double v, int i) { return w[i] * std::max(0.0, v * s) + b[i]; };
    const double r0 = a;
    const double f0 = F(r0, 0);
    const double r1 = r0 + f0;
    const double f1 = F(r1, 1);
    const double r2 = r1 + (f0 + f1);
    const double f2 = F(r2, 2);
    const double r3 = r2 + (f0 + f1 + f2);

    ParamBank bank(params);
    const Tensor out = chain.forward(bank, ag::leaf(Tensor::full({1, 1, 1, 1}, a)), false).val();
    CHECK(out.data[0] == doctest::Approx(r3).epsilon(1e-12));

    // J=1 is a single unit plus skip
    NetworkParams p1;
    Rng prng1(2);
    ResidualChain chain1 = ResidualChain::build(p1, prng1, "ch", 1, 1);
    Param& cw = p1.at("ch.unit0.conv.w");
    for (double& v : cw.value.data) v = 0.0;
    cw.value.data[4] = w[0];
    p1.at("ch.unit0.conv.b").value.data[0] = b[0];
    ParamBank bank1(p1);
    const Tensor out1 = chain1.forward(bank1, ag::leaf(Tensor::full({1, 1, 1, 1}, a)), false).val();
    CHECK(out1.data[0] == doctest::Approx(r0 + F(r0, 0)).epsilon(1e-12));
}

TEST_CASE("residual chain rejects channel mismatch") {
    NetworkParams params;
    Rng prng(3);
    ResidualChain chain = ResidualChain::build(params, prng, "ch", 4, 2);
    ParamBank bank(params);
    CHECK_THROWS_AS(chain.forward(bank, ag::leaf(Tensor::zeros({1, 3, 4, 4})), true), ShapeError);
}

// ---------------------------------------------------------------------------
// communication block
// ---------------------------------------------------------------------------

TEST_CASE("communication block: zero residuals exchange constants") {
    NetworkParams params;
    Rng prng(4);
    CommunicationBlock cb = CommunicationBlock::build(params, prng, "cb", 2, 2, 2);
    set_zero(params, ".conv.");
    ParamBank bank(params);

    const double a = 0.3, b = -1.25;
    auto [u_hat, o_hat] = cb.forward(bank, ag::leaf(Tensor::full({1, 2, 8, 8}, a)),
                                     ag::leaf(Tensor::full({1, 2, 16, 16}, b)), true);
    CHECK(u_hat.val().shape == std::vector<index_t>{1, 2, 8, 8});
    CHECK(o_hat.val().shape == std::vector<index_t>{1, 2, 16, 16});
    for (double v : u_hat.val().data) CHECK(v == doctest::Approx(a + b).epsilon(1e-12));
    for (double v : o_hat.val().data) CHECK(v == doctest::Approx(b + a).epsilon(1e-12));
}

TEST_CASE("communication block shape errors") {
    NetworkParams params;
    Rng prng(5);
    CommunicationBlock cb = CommunicationBlock::build(params, prng, "cb", 2, 2, 2);
    ParamBank bank(params);
    // 24x24 is not 2 x 8x8
    CHECK_THROWS_AS(cb.forward(bank, ag::leaf(Tensor::zeros({1, 2, 8, 8})),
                               ag::leaf(Tensor::zeros({1, 2, 24, 24})), true),
                    ShapeError);
    CHECK_THROWS_AS(cb.forward(bank, ag::leaf(Tensor::zeros({1, 3, 8, 8})),
                               ag::leaf(Tensor::zeros({1, 3, 16, 16})), true),
                    ShapeError);
}

// ---------------------------------------------------------------------------
// fusion block
// ---------------------------------------------------------------------------

TEST_CASE("fusion block shape trace and pooling") {
    NetworkParams params;
    Rng prng(6);
    FusionBlock fb = FusionBlock::build(params, prng, "fb", 32, 2);
    ParamBank bank(params);
    Rng rng(7);

    Tensor bottom = random_tensor({1, 32, 4, 4}, rng);
    Tensor top = random_tensor({1, 32, 32, 32}, rng);
    const Tensor z = fb.forward(bank, ag::leaf(bottom), ag::leaf(top), true).val();
    CHECK(z.shape == std::vector<index_t>{1, 512});  // 32 * 4 * 4

    // max-pooling a constant map yields the same constant
    const Tensor pooled = ag::maxpool2d(ag::leaf(Tensor::full({1, 1, 32, 32}, 0.6)), 2, 8).val();
    CHECK(pooled.shape == std::vector<index_t>{1, 1, 4, 4});
    for (double v : pooled.data) CHECK(v == 0.6);

    // 30x30 over 4x4 is not an integer reduction
    CHECK_THROWS_AS(fb.forward(bank, ag::leaf(Tensor::zeros({1, 32, 4, 4})),
                               ag::leaf(Tensor::zeros({1, 32, 30, 30})), true),
                    ShapeError);
}

// ---------------------------------------------------------------------------
// S-OCAE
// ---------------------------------------------------------------------------

TEST_CASE("socae branch dimensions and latent") {
    // 64x64 input, depth 4, n=2: trunk 64 -> 32 -> 16 -> 8, EO1 32x32, EO2 64x64
    ModelConfig c = small_cfg(4, 4, 64);
    Socae net = Socae::build(c, 8);
    CHECK(c.spatial_h_at(3) == 16);
    CHECK(net.over1_h() == 32);
    CHECK(net.over2_h() == 64);

    // overcompleteness: branch dims strictly exceed the levels they extend
    CHECK(net.over1_h() > c.spatial_h_at(3));
    CHECK(net.over2_h() > c.spatial_h_at(4));

    Rng rng(9);
    Tensor y({1, 1, 64, 64});
    for (double& v : y.data) v = rng.coin(0.08) ? 1.0 : 0.0;
    const Tensor z = socae_encode(net, y);
    CHECK(z.shape == std::vector<index_t>{1, c.latent_length()});
    CHECK(c.latent_length() < 64 * 64);

    const Tensor z2 = socae_encode(net, y);
    CHECK(z.data == z2.data);

    CHECK_THROWS_AS(socae_encode(net, Tensor::zeros({1, 1, 48, 48})), ShapeError);
}

TEST_CASE("socae forward round trip") {
    ModelConfig c = small_cfg(3, 2, 32);
    Socae net = Socae::build(c, 10);

    const Tensor rec = socae_forward(net, Tensor::zeros({1, 1, 32, 32}));
    CHECK(rec.shape == std::vector<index_t>{1, 1, 32, 32});
    for (double v : rec.data) {
        CHECK(std::isfinite(v));
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("socae batch equivariance in evaluation mode") {
    ModelConfig c = small_cfg(3, 2, 16);
    Socae net = Socae::build(c, 11);
    Rng rng(12);
    Tensor batch = random_tensor({4, 1, 16, 16}, rng, 0.0, 1.0);

    const Tensor all = net.reconstruct_tensor(batch);
    for (index_t i = 0; i < 4; ++i) {
        Tensor single({1, 1, 16, 16});
        std::copy_n(batch.data.begin() + i * 256, 256, single.data.begin());
        const Tensor one = net.reconstruct_tensor(single);
        for (index_t j = 0; j < 256; ++j)
            CHECK(std::abs(one.data[j] - all.data[i * 256 + j]) <= 1e-6);
    }
}

TEST_CASE("receptive field of the overcomplete top is strictly smaller") {
    for (index_t depth : {3, 4, 5}) {
        for (index_t J : {1, 2, 3}) {
            for (index_t n : {2, 3}) {
                ModelConfig c = small_cfg(depth, 2, 64);
                c.residual_units = J;
                c.overcomplete_factor = n;
                const double under = receptive_field_under_bottleneck(c).size;
                const double over = receptive_field_over_top(c).size;
                CAPTURE(depth);
                CAPTURE(J);
                CAPTURE(n);
                CHECK(over < under);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// gradient checks per block (<= 8x8 inputs)
// ---------------------------------------------------------------------------

TEST_CASE("gradients: residual chain") {
    NetworkParams params;
    Rng prng(13);
    ResidualChain chain = ResidualChain::build(params, prng, "ch", 2, 2);
    Rng rng(14);
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    auto res = network_grad_check(params, &x, [&](ParamBank& bank, const ag::Var& xv) {
        return ag::mse_loss(chain.forward(bank, xv, true), ag::leaf(Tensor::zeros({2, 2, 4, 4})));
    });
    CAPTURE(res.worst_path);
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: communication block") {
    NetworkParams params;
    Rng prng(15);
    CommunicationBlock cb = CommunicationBlock::build(params, prng, "cb", 2, 2, 2);
    Rng rng(16);
    Tensor u = random_tensor({1, 2, 4, 4}, rng);
    Tensor o = random_tensor({1, 2, 8, 8}, rng);
    auto res = network_grad_check(params, &u, [&](ParamBank& bank, const ag::Var& uv) {
        auto [uh, oh] = cb.forward(bank, uv, ag::leaf(o), true);
        ag::Var flat_u = ag::reshape(uh, {1, 32});
        ag::Var flat_o = ag::reshape(oh, {1, 128});
        return ag::add(ag::mse_loss(flat_u, ag::leaf(Tensor::zeros({1, 32}))),
                       ag::mse_loss(flat_o, ag::leaf(Tensor::zeros({1, 128}))));
    });
    CAPTURE(res.worst_path);
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: fusion block") {
    NetworkParams params;
    Rng prng(17);
    FusionBlock fb = FusionBlock::build(params, prng, "fb", 2, 2);
    Rng rng(18);
    Tensor bottom = random_tensor({1, 2, 2, 2}, rng);
    Tensor top = random_tensor({1, 2, 8, 8}, rng);
    auto res = network_grad_check(params, &bottom, [&](ParamBank& bank, const ag::Var& bv) {
        return ag::mse_loss(fb.forward(bank, bv, ag::leaf(top), true), ag::leaf(Tensor::zeros({1, 8})));
    });
    CAPTURE(res.worst_path);
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: unet on 8x8") {
    UNet net = UNet::build(small_cfg(3, 2, 8), 19);
    Rng rng(20);
    Tensor x = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    Tensor target({1, 1, 8, 8});
    for (index_t i = 0; i < 64; ++i) target.data[i] = (i % 3) == 0 ? 1.0 : 0.0;
    auto res = network_grad_check(net.params, &x, [&](ParamBank& bank, const ag::Var& xv) {
        return ag::weighted_bce_loss(net.forward(bank, xv, true), ag::leaf(target), 2.0);
    });
    CAPTURE(res.worst_path);
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: cae encoder and decoder on 8x8") {
    Cae net = Cae::build(small_cfg(3, 2, 8), 21);
    Rng rng(22);
    Tensor y = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    auto res = network_grad_check(net.params(), &y, [&](ParamBank& bank, const ag::Var& yv) {
        return ag::mse_loss(net.reconstruct(bank, yv, true), yv);
    });
    CAPTURE(res.worst_path);
    CHECK(res.max_rel_err < kGradTol);
}

TEST_CASE("gradients: socae encoder on 8x8") {
    Socae net = Socae::build(small_cfg(3, 2, 8), 23);
    Rng rng(24);
    Tensor y = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
    auto res = network_grad_check(net.params(), &y, [&](ParamBank& bank, const ag::Var& yv) {
        ag::Var z = net.encode(bank, yv, true);
        return ag::mse_loss(z, ag::leaf(Tensor::zeros(z.val().shape)));
    });
    CAPTURE(res.worst_path);
    CHECK(res.max_rel_err < kGradTol);
}
