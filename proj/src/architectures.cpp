#include "vesseg/architectures.hpp"

#include <algorithm>
#include <sstream>

namespace vesseg {

namespace {

void register_bn(NetworkParams& params, const std::string& prefix, index_t channels) {
    params.add(prefix + ".gamma", Tensor::full({channels}, 1.0));
    params.add(prefix + ".beta", Tensor::zeros({channels}));
    params.add(prefix + ".running_mean", Tensor::zeros({channels}), /*trainable=*/false);
    params.add(prefix + ".running_var", Tensor::full({channels}, 1.0), /*trainable=*/false);
}

ag::Var bn_forward(ParamBank& bank, const std::string& prefix, ag::Var x, bool training) {
    return ag::batchnorm2d(x, bank.leaf(prefix + ".gamma"), bank.leaf(prefix + ".beta"),
                           bank.buffer(prefix + ".running_mean"), bank.buffer(prefix + ".running_var"),
                           training);
}

void register_conv(NetworkParams& params, Rng& rng, const std::string& prefix, index_t cin,
                   index_t cout, int kernel) {
    const index_t fan_in = cin * kernel * kernel;
    params.add(prefix + ".w", init_conv_weight(rng, {cout, cin, kernel, kernel}, fan_in));
    params.add(prefix + ".b", init_conv_weight(rng, {cout}, fan_in));
}

void register_upconv(NetworkParams& params, Rng& rng, const std::string& prefix, index_t cin,
                     index_t cout) {
    params.add(prefix + ".w", init_conv_weight(rng, {cin, cout, 2, 2}, cin));
    params.add(prefix + ".b", init_conv_weight(rng, {cout}, cin));
}

ag::Var conv_forward(ParamBank& bank, const std::string& prefix, ag::Var x) {
    return ag::conv2d(x, bank.leaf(prefix + ".w"), bank.leaf(prefix + ".b"));
}

void check_input(const ModelConfig& cfg, const Tensor& x, const char* what) {
    if (x.ndim() != 4) throw ShapeError(std::string(what) + ": expected NCHW input, got " + x.shape_str());
    if (x.dim(1) != cfg.input_channels)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(cfg.input_channels) +
                         " input channels, got " + std::to_string(x.dim(1)));
    if (x.dim(2) != cfg.input_h || x.dim(3) != cfg.input_w)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(cfg.input_h) + "x" +
                         std::to_string(cfg.input_w) + " input, got " + std::to_string(x.dim(2)) + "x" +
                         std::to_string(x.dim(3)));
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    if (depth < 3) throw ConfigError("depth must be >= 3, got " + std::to_string(depth));
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1, got " + std::to_string(base_channels));
    if (overcomplete_factor < 2)
        throw ConfigError("overcomplete_factor must be >= 2, got " + std::to_string(overcomplete_factor));
    if (residual_units < 1)
        throw ConfigError("residual_units must be >= 1, got " + std::to_string(residual_units));
    if (input_channels < 1)
        throw ConfigError("input_channels must be >= 1, got " + std::to_string(input_channels));
    const index_t div = index_t{1} << (depth - 1);
    if (input_h <= 0 || input_w <= 0 || input_h % div != 0 || input_w % div != 0)
        throw ConfigError("input_size " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                          " is not divisible by 2^(depth-1) = " + std::to_string(div));
}

void ModelConfig::validate_autoencoder() const {
    validate();
    if (input_channels != 1)
        throw ConfigError("input_channels must be 1 for auto-encoders (masks), got " +
                          std::to_string(input_channels));
    const index_t latent = latent_length();
    const index_t input = input_h * input_w;
    if (latent >= input)
        throw ConfigError("base_channels " + std::to_string(base_channels) +
                          " is not undercomplete: latent size " + std::to_string(latent) +
                          " >= input size " + std::to_string(input) +
                          " (reduce base_channels or increase depth)");
}

const std::set<std::string>& ModelConfig::config_keys() {
    static const std::set<std::string> keys = {"depth",          "base_channels", "overcomplete_factor",
                                               "residual_units", "input_channels", "input_size"};
    return keys;
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& cfg) {
    ModelConfig m;
    m.depth = cfg.get_int_or("depth", m.depth);
    m.base_channels = cfg.get_int_or("base_channels", m.base_channels);
    m.overcomplete_factor = cfg.get_int_or("overcomplete_factor", m.overcomplete_factor);
    m.residual_units = cfg.get_int_or("residual_units", m.residual_units);
    m.input_channels = cfg.get_int_or("input_channels", m.input_channels);
    if (cfg.has("input_size")) {
        const std::string& s = cfg.get("input_size");
        size_t x = s.find('x');
        try {
            if (x == std::string::npos) {
                m.input_h = m.input_w = std::stoll(s);
            } else {
                m.input_h = std::stoll(s.substr(0, x));
                m.input_w = std::stoll(s.substr(x + 1));
            }
        } catch (const std::exception&) {
            throw ConfigError("input_size must be H or HxW, got '" + s + "'");
        }
    }
    return m;
}

void ModelConfig::to_config(KeyValueConfig& cfg) const {
    cfg.set("depth", std::to_string(depth));
    cfg.set("base_channels", std::to_string(base_channels));
    cfg.set("overcomplete_factor", std::to_string(overcomplete_factor));
    cfg.set("residual_units", std::to_string(residual_units));
    cfg.set("input_channels", std::to_string(input_channels));
    cfg.set("input_size", std::to_string(input_h) + "x" + std::to_string(input_w));
}

std::string ModelConfig::describe() const {
    std::ostringstream os;
    os << "depth=" << depth << " base_channels=" << base_channels << " n=" << overcomplete_factor
       << " J=" << residual_units << " input=" << input_channels << "x" << input_h << "x" << input_w;
    return os.str();
}

// ---------------------------------------------------------------------------
// blocks
// ---------------------------------------------------------------------------

ConvBnRelu ConvBnRelu::build(NetworkParams& params, Rng& rng, const std::string& prefix,
                             index_t in_channels, index_t out_channels, int kernel) {
    ConvBnRelu b;
    b.prefix = prefix;
    b.in_channels = in_channels;
    b.out_channels = out_channels;
    b.kernel = kernel;
    register_conv(params, rng, prefix + ".conv", in_channels, out_channels, kernel);
    register_bn(params, prefix + ".bn", out_channels);
    return b;
}

ag::Var ConvBnRelu::forward(ParamBank& bank, ag::Var x, bool training) const {
    x = conv_forward(bank, prefix + ".conv", x);
    x = bn_forward(bank, prefix + ".bn", x, training);
    return ag::relu(x);
}

ResidualChain ResidualChain::build(NetworkParams& params, Rng& rng, const std::string& prefix,
                                   index_t channels, index_t units) {
    if (units < 1) throw ConfigError("residual chain needs J >= 1, got " + std::to_string(units));
    ResidualChain c;
    c.prefix = prefix;
    c.channels = channels;
    c.units = units;
    for (index_t i = 0; i < units; ++i) {
        const std::string up = prefix + ".unit" + std::to_string(i);
        register_bn(params, up + ".bn", channels);
        register_conv(params, rng, up + ".conv", channels, channels, 3);
    }
    return c;
}

ag::Var ResidualChain::forward(ParamBank& bank, ag::Var r0, bool training) const {
    if (r0.val().dim(1) != channels)
        throw ShapeError("residual chain built for " + std::to_string(channels) + " channels, input has " +
                         std::to_string(r0.val().dim(1)));
    std::vector<ag::Var> states{r0};
    std::vector<ag::Var> residuals;  // F(R_i, w_i), computed once each
    for (index_t j = 1; j <= units; ++j) {
        const std::string up = prefix + ".unit" + std::to_string(j - 1);
        ag::Var f = bn_forward(bank, up + ".bn", states.back(), training);
        f = ag::relu(f);
        f = conv_forward(bank, up + ".conv", f);
        residuals.push_back(f);
        ag::Var acc = residuals[0];
        for (index_t i = 1; i < j; ++i) acc = ag::add(acc, residuals[static_cast<size_t>(i)]);
        states.push_back(ag::add(states.back(), acc));
    }
    return states.back();
}

CommunicationBlock CommunicationBlock::build(NetworkParams& params, Rng& rng,
                                             const std::string& prefix, index_t channels,
                                             index_t units, index_t factor) {
    CommunicationBlock cb;
    cb.factor = factor;
    cb.channels = channels;
    cb.from_over = ResidualChain::build(params, rng, prefix + ".o2u", channels, units);
    cb.from_under = ResidualChain::build(params, rng, prefix + ".u2o", channels, units);
    return cb;
}

std::pair<ag::Var, ag::Var> CommunicationBlock::forward(ParamBank& bank, ag::Var f_eu, ag::Var f_eo,
                                                        bool training) const {
    const Tensor& u = f_eu.val();
    const Tensor& o = f_eo.val();
    if (u.dim(1) != channels || o.dim(1) != channels)
        throw ShapeError("communication block expects " + std::to_string(channels) +
                         " channels on both branches, got " + std::to_string(u.dim(1)) + " and " +
                         std::to_string(o.dim(1)));
    if (o.dim(2) != factor * u.dim(2) || o.dim(3) != factor * u.dim(3))
        throw ShapeError("communication block expects overcomplete dims = " + std::to_string(factor) +
                         " x undercomplete dims, got " + std::to_string(o.dim(2)) + "x" +
                         std::to_string(o.dim(3)) + " vs " + std::to_string(u.dim(2)) + "x" +
                         std::to_string(u.dim(3)));

    ag::Var down = ag::bilinear_resize(from_over.forward(bank, f_eo, training), u.dim(2), u.dim(3));
    ag::Var up = ag::bilinear_resize(from_under.forward(bank, f_eu, training), o.dim(2), o.dim(3));
    return {ag::add(f_eu, down), ag::add(f_eo, up)};
}

FusionBlock FusionBlock::build(NetworkParams& params, Rng& rng, const std::string& prefix,
                               index_t channels, index_t units) {
    FusionBlock fb;
    fb.prefix = prefix;
    fb.channels = channels;
    register_bn(params, prefix + ".pre.bn", 2 * channels);
    register_conv(params, rng, prefix + ".pre.conv", 2 * channels, channels, 1);
    fb.chain = ResidualChain::build(params, rng, prefix + ".res", channels, units);
    register_conv(params, rng, prefix + ".post.conv", channels, channels, 3);
    register_bn(params, prefix + ".post.bn", channels);
    return fb;
}

ag::Var FusionBlock::forward(ParamBank& bank, ag::Var bottleneck, ag::Var over_top,
                             bool training) const {
    const Tensor& b = bottleneck.val();
    const Tensor& o = over_top.val();
    if (b.dim(1) != channels || o.dim(1) != channels)
        throw ShapeError("fusion block expects " + std::to_string(channels) +
                         " channels on both inputs, got " + std::to_string(b.dim(1)) + " and " +
                         std::to_string(o.dim(1)));
    if (o.dim(2) % b.dim(2) != 0 || o.dim(3) % b.dim(3) != 0)
        throw ShapeError("fusion block needs an integer reduction ratio, got " + std::to_string(o.dim(2)) +
                         "x" + std::to_string(o.dim(3)) + " over " + std::to_string(b.dim(2)) + "x" +
                         std::to_string(b.dim(3)));
    const index_t rh = o.dim(2) / b.dim(2);
    const index_t rw = o.dim(3) / b.dim(3);
    if (rh != rw || rh < 2)
        throw ShapeError("fusion block reduction ratio must be uniform and >= 2, got " + std::to_string(rh) +
                         "x" + std::to_string(rw));

    // kernel-2 pooling at stride = ratio lands exactly on the bottleneck grid
    ag::Var pooled = ag::maxpool2d(over_top, 2, static_cast<int>(rh));
    if (pooled.val().dim(2) != b.dim(2) || pooled.val().dim(3) != b.dim(3))
        throw ShapeError("fusion block pooling produced " + pooled.val().shape_str() + ", expected " +
                         b.shape_str());

    ag::Var z = ag::concat_channels(bottleneck, pooled);
    z = bn_forward(bank, prefix + ".pre.bn", z, training);
    z = ag::relu(z);
    z = conv_forward(bank, prefix + ".pre.conv", z);
    z = chain.forward(bank, z, training);
    z = ag::add(z, pooled);
    z = conv_forward(bank, prefix + ".post.conv", z);
    z = bn_forward(bank, prefix + ".post.bn", z, training);
    z = ag::relu(z);
    return ag::reshape(z, {b.dim(0), channels * b.dim(2) * b.dim(3)});
}

// ---------------------------------------------------------------------------
// U-Net
// ---------------------------------------------------------------------------

UNet UNet::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    UNet net;
    net.config = cfg;
    Rng rng(seed ^ 0x756e6574ull);  // distinct stream per network kind
    for (index_t l = 1; l <= cfg.depth; ++l) {
        const index_t cin = (l == 1) ? cfg.input_channels : cfg.channels_at(l - 1);
        const index_t cout = cfg.channels_at(l);
        const std::string p = "enc" + std::to_string(l);
        net.enc_.push_back({ConvBnRelu::build(net.params, rng, p + ".block1", cin, cout, 3),
                            ConvBnRelu::build(net.params, rng, p + ".block2", cout, cout, 3)});
    }
    for (index_t l = cfg.depth - 1; l >= 1; --l) {
        const index_t cout = cfg.channels_at(l);
        const std::string p = "dec" + std::to_string(l);
        register_upconv(net.params, rng, p + ".up", cfg.channels_at(l + 1), cout);
        net.up_prefix_.push_back(p + ".up");
        net.dec_.push_back({ConvBnRelu::build(net.params, rng, p + ".block1", 2 * cout, cout, 3),
                            ConvBnRelu::build(net.params, rng, p + ".block2", cout, cout, 3)});
    }
    register_conv(net.params, rng, "head.conv", cfg.channels_at(1), 1, 1);
    return net;
}

ag::Var UNet::forward(ParamBank& bank, ag::Var x, bool training) const {
    check_input(config, x.val(), "unet forward");
    std::vector<ag::Var> skips;
    ag::Var h = x;
    for (index_t l = 1; l <= config.depth; ++l) {
        h = enc_[static_cast<size_t>(l - 1)].conv1.forward(bank, h, training);
        h = enc_[static_cast<size_t>(l - 1)].conv2.forward(bank, h, training);
        if (l < config.depth) {
            skips.push_back(h);
            h = ag::maxpool2d(h, 2, 2);
        }
    }
    for (size_t i = 0; i < dec_.size(); ++i) {
        const index_t level = config.depth - 1 - static_cast<index_t>(i);
        h = ag::conv_transpose2d(h, bank.leaf(up_prefix_[i] + ".w"), bank.leaf(up_prefix_[i] + ".b"));
        h = ag::concat_channels(skips[static_cast<size_t>(level - 1)], h);
        h = dec_[i].conv1.forward(bank, h, training);
        h = dec_[i].conv2.forward(bank, h, training);
    }
    h = conv_forward(bank, "head.conv", h);
    return ag::sigmoid(h);
}

Tensor UNet::predict(const Tensor& x) {
    ParamBank bank(params);
    return forward(bank, ag::leaf(x), /*training=*/false).val();
}

// ---------------------------------------------------------------------------
// auto-encoders
// ---------------------------------------------------------------------------

Tensor AutoEncoder::encode_tensor(const Tensor& y) {
    ParamBank bank(params());
    return encode(bank, ag::leaf(y), /*training=*/false).val();
}

Tensor AutoEncoder::reconstruct_tensor(const Tensor& y) {
    ParamBank bank(params());
    return reconstruct(bank, ag::leaf(y), /*training=*/false).val();
}

namespace {

// shared decoder: transposed conv + BN + ReLU, conv block, then 1x1 + sigmoid
void build_decoder(NetworkParams& params, Rng& rng, const ModelConfig& cfg,
                   std::vector<std::string>& up_prefix, std::vector<ConvBnRelu>& conv) {
    for (index_t l = cfg.depth - 1; l >= 1; --l) {
        const std::string p = "dec" + std::to_string(l);
        register_upconv(params, rng, p + ".up", cfg.channels_at(l + 1), cfg.channels_at(l));
        register_bn(params, p + ".upbn", cfg.channels_at(l));
        up_prefix.push_back(p + ".up");
        conv.push_back(ConvBnRelu::build(params, rng, p + ".block", cfg.channels_at(l), cfg.channels_at(l), 3));
    }
    register_conv(params, rng, "head.conv", cfg.channels_at(1), 1, 1);
}

ag::Var decoder_forward(ParamBank& bank, const ModelConfig& cfg,
                        const std::vector<std::string>& up_prefix,
                        const std::vector<ConvBnRelu>& conv, ag::Var z, bool training) {
    const Tensor& t = z.val();
    if (t.ndim() != 2 || t.dim(1) != cfg.latent_length())
        throw ShapeError("latent size mismatch: expected (N," + std::to_string(cfg.latent_length()) +
                         "), got " + t.shape_str());
    ag::Var h = ag::reshape(z, {t.dim(0), cfg.bottleneck_channels(), cfg.spatial_h_at(cfg.depth),
                                cfg.spatial_w_at(cfg.depth)});
    for (size_t i = 0; i < up_prefix.size(); ++i) {
        const std::string up = up_prefix[i];
        const std::string bnp = up.substr(0, up.size() - 3) + ".upbn";  // decN.up -> decN.upbn
        h = ag::conv_transpose2d(h, bank.leaf(up + ".w"), bank.leaf(up + ".b"));
        h = bn_forward(bank, bnp, h, training);
        h = ag::relu(h);
        h = conv[i].forward(bank, h, training);
    }
    h = conv_forward(bank, "head.conv", h);
    return ag::sigmoid(h);
}

}  // namespace

Cae Cae::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate_autoencoder();
    Cae net;
    net.config_ = cfg;
    Rng rng(seed ^ 0x636165ull);
    for (index_t l = 1; l <= cfg.depth; ++l) {
        const index_t cin = (l == 1) ? 1 : cfg.channels_at(l - 1);
        net.enc_.push_back(
            ConvBnRelu::build(net.params_, rng, "enc" + std::to_string(l), cin, cfg.channels_at(l), 3));
    }
    build_decoder(net.params_, rng, cfg, net.dec_up_prefix_, net.dec_conv_);
    return net;
}

ag::Var Cae::encode(ParamBank& bank, ag::Var y, bool training) const {
    check_input(config_, y.val(), "cae encode");
    ag::Var h = y;
    for (index_t l = 1; l <= config_.depth; ++l) {
        h = enc_[static_cast<size_t>(l - 1)].forward(bank, h, training);
        if (l < config_.depth) h = ag::maxpool2d(h, 2, 2);
    }
    return ag::reshape(h, {h.val().dim(0), config_.latent_length()});
}

ag::Var Cae::decode(ParamBank& bank, ag::Var z, bool training) const {
    return decoder_forward(bank, config_, dec_up_prefix_, dec_conv_, z, training);
}

Socae Socae::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate_autoencoder();
    Socae net;
    net.config_ = cfg;
    Rng rng(seed ^ 0x736f636165ull);
    const index_t d = cfg.depth;
    for (index_t l = 1; l <= d; ++l) {
        const index_t cin = (l == 1) ? 1 : cfg.channels_at(l - 1);
        net.under_.push_back(
            ConvBnRelu::build(net.params_, rng, "eu" + std::to_string(l), cin, cfg.channels_at(l), 3));
    }
    net.over1_ = ConvBnRelu::build(net.params_, rng, "eo1", cfg.channels_at(d - 1), cfg.channels_at(d - 1), 3);
    net.over2_ = ConvBnRelu::build(net.params_, rng, "eo2", cfg.channels_at(d - 1), cfg.channels_at(d), 3);
    net.cb_ = CommunicationBlock::build(net.params_, rng, "cb", cfg.channels_at(d - 1),
                                        cfg.residual_units, cfg.overcomplete_factor);
    // pooled overcomplete channels must match the bottleneck for the fusion add
    if (net.over2_.out_channels != cfg.bottleneck_channels())
        throw ConfigError("fusion block channel plan violated: overcomplete top has " +
                          std::to_string(net.over2_.out_channels) + " channels, bottleneck has " +
                          std::to_string(cfg.bottleneck_channels()));
    net.fb_ = FusionBlock::build(net.params_, rng, "fb", cfg.bottleneck_channels(), cfg.residual_units);
    build_decoder(net.params_, rng, cfg, net.dec_up_prefix_, net.dec_conv_);
    return net;
}

ag::Var Socae::encode(ParamBank& bank, ag::Var y, bool training) const {
    check_input(config_, y.val(), "socae encode");
    const index_t d = config_.depth;
    const index_t n = config_.overcomplete_factor;

    ag::Var h = y;
    for (index_t l = 1; l <= d - 1; ++l) {
        h = under_[static_cast<size_t>(l - 1)].forward(bank, h, training);
        if (l < d - 1) h = ag::maxpool2d(h, 2, 2);
    }
    ag::Var f_eu = h;  // F_EU^{l_max-1}

    ag::Var o = ag::bilinear_resize(f_eu, f_eu.val().dim(2) * n, f_eu.val().dim(3) * n);
    ag::Var f_eo1 = over1_.forward(bank, o, training);

    auto [u_hat, o_hat] = cb_.forward(bank, f_eu, f_eo1, training);

    ag::Var b = ag::maxpool2d(u_hat, 2, 2);
    b = under_[static_cast<size_t>(d - 1)].forward(bank, b, training);  // F_EU^{l_max}

    ag::Var o2 = ag::bilinear_resize(o_hat, o_hat.val().dim(2) * n, o_hat.val().dim(3) * n);
    o2 = over2_.forward(bank, o2, training);  // F_EO^2

    return fb_.forward(bank, b, o2, training);
}

ag::Var Socae::decode(ParamBank& bank, ag::Var z, bool training) const {
    return decoder_forward(bank, config_, dec_up_prefix_, dec_conv_, z, training);
}

std::unique_ptr<AutoEncoder> build_autoencoder(const std::string& kind, const ModelConfig& cfg,
                                               std::uint64_t seed) {
    if (kind == "cae") return std::make_unique<Cae>(Cae::build(cfg, seed));
    if (kind == "socae") return std::make_unique<Socae>(Socae::build(cfg, seed));
    throw ConfigError("unknown auto-encoder kind: '" + kind + "' (expected cae or socae)");
}

UNet build_unet(const ModelConfig& cfg, std::uint64_t seed) { return UNet::build(cfg, seed); }
Tensor unet_forward(UNet& net, const Tensor& x) { return net.predict(x); }
Tensor cae_encode(Cae& net, const Tensor& y) { return net.encode_tensor(y); }
Tensor cae_decode(Cae& net, const Tensor& z) {
    ParamBank bank(net.params());
    return net.decode(bank, ag::leaf(z), false).val();
}
Tensor socae_encode(Socae& net, const Tensor& y) { return net.encode_tensor(y); }
Tensor socae_forward(Socae& net, const Tensor& y) { return net.reconstruct_tensor(y); }

// ---------------------------------------------------------------------------
// receptive fields
// ---------------------------------------------------------------------------

namespace {
struct SocaeRf {
    ReceptiveField under_bottleneck;
    ReceptiveField over_top;
};

ReceptiveField rf_max(const ReceptiveField& a, const ReceptiveField& b) {
    // both paths live on the same grid, so jumps agree
    return {std::max(a.size, b.size), a.jump};
}

// Mirrors the encode() graph; the RF of a merge point is the max over paths.
SocaeRf socae_rf(const ModelConfig& cfg) {
    const double n = static_cast<double>(cfg.overcomplete_factor);
    const double J = static_cast<double>(cfg.residual_units);

    ReceptiveField u;  // trunk to F_EU^{l_max-1}
    for (index_t l = 1; l <= cfg.depth - 1; ++l) {
        u.apply(3, 1);
        if (l < cfg.depth - 1) u.apply(2, 2);
    }

    ReceptiveField o1 = u;
    o1.apply(2, 1.0 / n);  // bilinear up
    o1.apply(3, 1);

    // chain = J sequential pre-activation convs on the deepest path
    ReceptiveField chain_o1 = o1;
    for (index_t i = 0; i < cfg.residual_units; ++i) chain_o1.apply(3, 1);
    ReceptiveField down = chain_o1;
    down.apply(2, n);
    ReceptiveField u_hat = rf_max(u, down);

    ReceptiveField chain_u = u;
    for (index_t i = 0; i < cfg.residual_units; ++i) chain_u.apply(3, 1);
    ReceptiveField up = chain_u;
    up.apply(2, 1.0 / n);
    ReceptiveField o1_hat = rf_max(o1, up);

    SocaeRf out;
    out.under_bottleneck = u_hat;
    out.under_bottleneck.apply(2, 2);  // pool
    out.under_bottleneck.apply(3, 1);  // F_EU^{l_max}

    out.over_top = o1_hat;
    out.over_top.apply(2, 1.0 / n);
    out.over_top.apply(3, 1);  // F_EO^2
    (void)J;
    return out;
}
}  // namespace

ReceptiveField receptive_field_under_bottleneck(const ModelConfig& cfg) {
    return socae_rf(cfg).under_bottleneck;
}
ReceptiveField receptive_field_over_top(const ModelConfig& cfg) { return socae_rf(cfg).over_top; }

}  // namespace vesseg
