#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vesseg/autograd.hpp"
#include "vesseg/config.hpp"
#include "vesseg/params.hpp"

namespace vesseg {

// Architecture hyperparameters shared by the U-Net segmenter and both
// auto-encoders. depth is the number of resolution levels (l_max); level l
// runs at input/2^(l-1) with base_channels*2^(l-1) feature maps.
struct ModelConfig {
    index_t depth = 4;
    index_t base_channels = 16;
    index_t overcomplete_factor = 2;  // n
    index_t residual_units = 2;       // J
    index_t input_channels = 1;
    index_t input_h = 64;
    index_t input_w = 64;

    index_t channels_at(index_t level) const { return base_channels << (level - 1); }
    index_t spatial_h_at(index_t level) const { return input_h >> (level - 1); }
    index_t spatial_w_at(index_t level) const { return input_w >> (level - 1); }
    index_t bottleneck_channels() const { return channels_at(depth); }
    // flattened bottleneck size; flattening is channel-major, then rows, then columns
    index_t latent_length() const {
        return bottleneck_channels() * spatial_h_at(depth) * spatial_w_at(depth);
    }

    void validate() const;
    // auto-encoders additionally require 1-channel input and a strictly
    // undercomplete bottleneck
    void validate_autoencoder() const;

    static ModelConfig from_config(const KeyValueConfig& cfg);
    void to_config(KeyValueConfig& cfg) const;
    static const std::set<std::string>& config_keys();
    std::string describe() const;
};

// conv(k) + batchnorm + relu
struct ConvBnRelu {
    std::string prefix;
    index_t in_channels = 0;
    index_t out_channels = 0;
    int kernel = 3;

    static ConvBnRelu build(NetworkParams& params, Rng& rng, const std::string& prefix,
                            index_t in_channels, index_t out_channels, int kernel);
    ag::Var forward(ParamBank& bank, ag::Var x, bool training) const;
};

// Forward recursion of full pre-activation residual units:
//   R_j = R_{j-1} (+) sum_{i=0}^{j-1} F(R_i, w_i),   F = BN -> ReLU -> conv3x3
struct ResidualChain {
    std::string prefix;
    index_t channels = 0;
    index_t units = 0;  // J

    static ResidualChain build(NetworkParams& params, Rng& rng, const std::string& prefix,
                               index_t channels, index_t units);
    ag::Var forward(ParamBank& bank, ag::Var r0, bool training) const;
};

// Exchanges residual features between the undercomplete level l_max-1 and the
// first overcomplete layer, resampled bilinearly by 1/n and n.
struct CommunicationBlock {
    index_t factor = 2;  // n
    index_t channels = 0;
    ResidualChain from_over;   // R_0 = F_EO^1, added (downsampled) to F_EU^{l_max-1}
    ResidualChain from_under;  // R_0 = F_EU^{l_max-1}, added (upsampled) to F_EO^1

    static CommunicationBlock build(NetworkParams& params, Rng& rng, const std::string& prefix,
                                    index_t channels, index_t units, index_t factor);
    std::pair<ag::Var, ag::Var> forward(ParamBank& bank, ag::Var f_eu, ag::Var f_eo,
                                        bool training) const;
};

// Bottleneck fusion: max-pool the overcomplete top down to the bottleneck
// grid, concat, 1x1 pre-activation mix, residual chain, add-back, then a
// post-activation conv -> BN -> ReLU, flattened to the latent code.
struct FusionBlock {
    std::string prefix;
    index_t channels = 0;  // bottleneck channels
    ResidualChain chain;

    static FusionBlock build(NetworkParams& params, Rng& rng, const std::string& prefix,
                             index_t channels, index_t units);
    ag::Var forward(ParamBank& bank, ag::Var bottleneck, ag::Var over_top, bool training) const;
};

// ---------------------------------------------------------------------------

class UNet {
public:
    static UNet build(const ModelConfig& cfg, std::uint64_t seed);

    ag::Var forward(ParamBank& bank, ag::Var x, bool training) const;
    // convenience: evaluation-mode forward on a plain tensor
    Tensor predict(const Tensor& x);

    ModelConfig config;
    NetworkParams params;

private:
    struct Level {
        ConvBnRelu conv1, conv2;
    };
    std::vector<Level> enc_;
    std::vector<Level> dec_;
    std::vector<std::string> up_prefix_;
};

// Common surface of both shape-prior auto-encoders.
class AutoEncoder {
public:
    virtual ~AutoEncoder() = default;
    virtual ag::Var encode(ParamBank& bank, ag::Var y, bool training) const = 0;
    virtual ag::Var decode(ParamBank& bank, ag::Var z, bool training) const = 0;
    ag::Var reconstruct(ParamBank& bank, ag::Var y, bool training) const {
        return decode(bank, encode(bank, y, training), training);
    }
    virtual NetworkParams& params() = 0;
    virtual const NetworkParams& params() const = 0;
    virtual const ModelConfig& config() const = 0;
    virtual std::string kind() const = 0;

    Tensor encode_tensor(const Tensor& y);
    Tensor reconstruct_tensor(const Tensor& y);
};

// Standard undercomplete convolutional auto-encoder.
class Cae : public AutoEncoder {
public:
    static Cae build(const ModelConfig& cfg, std::uint64_t seed);

    ag::Var encode(ParamBank& bank, ag::Var y, bool training) const override;
    ag::Var decode(ParamBank& bank, ag::Var z, bool training) const override;
    NetworkParams& params() override { return params_; }
    const NetworkParams& params() const override { return params_; }
    const ModelConfig& config() const override { return config_; }
    std::string kind() const override { return "cae"; }

    ModelConfig config_;
    NetworkParams params_;
    std::vector<ConvBnRelu> enc_;
    std::vector<ConvBnRelu> dec_conv_;
    std::vector<std::string> dec_up_prefix_;
};

// Semi-overcomplete CAE: undercomplete trunk, two up-sampled overcomplete
// layers branching at level l_max-1, communication block between the branches
// and a fusion block at the bottleneck. The decoder is the undercomplete one.
class Socae : public AutoEncoder {
public:
    static Socae build(const ModelConfig& cfg, std::uint64_t seed);

    ag::Var encode(ParamBank& bank, ag::Var y, bool training) const override;
    ag::Var decode(ParamBank& bank, ag::Var z, bool training) const override;
    NetworkParams& params() override { return params_; }
    const NetworkParams& params() const override { return params_; }
    const ModelConfig& config() const override { return config_; }
    std::string kind() const override { return "socae"; }

    // spatial dims of the overcomplete layers (for structural checks)
    index_t over1_h() const { return config_.spatial_h_at(config_.depth - 1) * config_.overcomplete_factor; }
    index_t over1_w() const { return config_.spatial_w_at(config_.depth - 1) * config_.overcomplete_factor; }
    index_t over2_h() const { return over1_h() * config_.overcomplete_factor; }
    index_t over2_w() const { return over1_w() * config_.overcomplete_factor; }

    ModelConfig config_;
    NetworkParams params_;
    std::vector<ConvBnRelu> under_;
    ConvBnRelu over1_, over2_;
    CommunicationBlock cb_;
    FusionBlock fb_;
    std::vector<ConvBnRelu> dec_conv_;
    std::vector<std::string> dec_up_prefix_;
};

std::unique_ptr<AutoEncoder> build_autoencoder(const std::string& kind, const ModelConfig& cfg,
                                               std::uint64_t seed);

// Spec-level operation aliases.
UNet build_unet(const ModelConfig& cfg, std::uint64_t seed = 0);
Tensor unet_forward(UNet& net, const Tensor& x);
Tensor cae_encode(Cae& net, const Tensor& y);
Tensor cae_decode(Cae& net, const Tensor& z);
Tensor socae_encode(Socae& net, const Tensor& y);
Tensor socae_forward(Socae& net, const Tensor& y);

// Analytic receptive field (size and stride in input pixels) accumulated over
// a layer path; bilinear x n counts as kernel 2 with stride 1/n.
struct ReceptiveField {
    double size = 1.0;
    double jump = 1.0;
    void apply(double kernel, double stride) {
        size += (kernel - 1.0) * jump;
        jump *= stride;
    }
};
ReceptiveField receptive_field_under_bottleneck(const ModelConfig& cfg);
ReceptiveField receptive_field_over_top(const ModelConfig& cfg);

}  // namespace vesseg
