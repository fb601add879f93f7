#pragma once

#include <map>
#include <string>

#include "vesseg/architectures.hpp"
#include "vesseg/autograd.hpp"

namespace vesseg {

struct LossValue {
    double value = 0.0;
    std::map<std::string, double> components;
};

struct ClassWeights {
    double positive_weight = 1.0;
    void validate() const;
};

// mean squared error over all elements
LossValue reconstruction_loss(const Tensor& y, const Tensor& y_tilde);

// mean over batch of 1 - cos(z_gt_i, z_pred_i); zero-norm latents count as
// cosine 0 (loss 1) and are reported under components["degenerate"]
LossValue shape_prior_loss(const Tensor& z_gt, const Tensor& z_pred);

// mean of -[w y log p + (1-y) log(1-p)] with probabilities clamped at 1e-7
LossValue weighted_bce(const Tensor& y, const Tensor& y_hat, const ClassWeights& w);

// Differentiable total loss for one batch: l_phi(y, phi(x)) + lambda * l_s.
// The encoder runs in evaluation mode and its parameters never receive
// gradients; the shape term still backpropagates through it into phi(x).
struct TotalLoss {
    ag::Var total;
    LossValue breakdown;
};
TotalLoss total_loss(const Tensor& y, const Tensor& x, UNet& segmenter, ParamBank& seg_bank,
                     AutoEncoder* frozen_encoder, double lambda, const ClassWeights& w,
                     bool training);

constexpr double kBceClampEps = 1e-7;

}  // namespace vesseg
