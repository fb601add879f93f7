#include "vesseg/losses.hpp"

#include <cmath>

namespace vesseg {

void ClassWeights::validate() const {
    if (!(positive_weight > 0.0) || !std::isfinite(positive_weight))
        throw ValidationError("positive_weight must be finite and > 0, got " +
                              std::to_string(positive_weight));
}

LossValue reconstruction_loss(const Tensor& y, const Tensor& y_tilde) {
    require_same_shape(y, y_tilde, "reconstruction_loss");
    ag::Var l = ag::mse_loss(ag::leaf(y_tilde), ag::leaf(y));
    LossValue out;
    out.value = l.val().item();
    out.components["mse"] = out.value;
    return out;
}

LossValue shape_prior_loss(const Tensor& z_gt, const Tensor& z_pred) {
    ag::CosineLoss l = ag::cosine_prior_loss(ag::leaf(z_gt), ag::leaf(z_pred));
    LossValue out;
    out.value = l.loss.val().item();
    out.components["shape"] = out.value;
    out.components["degenerate"] = static_cast<double>(l.degenerate_count);
    return out;
}

LossValue weighted_bce(const Tensor& y, const Tensor& y_hat, const ClassWeights& w) {
    require_same_shape(y, y_hat, "weighted_bce");
    w.validate();
    for (double v : y.data)
        if (v != 0.0 && v != 1.0)
            throw ValidationError("weighted_bce expects a binary target, found value " + std::to_string(v));
    ag::Var l = ag::weighted_bce_loss(ag::leaf(y_hat), ag::leaf(y), w.positive_weight, kBceClampEps);
    LossValue out;
    out.value = l.val().item();
    out.components["bce"] = out.value;
    return out;
}

TotalLoss total_loss(const Tensor& y, const Tensor& x, UNet& segmenter, ParamBank& seg_bank,
                     AutoEncoder* frozen_encoder, double lambda, const ClassWeights& w,
                     bool training) {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
    w.validate();

    ag::Var y_hat = segmenter.forward(seg_bank, ag::leaf(x), training);
    ag::Var seg = ag::weighted_bce_loss(y_hat, ag::leaf(y), w.positive_weight, kBceClampEps);

    TotalLoss out;
    out.breakdown.components["seg"] = seg.val().item();

    if (lambda > 0.0) {
        if (frozen_encoder == nullptr)
            throw ConfigError("total_loss with lambda > 0 requires a frozen encoder");
        // the prior is pretrained: evaluation mode, parameters never updated
        ParamBank enc_bank(frozen_encoder->params());
        ag::Var z_gt = ag::detach(frozen_encoder->encode(enc_bank, ag::leaf(y), false));
        ag::Var z_pred = frozen_encoder->encode(enc_bank, y_hat, false);
        ag::CosineLoss shape = ag::cosine_prior_loss(z_gt, z_pred);
        out.breakdown.components["shape"] = shape.loss.val().item();
        out.breakdown.components["degenerate"] = static_cast<double>(shape.degenerate_count);
        out.total = ag::axpy(seg, lambda, shape.loss);
    } else {
        out.breakdown.components["shape"] = 0.0;
        out.total = seg;
    }
    out.breakdown.value = out.total.val().item();
    return out;
}

}  // namespace vesseg
