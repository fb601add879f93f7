#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vesseg/tensor.hpp"

namespace vesseg::ag {

// Reverse-mode autodiff over a dynamically built DAG. Every forward op
// records a node whose backprop closure pushes adjoints into its parents.
// Evaluation is deterministic: kernels only parallelize over disjoint
// output slices, so results do not depend on thread count.
struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Tensor& grad_buf() {
        if (!grad_alloc) {
            grad = Tensor::zeros(value.shape);
            grad_alloc = true;
        }
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node(std::move(n)) {}

    bool defined() const { return node != nullptr; }
    const Tensor& val() const { return node->value; }
    const Tensor& grad() const { return node->grad; }
    bool has_grad() const { return node->grad_alloc; }

    NodePtr node;
};

// Wrap a tensor as a graph leaf. Whether it acts as a trainable parameter or
// a constant is decided by who reads its gradient afterwards.
Var leaf(Tensor t);

// Cut the graph: same value, no parents.
Var detach(const Var& x);

// Run reverse-mode accumulation from a scalar root.
void backward(const Var& root);

// ---- elementwise / structural ----
Var add(const Var& a, const Var& b);
Var axpy(const Var& a, double alpha, const Var& b);  // a + alpha * b
Var scale(const Var& a, double s);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var reshape(const Var& x, std::vector<index_t> shape);

// ---- convolution / pooling / resampling (NCHW) ----
// stride-1 convolution with odd kernel and same padding
Var conv2d(const Var& x, const Var& w, const Var& b);
// kernel-2 stride-2 transposed convolution (exact spatial doubling); w is (Ci, Co, 2, 2)
Var conv_transpose2d(const Var& x, const Var& w, const Var& b);
Var maxpool2d(const Var& x, int kernel, int stride);
// bilinear resampling, half-pixel centers (align_corners=false)
Var bilinear_resize(const Var& x, index_t out_h, index_t out_w);
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta,
                Tensor& running_mean, Tensor& running_var, bool training,
                double momentum = 0.1, double eps = 1e-5);

// ---- losses (scalar outputs, mean reductions) ----
Var mse_loss(const Var& pred, const Var& target);
Var weighted_bce_loss(const Var& pred, const Var& target, double pos_weight,
                      double clamp_eps = 1e-7);

struct CosineLoss {
    Var loss;
    int degenerate_count = 0;  // samples where a zero-norm latent forced loss 1
};
// mean over batch of (1 - cos) between rows of (N, D) latents
CosineLoss cosine_prior_loss(const Var& z_gt, const Var& z_pred);

}  // namespace vesseg::ag
