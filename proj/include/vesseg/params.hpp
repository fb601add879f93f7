#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vesseg/autograd.hpp"
#include "vesseg/rng.hpp"
#include "vesseg/tensor.hpp"

namespace vesseg {

struct Param {
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    bool trainable = true;

    void ensure_state() {
        if (grad.numel() != value.numel()) {
            grad = Tensor::zeros(value.shape);
            adam_m = Tensor::zeros(value.shape);
            adam_v = Tensor::zeros(value.shape);
        }
    }
};

// Named, insertion-ordered parameter registry. Iteration order is the layer
// registration order, which fixes checkpoint layout and optimizer traversal.
class NetworkParams {
public:
    Param& add(const std::string& path, Tensor init, bool trainable = true) {
        if (index_.count(path)) throw ConfigError("duplicate parameter path: " + path);
        index_[path] = items_.size();
        items_.emplace_back(path, Param{});
        Param& p = items_.back().second;
        p.value = std::move(init);
        p.trainable = trainable;
        p.ensure_state();
        return p;
    }

    bool has(const std::string& path) const { return index_.count(path) != 0; }

    Param& at(const std::string& path) {
        auto it = index_.find(path);
        if (it == index_.end()) throw ConfigError("unknown parameter path: " + path);
        return items_[it->second].second;
    }
    const Param& at(const std::string& path) const {
        auto it = index_.find(path);
        if (it == index_.end()) throw ConfigError("unknown parameter path: " + path);
        return items_[it->second].second;
    }

    size_t size() const { return items_.size(); }
    std::vector<std::pair<std::string, Param>>& items() { return items_; }
    const std::vector<std::pair<std::string, Param>>& items() const { return items_; }

    void zero_grad() {
        for (auto& [path, p] : items_)
            for (double& g : p.grad.data) g = 0.0;
    }

    index_t trainable_count() const {
        index_t n = 0;
        for (const auto& [path, p] : items_)
            if (p.trainable) n += p.value.numel();
        return n;
    }

    // Round every value to its nearest float32; makes the on-disk f32
    // checkpoint representation exact.
    void quantize_f32() {
        for (auto& [path, p] : items_)
            for (double& v : p.value.data) v = static_cast<double>(static_cast<float>(v));
    }

    bool values_equal(const NetworkParams& o) const {
        if (items_.size() != o.items_.size()) return false;
        for (size_t i = 0; i < items_.size(); ++i) {
            if (items_[i].first != o.items_[i].first) return false;
            const Tensor& a = items_[i].second.value;
            const Tensor& b = o.items_[i].second.value;
            if (a.shape != b.shape || a.data != b.data) return false;
        }
        return true;
    }

private:
    std::vector<std::pair<std::string, Param>> items_;
    std::unordered_map<std::string, size_t> index_;
};

// Per-forward bridge between persistent Params and graph leaves. flush()
// moves leaf adjoints into Param.grad for trainable entries only, which is
// what keeps frozen encoders untouched by optimizer steps.
class ParamBank {
public:
    explicit ParamBank(NetworkParams& params) : params_(&params) {}

    ag::Var leaf(const std::string& path) {
        auto it = leaves_.find(path);
        if (it != leaves_.end()) return it->second;
        ag::Var v = ag::leaf(params_->at(path).value);
        leaves_.emplace(path, v);
        order_.push_back(path);
        return v;
    }

    Tensor& buffer(const std::string& path) { return params_->at(path).value; }

    void flush_grads() {
        for (const std::string& path : order_) {
            Param& p = params_->at(path);
            if (!p.trainable) continue;
            const ag::Var& v = leaves_.at(path);
            if (!v.has_grad()) continue;
            const Tensor& g = v.grad();
            for (index_t i = 0; i < g.numel(); ++i) p.grad.data[i] += g.data[i];
        }
    }

    NetworkParams& params() { return *params_; }

private:
    NetworkParams* params_;
    std::unordered_map<std::string, ag::Var> leaves_;
    std::vector<std::string> order_;
};

// Fan-in-scaled uniform init for convolution kernels and biases.
inline Tensor init_conv_weight(Rng& rng, std::vector<index_t> shape, index_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamOptions opts) : opts_(opts) {}

    void step(NetworkParams& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
        for (auto& [path, p] : params.items()) {
            if (!p.trainable) continue;
            for (index_t i = 0; i < p.value.numel(); ++i) {
                const double g = p.grad.data[i];
                p.adam_m.data[i] = opts_.beta1 * p.adam_m.data[i] + (1.0 - opts_.beta1) * g;
                p.adam_v.data[i] = opts_.beta2 * p.adam_v.data[i] + (1.0 - opts_.beta2) * g * g;
                const double mhat = p.adam_m.data[i] / bc1;
                const double vhat = p.adam_v.data[i] / bc2;
                p.value.data[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
            }
        }
    }

    AdamOptions& options() { return opts_; }

private:
    AdamOptions opts_;
    std::int64_t t_ = 0;
};

}  // namespace vesseg
