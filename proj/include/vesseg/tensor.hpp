#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "vesseg/errors.hpp"

namespace vesseg {

using index_t = std::int64_t;

// Dense row-major tensor of doubles. Networks use NCHW layout; latent codes
// are (N, D) with channel-major flattening (C, then rows, then columns).
struct Tensor {
    std::vector<index_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<index_t> s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Tensor(std::vector<index_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<index_t>(data.size()) != count(shape))
            throw ShapeError("tensor data size does not match shape " + shape_str());
    }

    static index_t count(const std::vector<index_t>& s) {
        index_t n = 1;
        for (index_t d : s) n *= d;
        return n;
    }
    static Tensor zeros(std::vector<index_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<index_t> s, double v) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = v;
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    index_t numel() const { return static_cast<index_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    index_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // 4-d accessors (N, C, H, W)
    index_t idx4(index_t n, index_t c, index_t y, index_t x) const {
        return ((n * shape[1] + c) * shape[2] + y) * shape[3] + x;
    }
    double& at4(index_t n, index_t c, index_t y, index_t x) { return data[idx4(n, c, y, x)]; }
    double at4(index_t n, index_t c, index_t y, index_t x) const { return data[idx4(n, c, y, x)]; }

    double& at2(index_t i, index_t j) { return data[i * shape[1] + j]; }
    double at2(index_t i, index_t j) const { return data[i * shape[1] + j]; }

    double item() const {
        if (numel() != 1) throw ShapeError("item() on tensor with " + std::to_string(numel()) + " elements");
        return data[0];
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": expected shape " + a.shape_str() + ", got " + b.shape_str());
}

}  // namespace vesseg
