#include "vesseg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace vesseg::ag {

namespace {

void accumulate(Node& target, const Tensor& delta) {
    Tensor& g = target.grad_buf();
    const index_t n = g.numel();
    for (index_t i = 0; i < n; ++i) g.data[i] += delta.data[i];
}

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    return n;
}

void require_4d(const Tensor& t, const char* what) {
    if (t.ndim() != 4) throw ShapeError(std::string(what) + ": expected 4-d NCHW tensor, got " + t.shape_str());
}

}  // namespace

Var leaf(Tensor t) { return Var(make_node(std::move(t), {}, nullptr)); }

Var detach(const Var& x) { return Var(make_node(x.val(), {}, nullptr)); }

void backward(const Var& root) {
    if (root.val().numel() != 1) throw ShapeError("backward: root must be scalar, got " + root.val().shape_str());

    // post-order DFS over parent edges; reversed it yields a valid adjoint order
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node.get(), 0});
    visited.insert(root.node.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root.node->grad_buf().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad_alloc) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise / structural
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    const index_t n = out.numel();
    for (index_t i = 0; i < n; ++i) out.data[i] += b.val().data[i];
    Node* pa = a.node.get();
    Node* pb = b.node.get();
    return Var(make_node(std::move(out), {a.node, b.node}, [pa, pb](Node& self) {
        accumulate(*pa, self.grad);
        accumulate(*pb, self.grad);
    }));
}

Var axpy(const Var& a, double alpha, const Var& b) {
    require_same_shape(a.val(), b.val(), "axpy");
    Tensor out = a.val();
    const index_t n = out.numel();
    for (index_t i = 0; i < n; ++i) out.data[i] += alpha * b.val().data[i];
    Node* pa = a.node.get();
    Node* pb = b.node.get();
    return Var(make_node(std::move(out), {a.node, b.node}, [pa, pb, alpha](Node& self) {
        accumulate(*pa, self.grad);
        Tensor& gb = pb->grad_buf();
        for (index_t i = 0; i < self.grad.numel(); ++i) gb.data[i] += alpha * self.grad.data[i];
    }));
}

Var scale(const Var& a, double s) {
    Tensor out = a.val();
    for (double& v : out.data) v *= s;
    Node* pa = a.node.get();
    return Var(make_node(std::move(out), {a.node}, [pa, s](Node& self) {
        Tensor& ga = pa->grad_buf();
        for (index_t i = 0; i < self.grad.numel(); ++i) ga.data[i] += s * self.grad.data[i];
    }));
}

Var relu(const Var& x) {
    Tensor out = x.val();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    Node* px = x.node.get();
    return Var(make_node(std::move(out), {x.node}, [px](Node& self) {
        Tensor& gx = px->grad_buf();
        for (index_t i = 0; i < self.grad.numel(); ++i)
            if (px->value.data[i] > 0.0) gx.data[i] += self.grad.data[i];
    }));
}

Var sigmoid(const Var& x) {
    Tensor out = x.val();
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    Node* px = x.node.get();
    return Var(make_node(std::move(out), {x.node}, [px](Node& self) {
        Tensor& gx = px->grad_buf();
        for (index_t i = 0; i < self.grad.numel(); ++i) {
            const double s = self.value.data[i];
            gx.data[i] += self.grad.data[i] * s * (1.0 - s);
        }
    }));
}

Var concat_channels(const Var& a, const Var& b) {
    require_4d(a.val(), "concat_channels");
    require_4d(b.val(), "concat_channels");
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3))
        throw ShapeError("concat_channels: incompatible shapes " + ta.shape_str() + " vs " + tb.shape_str());
    const index_t n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1), h = ta.dim(2), w = ta.dim(3);
    Tensor out({n, ca + cb, h, w});
    const index_t plane = h * w;
    for (index_t i = 0; i < n; ++i) {
        std::copy_n(&ta.data[i * ca * plane], ca * plane, &out.data[i * (ca + cb) * plane]);
        std::copy_n(&tb.data[i * cb * plane], cb * plane, &out.data[(i * (ca + cb) + ca) * plane]);
    }
    Node* pa = a.node.get();
    Node* pb = b.node.get();
    return Var(make_node(std::move(out), {a.node, b.node}, [pa, pb, n, ca, cb, plane](Node& self) {
        Tensor& ga = pa->grad_buf();
        Tensor& gb = pb->grad_buf();
        for (index_t i = 0; i < n; ++i) {
            const double* src = &self.grad.data[i * (ca + cb) * plane];
            double* da = &ga.data[i * ca * plane];
            double* db = &gb.data[i * cb * plane];
            for (index_t j = 0; j < ca * plane; ++j) da[j] += src[j];
            for (index_t j = 0; j < cb * plane; ++j) db[j] += src[ca * plane + j];
        }
    }));
}

Var reshape(const Var& x, std::vector<index_t> shape) {
    if (Tensor::count(shape) != x.val().numel())
        throw ShapeError("reshape: cannot view " + x.val().shape_str() + " with " +
                         std::to_string(Tensor::count(shape)) + "-element shape");
    Tensor out(std::move(shape), x.val().data);
    Node* px = x.node.get();
    return Var(make_node(std::move(out), {x.node}, [px](Node& self) {
        Tensor& gx = px->grad_buf();
        for (index_t i = 0; i < self.grad.numel(); ++i) gx.data[i] += self.grad.data[i];
    }));
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b) {
    require_4d(x.val(), "conv2d input");
    require_4d(w.val(), "conv2d weight");
    const Tensor& tx = x.val();
    const Tensor& tw = w.val();
    const index_t N = tx.dim(0), Ci = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    const index_t Co = tw.dim(0), K = tw.dim(2);
    if (tw.dim(1) != Ci)
        throw ShapeError("conv2d: weight expects " + std::to_string(tw.dim(1)) + " input channels, input has " +
                         std::to_string(Ci));
    if (tw.dim(3) != K || K % 2 == 0) throw ShapeError("conv2d: kernel must be square and odd, got " + tw.shape_str());
    if (b.val().numel() != Co) throw ShapeError("conv2d: bias size mismatch");
    const index_t P = K / 2;

    Tensor out({N, Co, H, W});
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < N; ++n) {
        for (index_t co = 0; co < Co; ++co) {
            double* oc = &out.data[(n * Co + co) * H * W];
            const double bias = b.val().data[co];
            for (index_t i = 0; i < H * W; ++i) oc[i] = bias;
            for (index_t ci = 0; ci < Ci; ++ci) {
                const double* xc = &tx.data[(n * Ci + ci) * H * W];
                for (index_t ky = 0; ky < K; ++ky) {
                    for (index_t kx = 0; kx < K; ++kx) {
                        const double wv = tw.data[((co * Ci + ci) * K + ky) * K + kx];
                        if (wv == 0.0) continue;
                        const index_t dy = ky - P, dx = kx - P;
                        const index_t oy0 = std::max<index_t>(0, -dy), oy1 = std::min(H, H - dy);
                        const index_t ox0 = std::max<index_t>(0, -dx), ox1 = std::min(W, W - dx);
                        for (index_t oy = oy0; oy < oy1; ++oy) {
                            const double* xrow = xc + (oy + dy) * W + dx;
                            double* orow = oc + oy * W;
                            for (index_t ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xrow[ox];
                        }
                    }
                }
            }
        }
    }

    Node* px = x.node.get();
    Node* pw = w.node.get();
    Node* pb = b.node.get();
    return Var(make_node(std::move(out), {x.node, w.node, b.node},
                         [px, pw, pb, N, Ci, Co, H, W, K, P](Node& self) {
        const Tensor& dy = self.grad;
        const Tensor& sx = px->value;
        const Tensor& sw = pw->value;
        Tensor& gx = px->grad_buf();
        Tensor& gw = pw->grad_buf();
        Tensor& gb = pb->grad_buf();

        // d input: gather formulation, disjoint writes per (n, ci)
#pragma omp parallel for collapse(2) schedule(static)
        for (index_t n = 0; n < N; ++n) {
            for (index_t ci = 0; ci < Ci; ++ci) {
                double* gxc = &gx.data[(n * Ci + ci) * H * W];
                for (index_t co = 0; co < Co; ++co) {
                    const double* dyc = &dy.data[(n * Co + co) * H * W];
                    for (index_t ky = 0; ky < K; ++ky) {
                        for (index_t kx = 0; kx < K; ++kx) {
                            const double wv = sw.data[((co * Ci + ci) * K + ky) * K + kx];
                            if (wv == 0.0) continue;
                            const index_t dyo = ky - P, dxo = kx - P;
                            // iy = oy + dyo  =>  oy = iy - dyo
                            const index_t iy0 = std::max<index_t>(0, dyo), iy1 = std::min(H, H + dyo);
                            const index_t ix0 = std::max<index_t>(0, dxo), ix1 = std::min(W, W + dxo);
                            for (index_t iy = iy0; iy < iy1; ++iy) {
                                const double* drow = dyc + (iy - dyo) * W - dxo;
                                double* grow = gxc + iy * W;
                                for (index_t ix = ix0; ix < ix1; ++ix) grow[ix] += wv * drow[ix];
                            }
                        }
                    }
                }
            }
        }

        // d weight: disjoint writes per (co, ci)
#pragma omp parallel for collapse(2) schedule(static)
        for (index_t co = 0; co < Co; ++co) {
            for (index_t ci = 0; ci < Ci; ++ci) {
                for (index_t ky = 0; ky < K; ++ky) {
                    for (index_t kx = 0; kx < K; ++kx) {
                        const index_t dyo = ky - P, dxo = kx - P;
                        double acc = 0.0;
                        for (index_t n = 0; n < N; ++n) {
                            const double* dyc = &dy.data[(n * Co + co) * H * W];
                            const double* xc = &sx.data[(n * Ci + ci) * H * W];
                            const index_t oy0 = std::max<index_t>(0, -dyo), oy1 = std::min(H, H - dyo);
                            const index_t ox0 = std::max<index_t>(0, -dxo), ox1 = std::min(W, W - dxo);
                            for (index_t oy = oy0; oy < oy1; ++oy) {
                                const double* drow = dyc + oy * W;
                                const double* xrow = xc + (oy + dyo) * W + dxo;
                                for (index_t ox = ox0; ox < ox1; ++ox) acc += drow[ox] * xrow[ox];
                            }
                        }
                        gw.data[((co * Ci + ci) * K + ky) * K + kx] += acc;
                    }
                }
            }
        }

        for (index_t co = 0; co < Co; ++co) {
            double acc = 0.0;
            for (index_t n = 0; n < N; ++n) {
                const double* dyc = &dy.data[(n * Co + co) * H * W];
                for (index_t i = 0; i < H * W; ++i) acc += dyc[i];
            }
            gb.data[co] += acc;
        }
    }));
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b) {
    require_4d(x.val(), "conv_transpose2d input");
    require_4d(w.val(), "conv_transpose2d weight");
    const Tensor& tx = x.val();
    const Tensor& tw = w.val();
    const index_t N = tx.dim(0), Ci = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (tw.dim(0) != Ci)
        throw ShapeError("conv_transpose2d: weight expects " + std::to_string(tw.dim(0)) +
                         " input channels, input has " + std::to_string(Ci));
    if (tw.dim(2) != 2 || tw.dim(3) != 2) throw ShapeError("conv_transpose2d: kernel must be 2x2");
    const index_t Co = tw.dim(1);
    if (b.val().numel() != Co) throw ShapeError("conv_transpose2d: bias size mismatch");

    // kernel 2 / stride 2: every output pixel is fed by exactly one input pixel
    Tensor out({N, Co, 2 * H, 2 * W});
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < N; ++n) {
        for (index_t co = 0; co < Co; ++co) {
            double* oc = &out.data[(n * Co + co) * 4 * H * W];
            const double bias = b.val().data[co];
            for (index_t oy = 0; oy < 2 * H; ++oy) {
                const index_t iy = oy >> 1, ky = oy & 1;
                double* orow = oc + oy * 2 * W;
                for (index_t ox = 0; ox < 2 * W; ++ox) {
                    const index_t ix = ox >> 1, kx = ox & 1;
                    double acc = bias;
                    for (index_t ci = 0; ci < Ci; ++ci)
                        acc += tx.at4(n, ci, iy, ix) * tw.data[((ci * Co + co) * 2 + ky) * 2 + kx];
                    orow[ox] = acc;
                }
            }
        }
    }

    Node* px = x.node.get();
    Node* pw = w.node.get();
    Node* pb = b.node.get();
    return Var(make_node(std::move(out), {x.node, w.node, b.node},
                         [px, pw, pb, N, Ci, Co, H, W](Node& self) {
        const Tensor& dy = self.grad;
        const Tensor& sx = px->value;
        const Tensor& sw = pw->value;
        Tensor& gx = px->grad_buf();
        Tensor& gw = pw->grad_buf();
        Tensor& gb = pb->grad_buf();

#pragma omp parallel for collapse(2) schedule(static)
        for (index_t n = 0; n < N; ++n) {
            for (index_t ci = 0; ci < Ci; ++ci) {
                for (index_t iy = 0; iy < H; ++iy) {
                    for (index_t ix = 0; ix < W; ++ix) {
                        double acc = 0.0;
                        for (index_t co = 0; co < Co; ++co)
                            for (index_t ky = 0; ky < 2; ++ky)
                                for (index_t kx = 0; kx < 2; ++kx)
                                    acc += dy.at4(n, co, 2 * iy + ky, 2 * ix + kx) *
                                           sw.data[((ci * Co + co) * 2 + ky) * 2 + kx];
                        gx.at4(n, ci, iy, ix) += acc;
                    }
                }
            }
        }

#pragma omp parallel for collapse(2) schedule(static)
        for (index_t ci = 0; ci < Ci; ++ci) {
            for (index_t co = 0; co < Co; ++co) {
                for (index_t ky = 0; ky < 2; ++ky) {
                    for (index_t kx = 0; kx < 2; ++kx) {
                        double acc = 0.0;
                        for (index_t n = 0; n < N; ++n)
                            for (index_t iy = 0; iy < H; ++iy)
                                for (index_t ix = 0; ix < W; ++ix)
                                    acc += sx.at4(n, ci, iy, ix) * dy.at4(n, co, 2 * iy + ky, 2 * ix + kx);
                        gw.data[((ci * Co + co) * 2 + ky) * 2 + kx] += acc;
                    }
                }
            }
        }

        for (index_t co = 0; co < Co; ++co) {
            double acc = 0.0;
            for (index_t n = 0; n < N; ++n) {
                const double* dyc = &dy.data[(n * Co + co) * 4 * H * W];
                for (index_t i = 0; i < 4 * H * W; ++i) acc += dyc[i];
            }
            gb.data[co] += acc;
        }
    }));
}

// ---------------------------------------------------------------------------
// pooling / resampling
// ---------------------------------------------------------------------------

Var maxpool2d(const Var& x, int kernel, int stride) {
    require_4d(x.val(), "maxpool2d");
    if (kernel < 1 || stride < 1) throw ConfigError("maxpool2d: kernel and stride must be positive");
    const Tensor& tx = x.val();
    const index_t N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (H < kernel || W < kernel)
        throw ShapeError("maxpool2d: input " + tx.shape_str() + " smaller than kernel " + std::to_string(kernel));
    const index_t OH = (H - kernel) / stride + 1;
    const index_t OW = (W - kernel) / stride + 1;

    Tensor out({N, C, OH, OW});
    std::vector<index_t> argmax(static_cast<size_t>(out.numel()));
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < N; ++n) {
        for (index_t c = 0; c < C; ++c) {
            const double* xc = &tx.data[(n * C + c) * H * W];
            for (index_t oy = 0; oy < OH; ++oy) {
                for (index_t ox = 0; ox < OW; ++ox) {
                    const index_t y0 = oy * stride, x0 = ox * stride;
                    double best = xc[y0 * W + x0];
                    index_t best_i = y0 * W + x0;
                    for (index_t ky = 0; ky < kernel; ++ky)
                        for (index_t kx = 0; kx < kernel; ++kx) {
                            const index_t i = (y0 + ky) * W + (x0 + kx);
                            if (xc[i] > best) {
                                best = xc[i];
                                best_i = i;
                            }
                        }
                    const index_t oi = ((n * C + c) * OH + oy) * OW + ox;
                    out.data[oi] = best;
                    argmax[static_cast<size_t>(oi)] = (n * C + c) * H * W + best_i;
                }
            }
        }
    }

    Node* px = x.node.get();
    return Var(make_node(std::move(out), {x.node}, [px, argmax = std::move(argmax)](Node& self) {
        Tensor& gx = px->grad_buf();
        for (index_t i = 0; i < self.grad.numel(); ++i)
            gx.data[argmax[static_cast<size_t>(i)]] += self.grad.data[i];
    }));
}

namespace {
struct LerpAxis {
    std::vector<index_t> i0, i1;
    std::vector<double> t;
};

LerpAxis lerp_axis(index_t in, index_t out) {
    LerpAxis a;
    a.i0.resize(static_cast<size_t>(out));
    a.i1.resize(static_cast<size_t>(out));
    a.t.resize(static_cast<size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (index_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        if (src > static_cast<double>(in - 1)) src = static_cast<double>(in - 1);
        const index_t lo = static_cast<index_t>(src);
        a.i0[static_cast<size_t>(o)] = lo;
        a.i1[static_cast<size_t>(o)] = std::min(lo + 1, in - 1);
        a.t[static_cast<size_t>(o)] = src - static_cast<double>(lo);
    }
    return a;
}
}  // namespace

Var bilinear_resize(const Var& x, index_t out_h, index_t out_w) {
    require_4d(x.val(), "bilinear_resize");
    if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output dims must be positive");
    const Tensor& tx = x.val();
    const index_t N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    LerpAxis ay = lerp_axis(H, out_h);
    LerpAxis ax = lerp_axis(W, out_w);

    Tensor out({N, C, out_h, out_w});
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < N; ++n) {
        for (index_t c = 0; c < C; ++c) {
            const double* xc = &tx.data[(n * C + c) * H * W];
            double* oc = &out.data[(n * C + c) * out_h * out_w];
            for (index_t oy = 0; oy < out_h; ++oy) {
                const index_t y0 = ay.i0[oy], y1 = ay.i1[oy];
                const double ty = ay.t[oy];
                for (index_t ox = 0; ox < out_w; ++ox) {
                    const index_t x0 = ax.i0[ox], x1 = ax.i1[ox];
                    const double tx_ = ax.t[ox];
                    const double v00 = xc[y0 * W + x0], v01 = xc[y0 * W + x1];
                    const double v10 = xc[y1 * W + x0], v11 = xc[y1 * W + x1];
                    const double top = v00 + (v01 - v00) * tx_;
                    const double bot = v10 + (v11 - v10) * tx_;
                    oc[oy * out_w + ox] = top + (bot - top) * ty;
                }
            }
        }
    }

    Node* px = x.node.get();
    return Var(make_node(std::move(out), {x.node},
                         [px, ay = std::move(ay), ax = std::move(ax), N, C, H, W, out_h, out_w](Node& self) {
        Tensor& gx = px->grad_buf();
#pragma omp parallel for collapse(2) schedule(static)
        for (index_t n = 0; n < N; ++n) {
            for (index_t c = 0; c < C; ++c) {
                const double* dc = &self.grad.data[(n * C + c) * out_h * out_w];
                double* gc = &gx.data[(n * C + c) * H * W];
                for (index_t oy = 0; oy < out_h; ++oy) {
                    const index_t y0 = ay.i0[oy], y1 = ay.i1[oy];
                    const double ty = ay.t[oy];
                    for (index_t ox = 0; ox < out_w; ++ox) {
                        const index_t x0 = ax.i0[ox], x1 = ax.i1[ox];
                        const double tx_ = ax.t[ox];
                        const double g = dc[oy * out_w + ox];
                        gc[y0 * W + x0] += g * (1.0 - ty) * (1.0 - tx_);
                        gc[y0 * W + x1] += g * (1.0 - ty) * tx_;
                        gc[y1 * W + x0] += g * ty * (1.0 - tx_);
                        gc[y1 * W + x1] += g * ty * tx_;
                    }
                }
            }
        }
    }));
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta,
                Tensor& running_mean, Tensor& running_var, bool training,
                double momentum, double eps) {
    require_4d(x.val(), "batchnorm2d");
    const Tensor& tx = x.val();
    const index_t N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (gamma.val().numel() != C || beta.val().numel() != C || running_mean.numel() != C || running_var.numel() != C)
        throw ShapeError("batchnorm2d: parameter size mismatch for " + std::to_string(C) + " channels");
    const index_t plane = H * W;
    const index_t m = N * plane;

    std::vector<double> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
    if (training) {
#pragma omp parallel for schedule(static)
        for (index_t c = 0; c < C; ++c) {
            double s = 0.0, ss = 0.0;
            for (index_t n = 0; n < N; ++n) {
                const double* xc = &tx.data[(n * C + c) * plane];
                for (index_t i = 0; i < plane; ++i) {
                    s += xc[i];
                    ss += xc[i] * xc[i];
                }
            }
            const double mu = s / static_cast<double>(m);
            const double var = ss / static_cast<double>(m) - mu * mu;
            mean[c] = mu;
            invstd[c] = 1.0 / std::sqrt(std::max(var, 0.0) + eps);
        }
        // running statistics use biased batch variance
        for (index_t c = 0; c < C; ++c) {
            const double var = 1.0 / (invstd[c] * invstd[c]) - eps;
            running_mean.data[c] = (1.0 - momentum) * running_mean.data[c] + momentum * mean[c];
            running_var.data[c] = (1.0 - momentum) * running_var.data[c] + momentum * var;
        }
    } else {
        for (index_t c = 0; c < C; ++c) {
            mean[c] = running_mean.data[c];
            invstd[c] = 1.0 / std::sqrt(std::max(running_var.data[c], 0.0) + eps);
        }
    }

    Tensor out({N, C, H, W});
    Tensor xhat({N, C, H, W});
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < N; ++n) {
        for (index_t c = 0; c < C; ++c) {
            const double* xc = &tx.data[(n * C + c) * plane];
            double* hc = &xhat.data[(n * C + c) * plane];
            double* oc = &out.data[(n * C + c) * plane];
            const double mu = mean[c], is = invstd[c];
            const double g = gamma.val().data[c], bta = beta.val().data[c];
            for (index_t i = 0; i < plane; ++i) {
                const double h = (xc[i] - mu) * is;
                hc[i] = h;
                oc[i] = g * h + bta;
            }
        }
    }

    Node* px = x.node.get();
    Node* pg = gamma.node.get();
    Node* pb = beta.node.get();
    Tensor sg = gamma.val();
    return Var(make_node(std::move(out), {x.node, gamma.node, beta.node},
                         [px, pg, pb, xhat = std::move(xhat), invstd = std::move(invstd), sg = std::move(sg),
                          training, N, C, plane, m](Node& self) {
        const Tensor& dy = self.grad;
        Tensor& gx = px->grad_buf();
        Tensor& gg = pg->grad_buf();
        Tensor& gb = pb->grad_buf();
#pragma omp parallel for schedule(static)
        for (index_t c = 0; c < C; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (index_t n = 0; n < N; ++n) {
                const double* dc = &dy.data[(n * C + c) * plane];
                const double* hc = &xhat.data[(n * C + c) * plane];
                for (index_t i = 0; i < plane; ++i) {
                    sum_dy += dc[i];
                    sum_dy_xhat += dc[i] * hc[i];
                }
            }
            gg.data[c] += sum_dy_xhat;
            gb.data[c] += sum_dy;
            const double g_is = sg.data[c] * invstd[c];
            if (training) {
                const double mean_dy = sum_dy / static_cast<double>(m);
                const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
                for (index_t n = 0; n < N; ++n) {
                    const double* dc = &dy.data[(n * C + c) * plane];
                    const double* hc = &xhat.data[(n * C + c) * plane];
                    double* gxc = &gx.data[(n * C + c) * plane];
                    for (index_t i = 0; i < plane; ++i)
                        gxc[i] += g_is * (dc[i] - mean_dy - hc[i] * mean_dy_xhat);
                }
            } else {
                for (index_t n = 0; n < N; ++n) {
                    const double* dc = &dy.data[(n * C + c) * plane];
                    double* gxc = &gx.data[(n * C + c) * plane];
                    for (index_t i = 0; i < plane; ++i) gxc[i] += g_is * dc[i];
                }
            }
        }
    }));
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Var mse_loss(const Var& pred, const Var& target) {
    require_same_shape(target.val(), pred.val(), "mse_loss");
    const index_t n = pred.val().numel();
    double acc = 0.0;
    for (index_t i = 0; i < n; ++i) {
        const double d = pred.val().data[i] - target.val().data[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    Node* pp = pred.node.get();
    Node* pt = target.node.get();
    return Var(make_node(std::move(out), {pred.node, target.node}, [pp, pt, n](Node& self) {
        const Tensor& sp = pp->value;
        const Tensor& st = pt->value;
        const double g = self.grad.data[0] * 2.0 / static_cast<double>(n);
        Tensor& gp = pp->grad_buf();
        Tensor& gt = pt->grad_buf();
        for (index_t i = 0; i < n; ++i) {
            const double d = g * (sp.data[i] - st.data[i]);
            gp.data[i] += d;
            gt.data[i] -= d;
        }
    }));
}

Var weighted_bce_loss(const Var& pred, const Var& target, double pos_weight, double clamp_eps) {
    require_same_shape(target.val(), pred.val(), "weighted_bce_loss");
    const index_t n = pred.val().numel();
    double acc = 0.0;
    for (index_t i = 0; i < n; ++i) {
        const double y = target.val().data[i];
        double p = pred.val().data[i];
        p = std::min(std::max(p, clamp_eps), 1.0 - clamp_eps);
        acc -= pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    Node* pp = pred.node.get();
    Node* pt = target.node.get();
    return Var(make_node(std::move(out), {pred.node, target.node},
                         [pp, pt, n, pos_weight, clamp_eps](Node& self) {
        const Tensor& sp = pp->value;
        const Tensor& st = pt->value;
        const double g = self.grad.data[0] / static_cast<double>(n);
        Tensor& gp = pp->grad_buf();
        for (index_t i = 0; i < n; ++i) {
            const double p = sp.data[i];
            if (p <= clamp_eps || p >= 1.0 - clamp_eps) continue;  // clamped region: zero slope
            const double y = st.data[i];
            gp.data[i] += g * (-pos_weight * y / p + (1.0 - y) / (1.0 - p));
        }
    }));
}

CosineLoss cosine_prior_loss(const Var& z_gt, const Var& z_pred) {
    const Tensor& a = z_gt.val();
    const Tensor& b = z_pred.val();
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("cosine_prior_loss: expected (N, D) latents, got " + a.shape_str() + " / " + b.shape_str());
    require_same_shape(a, b, "cosine_prior_loss");
    const index_t N = a.dim(0), D = a.dim(1);

    std::vector<double> dot(static_cast<size_t>(N)), na(static_cast<size_t>(N)), nb(static_cast<size_t>(N));
    int degenerate = 0;
    double acc = 0.0;
    for (index_t i = 0; i < N; ++i) {
        double d = 0.0, sa = 0.0, sb = 0.0;
        const double* ra = &a.data[i * D];
        const double* rb = &b.data[i * D];
        for (index_t j = 0; j < D; ++j) {
            d += ra[j] * rb[j];
            sa += ra[j] * ra[j];
            sb += rb[j] * rb[j];
        }
        dot[i] = d;
        na[i] = std::sqrt(sa);
        nb[i] = std::sqrt(sb);
        if (na[i] == 0.0 || nb[i] == 0.0) {
            ++degenerate;
            acc += 1.0;  // cosine treated as 0 for a zero-norm latent
        } else {
            acc += 1.0 - d / (na[i] * nb[i]);
        }
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(N));

    Node* pa = z_gt.node.get();
    Node* pb = z_pred.node.get();
    Var loss(make_node(std::move(out), {z_gt.node, z_pred.node},
                       [pa, pb, dot = std::move(dot), na = std::move(na), nb = std::move(nb), N,
                        D](Node& self) {
        const Tensor& sa = pa->value;
        const Tensor& sb = pb->value;
        const double g = self.grad.data[0] / static_cast<double>(N);
        Tensor& ga = pa->grad_buf();
        Tensor& gb = pb->grad_buf();
        for (index_t i = 0; i < N; ++i) {
            if (na[i] == 0.0 || nb[i] == 0.0) continue;  // degenerate sample: flat loss
            const double inv = 1.0 / (na[i] * nb[i]);
            const double c = dot[i] * inv;
            const double* ra = &sa.data[i * D];
            const double* rb = &sb.data[i * D];
            double* gra = &ga.data[i * D];
            double* grb = &gb.data[i * D];
            for (index_t j = 0; j < D; ++j) {
                // d(1-cos)/da = -(b/(|a||b|) - cos * a/|a|^2)
                gra[j] += g * (c * ra[j] / (na[i] * na[i]) - rb[j] * inv);
                grb[j] += g * (c * rb[j] / (nb[i] * nb[i]) - ra[j] * inv);
            }
        }
    }));
    return {loss, degenerate};
}

}  // namespace vesseg::ag
