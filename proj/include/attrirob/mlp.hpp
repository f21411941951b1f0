#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "attrirob/errors.hpp"
#include "attrirob/rng.hpp"
#include "attrirob/tensor.hpp"

namespace attrirob {

// Fully-connected ReLU network, identity at the output layer.
struct Layer {
    Tensor w;  // out x in
    Vec b;     // out

    std::size_t in_dim() const { return w.cols(); }
    std::size_t out_dim() const { return w.rows(); }
};

struct MlpModel {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t class_count() const { return layers.back().out_dim(); }

    void validate() const {
        if (layers.empty()) throw shape_error("MlpModel: no layers");
        for (std::size_t k = 0; k + 1 < layers.size(); ++k)
            if (layers[k].out_dim() != layers[k + 1].in_dim())
                throw shape_error("MlpModel: layer dimensions do not chain");
        for (const auto& l : layers)
            if (l.b.size() != l.out_dim()) throw shape_error("MlpModel: bias length mismatch");
    }
};

// Gaussian init, variance 2/fan_in per layer.
inline MlpModel make_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
    if (dims.size() < 2) throw argument_error("make_mlp: need at least input and output dims");
    MlpModel m;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        Layer l;
        l.w = Tensor(dims[k + 1], dims[k]);
        l.b.assign(dims[k + 1], 0.0);
        const double sigma = std::sqrt(2.0 / static_cast<double>(dims[k]));
        for (auto& v : l.w.data) v = rng.normal(0.0, sigma);
        m.layers.push_back(std::move(l));
    }
    return m;
}

namespace detail {

inline void affine(const Layer& l, const Vec& in, Vec& out) {
    out.assign(l.out_dim(), 0.0);
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
        double s = l.b[r];
        const double* wr = &l.w.data[r * l.in_dim()];
        for (std::size_t c = 0; c < l.in_dim(); ++c) s += wr[c] * in[c];
        out[r] = s;
    }
}

inline void affine_transpose(const Layer& l, const Vec& in, Vec& out) {
    out.assign(l.in_dim(), 0.0);
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
        const double* wr = &l.w.data[r * l.in_dim()];
        const double v = in[r];
        for (std::size_t c = 0; c < l.in_dim(); ++c) out[c] += wr[c] * v;
    }
}

}  // namespace detail

// Activations and ReLU masks from one forward pass. h[0] is the input,
// h[k+1] the output of layer k (post-ReLU except for the last layer).
struct ForwardTrace {
    std::vector<Vec> h;
    std::vector<Vec> z;                          // pre-activations, logits last
    std::vector<std::vector<unsigned char>> mask;  // one per hidden layer; z > 0
};

inline ForwardTrace mlp_forward_trace(const MlpModel& m, const Vec& x) {
    if (x.size() != m.input_dim()) throw shape_error("mlp_forward: input dimension mismatch");
    ForwardTrace t;
    t.h.reserve(m.layers.size() + 1);
    t.h.push_back(x);
    Vec cur = x;
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
        Vec z;
        detail::affine(m.layers[k], cur, z);
        t.z.push_back(z);
        if (k + 1 < m.layers.size()) {
            std::vector<unsigned char> mk(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                mk[i] = z[i] > 0.0 ? 1 : 0;  // ReLU'(0) = 0
                z[i] = mk[i] ? z[i] : 0.0;
            }
            t.mask.push_back(std::move(mk));
        }
        t.h.push_back(z);
        cur = std::move(z);
    }
    return t;
}

inline Vec mlp_forward(const MlpModel& m, const Vec& x) {
    return mlp_forward_trace(m, x).h.back();
}

inline Tensor mlp_forward(const MlpModel& m, const Tensor& x) {
    return Tensor::vector(mlp_forward(m, x.data));
}

// Argmax with lowest-index tie break.
inline std::size_t predict(const MlpModel& m, const Vec& x) {
    const Vec logits = mlp_forward(m, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

// d<dlogits, f(x)> / d x with ReLU masks from the given trace.
inline Vec input_gradient_from_trace(const MlpModel& m, const ForwardTrace& t,
                                     const Vec& dlogits) {
    const std::size_t L = m.layers.size();
    Vec delta = dlogits;
    for (std::size_t k = L; k-- > 0;) {
        Vec prev;
        detail::affine_transpose(m.layers[k], delta, prev);
        if (k > 0)
            for (std::size_t i = 0; i < prev.size(); ++i)
                if (!t.mask[k - 1][i]) prev[i] = 0.0;
        delta = std::move(prev);
    }
    return delta;
}

// d f_class / d x.
inline Vec input_gradient_from_trace(const MlpModel& m, const ForwardTrace& t,
                                     std::size_t cls) {
    if (cls >= m.class_count()) throw argument_error("input_gradient: class out of range");
    Vec e(m.class_count(), 0.0);
    e[cls] = 1.0;
    return input_gradient_from_trace(m, t, e);
}

inline Vec input_gradient(const MlpModel& m, const Vec& x, std::size_t cls) {
    const ForwardTrace t = mlp_forward_trace(m, x);
    return input_gradient_from_trace(m, t, cls);
}

// Parameter-shaped gradient accumulator.
struct ParamGrads {
    std::vector<Tensor> w;
    std::vector<Vec> b;

    explicit ParamGrads(const MlpModel& m) {
        for (const auto& l : m.layers) {
            w.emplace_back(std::vector<std::size_t>{l.out_dim(), l.in_dim()});
            b.emplace_back(l.out_dim(), 0.0);
        }
    }

    void add(const ParamGrads& o, double scale = 1.0) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            for (std::size_t i = 0; i < w[k].data.size(); ++i) w[k].data[i] += scale * o.w[k].data[i];
            for (std::size_t i = 0; i < b[k].size(); ++i) b[k][i] += scale * o.b[k][i];
        }
    }

    void scale(double s) {
        for (auto& t : w)
            for (auto& v : t.data) v *= s;
        for (auto& vb : b)
            for (auto& v : vb) v *= s;
    }
};

// First-order backprop: accumulates d(loss)/d(params) given d(loss)/d(logits),
// returns d(loss)/d(input).
inline Vec backprop_from_logits(const MlpModel& m, const ForwardTrace& t, const Vec& dlogits,
                                ParamGrads& grads, double scale = 1.0) {
    const std::size_t L = m.layers.size();
    Vec delta = dlogits;
    for (std::size_t k = L; k-- > 0;) {
        for (std::size_t r = 0; r < m.layers[k].out_dim(); ++r) {
            const double dv = scale * delta[r];
            grads.b[k][r] += dv;
            double* gw = &grads.w[k].data[r * m.layers[k].in_dim()];
            const Vec& hin = t.h[k];
            for (std::size_t c = 0; c < m.layers[k].in_dim(); ++c) gw[c] += dv * hin[c];
        }
        Vec prev;
        detail::affine_transpose(m.layers[k], delta, prev);
        if (k > 0)
            for (std::size_t i = 0; i < prev.size(); ++i)
                if (!t.mask[k - 1][i]) prev[i] = 0.0;
        delta = std::move(prev);
    }
    return delta;
}

// Double backprop for S = <v, grad_x f_cls(p)>: parameter gradient with the
// ReLU masks of `t` treated as constants. Bias gradients vanish identically.
inline void grad_input_vjp_params(const MlpModel& m, const ForwardTrace& t, std::size_t cls,
                                  const Vec& v, ParamGrads& grads, double scale = 1.0) {
    const std::size_t L = m.layers.size();
    // forward tangent chain: t0 = v, t_{k+1} = mask_k . (W_k t_k)
    std::vector<Vec> tch(L);
    tch[0] = v;
    for (std::size_t k = 0; k + 1 < L; ++k) {
        Vec nk;
        detail::affine(m.layers[k], tch[k], nk);
        for (std::size_t i = 0; i < nk.size(); ++i) {
            nk[i] -= m.layers[k].b[i];  // tangent flow has no bias term
            if (!t.mask[k][i]) nk[i] = 0.0;
        }
        tch[k + 1] = std::move(nk);
    }
    // cotangent chain: delta_{L-1} = e_cls, delta_k = mask_k . (W_{k+1}^T delta_{k+1})
    std::vector<Vec> dch(L);
    dch[L - 1].assign(m.class_count(), 0.0);
    dch[L - 1][cls] = 1.0;
    for (std::size_t k = L - 1; k-- > 0;) {
        Vec prev;
        detail::affine_transpose(m.layers[k + 1], dch[k + 1], prev);
        for (std::size_t i = 0; i < prev.size(); ++i)
            if (!t.mask[k][i]) prev[i] = 0.0;
        dch[k] = std::move(prev);
    }
    for (std::size_t k = 0; k < L; ++k) {
        const Vec& row = dch[k];
        const Vec& col = tch[k];
        for (std::size_t r = 0; r < m.layers[k].out_dim(); ++r) {
            const double dv = scale * row[r];
            if (dv == 0.0) continue;
            double* gw = &grads.w[k].data[r * m.layers[k].in_dim()];
            for (std::size_t c = 0; c < m.layers[k].in_dim(); ++c) gw[c] += dv * col[c];
        }
    }
}

// Softmax helpers.
inline Vec softmax(const Vec& z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    Vec p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        s += p[i];
    }
    for (auto& v : p) v /= s;
    return p;
}

inline double cross_entropy_from_logits(const Vec& z, std::size_t y) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return std::log(s) + mx - z[y];
}

// KL(p || q) for probability vectors.
inline double kl_divergence(const Vec& p, const Vec& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
    return s;
}

inline void sgd_step(MlpModel& m, const ParamGrads& g, std::vector<Tensor>& vel_w,
                     std::vector<Vec>& vel_b, double lr, double momentum) {
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
        for (std::size_t i = 0; i < m.layers[k].w.data.size(); ++i) {
            vel_w[k].data[i] = momentum * vel_w[k].data[i] + g.w[k].data[i];
            m.layers[k].w.data[i] -= lr * vel_w[k].data[i];
        }
        for (std::size_t i = 0; i < m.layers[k].b.size(); ++i) {
            vel_b[k][i] = momentum * vel_b[k][i] + g.b[k][i];
            m.layers[k].b[i] -= lr * vel_b[k][i];
        }
    }
}

}  // namespace attrirob
