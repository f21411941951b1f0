#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "attrirob/errors.hpp"
#include "attrirob/mlp.hpp"
#include "attrirob/tensor.hpp"

namespace attrirob {

struct AttributionResult {
    Vec values;
    Vec baseline;
    std::size_t cls = 0;
    std::size_t m = 1;
    double completeness_gap = 0.0;
};

// Average path gradient A with A_i = (1/m) sum_k df_cls/dx_i at a + (k/m)(x-a),
// right-endpoint rule. IG_i = (x_i - a_i) * A_i.
inline Vec average_path_gradient(const MlpModel& model, const Vec& x, std::size_t cls,
                                 const Vec& baseline, std::size_t m) {
    if (m < 1) throw argument_error("integrated_gradients: m must be >= 1");
    check_same_length(x, baseline, "integrated_gradients");
    Vec acc(x.size(), 0.0);
    Vec p(x.size());
    for (std::size_t k = 1; k <= m; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(m);
        for (std::size_t i = 0; i < x.size(); ++i) p[i] = baseline[i] + t * (x[i] - baseline[i]);
        const Vec g = input_gradient(model, p, cls);
        axpy(1.0, g, acc);
    }
    for (auto& v : acc) v /= static_cast<double>(m);
    return acc;
}

inline AttributionResult integrated_gradients(const MlpModel& model, const Vec& x,
                                              std::size_t cls, const Vec& baseline,
                                              std::size_t m) {
    AttributionResult r;
    r.baseline = baseline;
    r.cls = cls;
    r.m = m;
    const Vec avg = average_path_gradient(model, x, cls, baseline, m);
    r.values.resize(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        r.values[i] = (x[i] - baseline[i]) * avg[i];
        total += r.values[i];
    }
    const double fx = mlp_forward(model, x)[cls];
    const double fa = mlp_forward(model, baseline)[cls];
    r.completeness_gap = std::fabs(total - (fx - fa));
    return r;
}

// Zero-baseline convenience overloads (the default baseline).
inline AttributionResult integrated_gradients(const MlpModel& model, const Vec& x,
                                              std::size_t cls, std::size_t m) {
    return integrated_gradients(model, x, cls, Vec(x.size(), 0.0), m);
}

inline double completeness_gap(const MlpModel& model, const Vec& x, std::size_t cls,
                               const Vec& baseline, std::size_t m) {
    return integrated_gradients(model, x, cls, baseline, m).completeness_gap;
}

// For nonnegative attributions the l2 norm is bounded by the entry sum.
inline bool norm_bound_check(const AttributionResult& attr) {
    double sum = 0.0, sq = 0.0;
    for (double v : attr.values) {
        if (v < 0.0) throw argument_error("norm_bound_check: negative attribution entry");
        sum += v;
        sq += v * v;
    }
    return std::sqrt(sq) <= sum + 1e-12;
}

// Differentiable-IG workspace: IG value plus everything needed to push a
// cotangent on IG back to parameters (frozen-mask double backprop) and,
// for the perturbed input, to the input itself.
struct IgTape {
    Vec values;          // IG vector
    Vec avg_grad;        // A in IG_i = (x_i - a_i) A_i
    Vec x;               // input the tape was recorded at
    Vec baseline;
    std::size_t cls = 0;
    std::size_t m = 1;
    std::vector<ForwardTrace> traces;  // one per Riemann point
};

inline IgTape record_ig_tape(const MlpModel& model, const Vec& x, std::size_t cls,
                             const Vec& baseline, std::size_t m) {
    if (m < 1) throw argument_error("record_ig_tape: m must be >= 1");
    IgTape tape;
    tape.x = x;
    tape.baseline = baseline;
    tape.cls = cls;
    tape.m = m;
    tape.avg_grad.assign(x.size(), 0.0);
    tape.traces.reserve(m);
    Vec p(x.size());
    for (std::size_t k = 1; k <= m; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(m);
        for (std::size_t i = 0; i < x.size(); ++i) p[i] = baseline[i] + t * (x[i] - baseline[i]);
        ForwardTrace tr = mlp_forward_trace(model, p);
        const Vec g = input_gradient_from_trace(model, tr, cls);
        axpy(1.0, g, tape.avg_grad);
        tape.traces.push_back(std::move(tr));
    }
    for (auto& v : tape.avg_grad) v /= static_cast<double>(m);
    tape.values.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        tape.values[i] = (x[i] - baseline[i]) * tape.avg_grad[i];
    return tape;
}

// Accumulates d<cot, IG>/d(params) into grads.
inline void ig_push_params(const MlpModel& model, const IgTape& tape, const Vec& cot,
                           ParamGrads& grads, double scale = 1.0) {
    Vec v(tape.x.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = cot[i] * (tape.x[i] - tape.baseline[i]) / static_cast<double>(tape.m);
    for (const auto& tr : tape.traces)
        grad_input_vjp_params(model, tr, tape.cls, v, grads, scale);
}

// d<cot, IG>/d(x) under the frozen-mask rule: the path-gradient average is
// locally constant in x for piecewise-linear nets, so only the direct
// (x - a) factor contributes.
inline Vec ig_push_input(const IgTape& tape, const Vec& cot) {
    Vec g(tape.x.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = cot[i] * tape.avg_grad[i];
    return g;
}

}  // namespace attrirob
