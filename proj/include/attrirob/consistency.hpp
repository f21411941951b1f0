#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "attrirob/errors.hpp"
#include "attrirob/metrics.hpp"
#include "attrirob/mlp.hpp"
#include "attrirob/rng.hpp"
#include "attrirob/tensor.hpp"

namespace attrirob {

// Boolean sign pattern of every hidden pre-activation, one matrix per hidden
// layer, rows = samples. Exactly-zero pre-activations count as inactive.
struct ActivationTrace {
    std::vector<std::vector<std::vector<char>>> layers;  // [layer][sample][unit]
    std::size_t sample_count = 0;
};

inline ActivationTrace record_activation_trace(const MlpModel& model,
                                               const std::vector<Vec>& batch) {
    if (batch.empty()) throw argument_error("record_activation_trace: empty batch");
    ActivationTrace tr;
    tr.sample_count = batch.size();
    const std::size_t hidden_layers = model.layers.size() - 1;
    tr.layers.assign(hidden_layers, {});
    for (auto& layer : tr.layers) layer.reserve(batch.size());
    for (const Vec& x : batch) {
        const ForwardTrace f = mlp_forward_trace(model, x);
        for (std::size_t l = 0; l < hidden_layers; ++l) {
            std::vector<char> row(f.mask[l].size());
            for (std::size_t u = 0; u < row.size(); ++u) row[u] = f.mask[l][u] ? 1 : 0;
            tr.layers[l].push_back(std::move(row));
        }
    }
    return tr;
}

namespace detail {

struct ConsistencyCounts {
    std::uint64_t ab = 0, a = 0, b = 0, total = 0;

    void add(bool ea, bool eb) {
        a += ea;
        b += eb;
        ab += ea && eb;
        ++total;
    }

    double value(bool* degenerate = nullptr) const {
        if (a == 0 || b == 0) {
            if (degenerate) *degenerate = true;
            return 0.0;
        }
        if (degenerate) *degenerate = false;
        return static_cast<double>(ab) /
               std::sqrt(static_cast<double>(a) * static_cast<double>(b));
    }
};

}  // namespace detail

// Eq. 6 estimator P(A and B)/sqrt(P(A) P(B)) with frequencies pooled over all
// layers, samples, and units.
inline double activation_consistency(const ActivationTrace& nat, const ActivationTrace& adv,
                                     bool* degenerate = nullptr) {
    if (nat.layers.size() != adv.layers.size() || nat.sample_count != adv.sample_count)
        throw shape_error("activation_consistency: trace shape mismatch");
    detail::ConsistencyCounts cc;
    for (std::size_t l = 0; l < nat.layers.size(); ++l) {
        if (nat.layers[l].size() != adv.layers[l].size())
            throw shape_error("activation_consistency: trace shape mismatch");
        for (std::size_t s = 0; s < nat.layers[l].size(); ++s) {
            const auto& ra = nat.layers[l][s];
            const auto& rb = adv.layers[l][s];
            if (ra.size() != rb.size())
                throw shape_error("activation_consistency: trace shape mismatch");
            for (std::size_t u = 0; u < ra.size(); ++u) cc.add(ra[u], rb[u]);
        }
    }
    return cc.value(degenerate);
}

inline std::vector<double> activation_consistency_per_layer(const ActivationTrace& nat,
                                                            const ActivationTrace& adv) {
    if (nat.layers.size() != adv.layers.size())
        throw shape_error("activation_consistency: trace shape mismatch");
    std::vector<double> out(nat.layers.size());
    for (std::size_t l = 0; l < nat.layers.size(); ++l) {
        detail::ConsistencyCounts cc;
        for (std::size_t s = 0; s < nat.layers[l].size(); ++s)
            for (std::size_t u = 0; u < nat.layers[l][s].size(); ++u)
                cc.add(nat.layers[l][s][u], adv.layers[l][s][u]);
        out[l] = cc.value();
    }
    return out;
}

struct Prop1Result {
    double cos_estimate = 0.0;
    double consistency_estimate = 0.0;
    double gap = 0.0;
    bool width_warning = false;
    bool variance_warning = false;
};

// Monte Carlo check of Proposition 1 on f(x) = u^T ReLU(Wx) with Gaussian
// W, u. With zero bias the ReLU masks are constant along the 0 -> x path, so
// IG equals x elementwise-times the input gradient exactly.
inline Prop1Result prop1_montecarlo(std::size_t d, std::size_t hidden_width, double sigma_w,
                                    double sigma_u, const Vec& x, const Vec& x_adv,
                                    std::uint64_t seed) {
    if (x.size() != d || x_adv.size() != d)
        throw shape_error("prop1_montecarlo: input dimension mismatch");
    if (hidden_width == 0) throw argument_error("prop1_montecarlo: width must be positive");
    if (sigma_w <= 0.0 || sigma_u <= 0.0)
        throw argument_error("prop1_montecarlo: sigmas must be positive");

    Prop1Result res;
    res.width_warning = hidden_width < 1000;
    for (const Vec* v : {&x, &x_adv}) {
        double mean = 0.0, sq = 0.0;
        for (double e : *v) {
            mean += e;
            sq += e * e;
        }
        mean /= static_cast<double>(d);
        const double var = sq / static_cast<double>(d) - mean * mean;
        if (var > 1e-3 * (mean * mean + 1e-12)) res.variance_warning = true;
    }

    Rng rng(seed);
    MlpModel model;
    Layer h;
    h.w = Tensor(hidden_width, d);
    h.b.assign(hidden_width, 0.0);
    for (double& v : h.w.data) v = rng.normal(0.0, sigma_w);
    Layer o;
    o.w = Tensor(1, hidden_width);
    o.b.assign(1, 0.0);
    for (double& v : o.w.data) v = rng.normal(0.0, sigma_u);
    model.layers = {std::move(h), std::move(o)};

    const ForwardTrace ta = mlp_forward_trace(model, x);
    const ForwardTrace tb = mlp_forward_trace(model, x_adv);
    const Vec ga = input_gradient_from_trace(model, ta, std::size_t{0});
    const Vec gb = input_gradient_from_trace(model, tb, std::size_t{0});
    Vec ig_a(d), ig_b(d);
    for (std::size_t i = 0; i < d; ++i) {
        ig_a[i] = x[i] * ga[i];
        ig_b[i] = x_adv[i] * gb[i];
    }
    bool degenerate = false;
    res.cos_estimate = cosine_similarity(ig_a, ig_b, &degenerate);

    detail::ConsistencyCounts cc;
    for (std::size_t u = 0; u < hidden_width; ++u) cc.add(ta.mask[0][u], tb.mask[0][u]);
    res.consistency_estimate = cc.value();
    res.gap = std::fabs(res.cos_estimate - res.consistency_estimate);
    return res;
}

}  // namespace attrirob
