#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <attrirob/attribution.hpp>
#include <attrirob/mlp.hpp>
#include <attrirob/rng.hpp>

using namespace attrirob;

namespace {

Vec random_input(Rng& rng, std::size_t d, double lo = -1.0, double hi = 1.0) {
    Vec x(d);
    for (auto& v : x) v = rng.uniform(lo, hi);
    return x;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// Criterion: affine models (no hidden ReLU) integrate exactly at m=1.
TEST(IntegratedGradients, AffineModelExactAtM1) {
    Rng rng(31);
    for (int c = 0; c < 20; ++c) {
        MlpModel m = make_mlp({6, 4}, rng);  // single layer: logits are affine
        const Vec x = random_input(rng, 6);
        const AttributionResult r = integrated_gradients(m, x, c % 4, 1);
        EXPECT_LE(r.completeness_gap, 1e-12);
        // closed form: IG_i = w_ci * x_i for zero baseline
        for (std::size_t i = 0; i < 6; ++i)
            EXPECT_NEAR(r.values[i], m.layers[0].w.at(c % 4, i) * x[i], 1e-12);
    }
}

// Criterion: on 50 random 2-layer ReLU nets the median completeness gap
// shrinks from m=10 to m=300 and the log-log slope is at most -0.8.
TEST(IntegratedGradients, CompletenessGapShrinksWithM) {
    Rng rng(32);
    const std::vector<std::size_t> ms{10, 30, 100, 300};
    std::vector<std::vector<double>> gaps(ms.size());
    for (int c = 0; c < 50; ++c) {
        MlpModel m = make_mlp({8, 16, 5}, rng);
        // nonzero biases so ReLU regions actually change along the 0 -> x path;
        // with zero biases the net is positively homogeneous and IG is exact
        for (auto& l : m.layers)
            for (auto& b : l.b) b = rng.uniform(-0.5, 0.5);
        const Vec x = random_input(rng, 8);
        const std::size_t cls = rng.below(5);
        for (std::size_t k = 0; k < ms.size(); ++k)
            gaps[k].push_back(
                completeness_gap(m, x, cls, Vec(8, 0.0), ms[k]) + 1e-300);
    }
    std::vector<double> med(ms.size());
    for (std::size_t k = 0; k < ms.size(); ++k) med[k] = median(gaps[k]);
    EXPECT_LE(med.back(), med.front());

    // least-squares slope of log(median gap) on log(m)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < ms.size(); ++k) {
        const double lx = std::log(static_cast<double>(ms[k]));
        const double ly = std::log(med[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(ms.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_LE(slope, -0.8);
}

TEST(IntegratedGradients, CompletenessGapFieldIsConsistent) {
    Rng rng(33);
    MlpModel m = make_mlp({5, 12, 3}, rng);
    const Vec x = random_input(rng, 5);
    const Vec a = random_input(rng, 5, -0.2, 0.2);
    const AttributionResult r = integrated_gradients(m, x, 1, a, 64);
    double total = 0.0;
    for (double v : r.values) total += v;
    const double fx = mlp_forward(m, x)[1];
    const double fa = mlp_forward(m, a)[1];
    EXPECT_NEAR(r.completeness_gap, std::fabs(total - (fx - fa)), 1e-15);
    EXPECT_EQ(r.m, 64u);
    EXPECT_EQ(r.cls, 1u);
    EXPECT_EQ(r.baseline, a);
}

TEST(IntegratedGradients, BaselineEqualsInputGivesZeros) {
    Rng rng(34);
    MlpModel m = make_mlp({4, 8, 3}, rng);
    const Vec x = random_input(rng, 4);
    const AttributionResult r = integrated_gradients(m, x, 0, x, 10);
    for (double v : r.values) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_LE(r.completeness_gap, 1e-15);
}

TEST(IntegratedGradients, ZeroBaselineOverloadMatchesExplicit) {
    Rng rng(35);
    MlpModel m = make_mlp({4, 8, 3}, rng);
    const Vec x = random_input(rng, 4);
    const AttributionResult a = integrated_gradients(m, x, 2, 25);
    const AttributionResult b = integrated_gradients(m, x, 2, Vec(4, 0.0), 25);
    EXPECT_EQ(a.values, b.values);
}

TEST(IntegratedGradients, RejectsBadArguments) {
    Rng rng(36);
    MlpModel m = make_mlp({4, 8, 3}, rng);
    const Vec x = random_input(rng, 4);
    EXPECT_THROW(integrated_gradients(m, x, 0, Vec(4, 0.0), 0), argument_error);
    EXPECT_THROW(integrated_gradients(m, x, 0, Vec(3, 0.0), 5), argument_error);
}

TEST(NormBound, HoldsForNonnegativeAndThrowsOnNegative) {
    AttributionResult r;
    r.values = {0.5, 0.25, 0.0, 1.0};
    EXPECT_TRUE(norm_bound_check(r));
    r.values = {0.5, -0.1};
    EXPECT_THROW(norm_bound_check(r), argument_error);
}

// The tape replays the same Riemann trace; pushing a cotangent through the
// input side must reproduce cot_i * avg_grad_i exactly.
TEST(IgTape, InputPushMatchesAverageGradient) {
    Rng rng(37);
    MlpModel m = make_mlp({5, 10, 4}, rng);
    const Vec x = random_input(rng, 5);
    const Vec a = Vec(5, 0.0);
    const IgTape tape = record_ig_tape(m, x, 1, a, 16);
    const Vec avg = average_path_gradient(m, x, 1, a, 16);
    Vec cot(5);
    for (auto& v : cot) v = rng.uniform(-1, 1);
    const Vec g = ig_push_input(tape, cot);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g[i], cot[i] * avg[i]);
    for (std::size_t i = 0; i < 5; ++i)
        EXPECT_DOUBLE_EQ(tape.values[i], (x[i] - a[i]) * avg[i]);
}

// Frozen-mask parameter push against finite differences of sum_i cot_i IG_i.
TEST(IgTape, ParamPushMatchesFD) {
    Rng rng(38);
    int done = 0;
    while (done < 20) {
        MlpModel m = make_mlp({4, 6, 3}, rng);
        const Vec x = random_input(rng, 4);
        const std::size_t steps = 7;
        bool safe = true;
        for (std::size_t k = 1; k <= steps && safe; ++k) {
            Vec p = scaled(x, static_cast<double>(k) / steps);
            const ForwardTrace t = mlp_forward_trace(m, p);
            for (double z : t.z[0])
                if (std::fabs(z) < 1e-3) safe = false;
        }
        if (!safe) continue;
        Vec cot(4);
        for (auto& v : cot) v = rng.uniform(-1, 1);

        const IgTape tape = record_ig_tape(m, x, 1, Vec(4, 0.0), steps);
        ParamGrads g(m);
        ig_push_params(m, tape, cot, g);

        auto score = [&](const MlpModel& mm) {
            const AttributionResult r = integrated_gradients(mm, x, 1, steps);
            return dot(cot, r.values);
        };
        const double h = 1e-6;
        for (std::size_t l = 0; l < m.layers.size(); ++l)
            for (int probe = 0; probe < 4; ++probe) {
                const std::size_t idx = rng.below(m.layers[l].w.data.size());
                MlpModel mp = m, mm2 = m;
                mp.layers[l].w.data[idx] += h;
                mm2.layers[l].w.data[idx] -= h;
                const double fd = (score(mp) - score(mm2)) / (2 * h);
                ASSERT_NEAR(g.w[l].data[idx], fd, 1e-4 * std::max(1.0, std::fabs(fd)))
                    << "case " << done;
            }
        ++done;
    }
}
