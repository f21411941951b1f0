#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "attrirob/attribution.hpp"
#include "attrirob/errors.hpp"
#include "attrirob/losses.hpp"
#include "attrirob/metrics.hpp"
#include "attrirob/mlp.hpp"
#include "attrirob/rng.hpp"

namespace attrirob {

struct AttackConfig {
    double epsilon = 0.3;
    double alpha = -1.0;  // <= 0 means epsilon/10
    std::size_t steps = 200;
    std::size_t restarts = 5;
    std::size_t k = 10;
    double clip_lo = 0.0;
    double clip_hi = 1.0;
    std::size_t m = 50;  // IG steps inside attribution-aware objectives

    AttackConfig resolved() const {
        AttackConfig c = *this;
        if (c.alpha <= 0.0) c.alpha = c.epsilon / 10.0;
        return c;
    }

    void validate() const {
        if (epsilon < 0.0) throw config_error("attack: epsilon must be >= 0");
        if (steps > 0 && epsilon > 0.0 && alpha <= 0.0)
            throw config_error("attack: alpha must be > 0 when steps > 0");
        if (clip_lo >= clip_hi) throw config_error("attack: clip range requires lo < hi");
        if (restarts == 0) throw config_error("attack: restarts must be positive");
        if (k == 0) throw config_error("attack: k must be positive");
        if (m == 0) throw config_error("attack: m must be positive");
    }
};

struct AttackReport {
    Vec perturbed;
    bool label_preserved = true;
    bool naturally_misclassified = false;
    std::vector<MetricReport> per_restart_metrics;
    std::size_t steps_taken = 0;
};

enum class PgdObjective { cross_entropy, kl_to_natural, igr_cosine };

inline PgdObjective pgd_objective_from_string(const std::string& s) {
    if (s == "cross_entropy") return PgdObjective::cross_entropy;
    if (s == "kl_to_natural") return PgdObjective::kl_to_natural;
    if (s == "igr_cosine") return PgdObjective::igr_cosine;
    throw config_error("unknown pgd objective: " + s);
}

namespace detail {

inline void project_ball_clip(Vec& v, const Vec& x, double eps, double lo, double hi) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::min(std::max(v[i], x[i] - eps), x[i] + eps);
        v[i] = std::min(std::max(v[i], lo), hi);
    }
}

// Ascent direction of the chosen PGD objective at x_adv.
inline Vec pgd_objective_grad(const MlpModel& model, PgdObjective obj, const Vec& x,
                              const Vec& x_adv, std::size_t y, std::size_t m) {
    switch (obj) {
        case PgdObjective::cross_entropy: {
            const ForwardTrace tr = mlp_forward_trace(model, x_adv);
            Vec dz = softmax(tr.z.back());
            dz[y] -= 1.0;
            return input_gradient_from_trace(model, tr, dz);
        }
        case PgdObjective::kl_to_natural: {
            const Vec p_nat = softmax(mlp_forward(model, x));
            const ForwardTrace tr = mlp_forward_trace(model, x_adv);
            const Vec p_adv = softmax(tr.z.back());
            Vec dz(p_adv.size());
            for (std::size_t c = 0; c < dz.size(); ++c) dz[c] = p_adv[c] - p_nat[c];
            return input_gradient_from_trace(model, tr, dz);
        }
        case PgdObjective::igr_cosine: {
            const Vec baseline(x.size(), 0.0);
            const Vec a = integrated_gradients(model, x, y, m).values;
            const IgTape tape = record_ig_tape(model, x_adv, y, baseline, m);
            const Vec& b = tape.values;
            const double na = norm2(a), nb = norm2(b);
            if (na < degenerate_norm_floor || nb < degenerate_norm_floor)
                return Vec(x.size(), 0.0);
            const double c = dot(a, b) / (na * nb);
            Vec cot(b.size());  // d(1 - cos)/d IG(x_adv)
            for (std::size_t i = 0; i < b.size(); ++i)
                cot[i] = -(a[i] / (na * nb) - c * b[i] / (nb * nb));
            return ig_push_input(tape, cot);
        }
    }
    throw argument_error("unknown pgd objective");
}

}  // namespace detail

inline Vec fgsm(const MlpModel& model, const Vec& x, std::size_t y, double epsilon,
                std::pair<double, double> clip_range = {0.0, 1.0}) {
    if (x.size() != model.input_dim()) throw shape_error("fgsm: input dimension mismatch");
    if (epsilon < 0.0) throw argument_error("fgsm: epsilon must be >= 0");
    const ForwardTrace tr = mlp_forward_trace(model, x);
    Vec dz = softmax(tr.z.back());
    dz[y] -= 1.0;
    const Vec g = input_gradient_from_trace(model, tr, dz);
    Vec out = x;
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] += epsilon * ((g[i] > 0.0) - (g[i] < 0.0));
    detail::project_ball_clip(out, x, epsilon, clip_range.first, clip_range.second);
    return out;
}

inline Vec pgd(const MlpModel& model, PgdObjective obj, const Vec& x, std::size_t y,
               const AttackConfig& config, std::uint64_t seed) {
    if (x.size() != model.input_dim()) throw shape_error("pgd: input dimension mismatch");
    const AttackConfig c = config.resolved();
    c.validate();
    Rng rng(seed);
    Vec cur = x;
    for (double& v : cur) v += rng.uniform(-c.epsilon, c.epsilon);
    detail::project_ball_clip(cur, x, c.epsilon, c.clip_lo, c.clip_hi);
    if (c.epsilon == 0.0) return cur;
    for (std::size_t s = 0; s < c.steps; ++s) {
        const Vec g = detail::pgd_objective_grad(model, obj, x, cur, y, c.m);
        for (std::size_t i = 0; i < cur.size(); ++i)
            cur[i] += c.alpha * ((g[i] > 0.0) - (g[i] < 0.0));
        detail::project_ball_clip(cur, x, c.epsilon, c.clip_lo, c.clip_hi);
    }
    return cur;
}

// IFIA with top-k dissimilarity: ascends D(x~) = -sum_{i in TopK(|IG(x)|)} |IG(x~)_i|
// under the constraint predict(x~) = y; label-violating iterates revert.
inline AttackReport ifia_topk(const MlpModel& model, const Vec& x, std::size_t y,
                              const AttackConfig& config, std::uint64_t seed) {
    if (x.size() != model.input_dim()) throw shape_error("ifia: input dimension mismatch");
    const AttackConfig c = config.resolved();
    c.validate();

    AttackReport report;
    report.perturbed = x;
    if (predict(model, x) != y) {
        report.naturally_misclassified = true;
        return report;
    }

    const Vec baseline(x.size(), 0.0);
    const Vec ig_nat = integrated_gradients(model, x, y, c.m).values;
    const std::vector<std::size_t> topk = topk_indices(ig_nat, c.k, true);
    std::vector<char> in_topk(x.size(), 0);
    for (std::size_t i : topk) in_topk[i] = 1;

    Rng rng(seed);
    double worst_topk = 2.0;
    for (std::size_t r = 0; r < c.restarts; ++r) {
        Rng sub = rng.derive(r);
        Vec cur = x;
        for (double& v : cur) v += sub.uniform(-c.epsilon, c.epsilon);
        detail::project_ball_clip(cur, x, c.epsilon, c.clip_lo, c.clip_hi);
        if (predict(model, cur) != y) cur = x;

        std::size_t accepted = 0;
        if (c.epsilon > 0.0) {
            for (std::size_t s = 0; s < c.steps; ++s) {
                const IgTape tape = record_ig_tape(model, cur, y, baseline, c.m);
                Vec cot(x.size(), 0.0);
                for (std::size_t i = 0; i < x.size(); ++i)
                    if (in_topk[i])
                        cot[i] = -((tape.values[i] > 0.0) - (tape.values[i] < 0.0));
                const Vec g = ig_push_input(tape, cot);
                Vec next = cur;
                for (std::size_t i = 0; i < next.size(); ++i)
                    next[i] += c.alpha * ((g[i] > 0.0) - (g[i] < 0.0));
                detail::project_ball_clip(next, x, c.epsilon, c.clip_lo, c.clip_hi);
                if (predict(model, next) != y) break;  // deterministic: same proposal forever
                cur = std::move(next);
                ++accepted;
            }
        }

        const Vec ig_adv = integrated_gradients(model, cur, y, c.m).values;
        MetricReport mr = compare_attributions(ig_nat, ig_adv, c.k, true);
        report.per_restart_metrics.push_back(mr);
        if (mr.topk < worst_topk) {
            worst_topk = mr.topk;
            report.perturbed = cur;
            report.steps_taken = accepted;
        }
    }
    report.label_preserved = predict(model, report.perturbed) == y;
    return report;
}

}  // namespace attrirob
