#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "attrirob/attribution.hpp"
#include "attrirob/errors.hpp"
#include "attrirob/metrics.hpp"
#include "attrirob/mlp.hpp"

namespace attrirob {

enum class LossKind { AT, TRADES, MART, IG_NORM, IG_SUM_NORM, ADVAAT };

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "AT") return LossKind::AT;
    if (s == "TRADES") return LossKind::TRADES;
    if (s == "MART") return LossKind::MART;
    if (s == "IG_NORM") return LossKind::IG_NORM;
    if (s == "IG_SUM_NORM") return LossKind::IG_SUM_NORM;
    if (s == "ADVAAT") return LossKind::ADVAAT;
    throw config_error("unknown loss kind: " + s);
}

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::AT: return "AT";
        case LossKind::TRADES: return "TRADES";
        case LossKind::MART: return "MART";
        case LossKind::IG_NORM: return "IG_NORM";
        case LossKind::IG_SUM_NORM: return "IG_SUM_NORM";
        case LossKind::ADVAAT: return "ADVAAT";
    }
    return "?";
}

struct LossBreakdown {
    double total = 0.0;
    double base = 0.0;      // CE/BCE (+ beta KL where the method has one)
    double reg = 0.0;       // lambda-weighted method regularizer
    double igr = 0.0;       // lambda-weighted IGR add-on
    bool degenerate_attr = false;
};

// 1 - cos(IG(x), IG(x_adv)) with raw signed IG; 0 with flag when degenerate.
inline double igr_term(const MlpModel& model, const Vec& x, const Vec& x_adv, std::size_t cls,
                       std::size_t m, bool* degenerate = nullptr) {
    const Vec a = integrated_gradients(model, x, cls, m).values;
    const Vec b = integrated_gradients(model, x_adv, cls, m).values;
    bool flag = false;
    const double c = cosine_similarity(a, b, &flag);
    if (degenerate) *degenerate = flag;
    return flag ? 0.0 : 1.0 - c;
}

namespace detail {

// Largest non-true-class probability index (MART margin term).
inline std::size_t argmax_excluding(const Vec& p, std::size_t y) {
    std::size_t best = (y == 0) ? 1 : 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (i != y && p[i] > p[best]) best = i;
    return best;
}

struct CosGrad {
    double cos = 0.0;
    Vec da, db;
    bool degenerate = false;
};

inline CosGrad cosine_with_grad(const Vec& a, const Vec& b) {
    CosGrad r;
    const double na = norm2(a), nb = norm2(b);
    if (na < degenerate_norm_floor || nb < degenerate_norm_floor) {
        r.degenerate = true;
        r.da.assign(a.size(), 0.0);
        r.db.assign(b.size(), 0.0);
        return r;
    }
    const double c = dot(a, b) / (na * nb);
    r.cos = c;
    r.da.resize(a.size());
    r.db.resize(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.da[i] = b[i] / (na * nb) - c * a[i] / (na * na);
        r.db[i] = a[i] / (na * nb) - c * b[i] / (nb * nb);
    }
    return r;
}

inline void center(Vec& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
}

}  // namespace detail

// Per-sample loss value and parameter gradient for the Table 1 objectives and
// their IGR-augmented variants. The adversarial input must come from the
// attack matching the kind; this routine only consumes it.
struct SampleLossResult {
    LossBreakdown breakdown;
    ParamGrads grads;
};

inline SampleLossResult loss_value_and_param_grad(const MlpModel& model, LossKind kind,
                                                  bool use_igr, const Vec& x, const Vec& x_adv,
                                                  std::size_t y, double lambda, double beta,
                                                  std::size_t m) {
    SampleLossResult out{LossBreakdown{}, ParamGrads(model)};
    LossBreakdown& L = out.breakdown;
    ParamGrads& G = out.grads;

    const ForwardTrace tr_adv = mlp_forward_trace(model, x_adv);
    const ForwardTrace tr_nat = mlp_forward_trace(model, x);
    const Vec& z_adv = tr_adv.z.back();
    const Vec& z_nat = tr_nat.z.back();
    const Vec p_adv = softmax(z_adv);
    const Vec p_nat = softmax(z_nat);
    const std::size_t C = p_nat.size();

    Vec dz_adv(C, 0.0), dz_nat(C, 0.0);

    switch (kind) {
        case LossKind::AT: {
            L.base = cross_entropy_from_logits(z_adv, y);
            for (std::size_t c = 0; c < C; ++c) dz_adv[c] = p_adv[c] - (c == y ? 1.0 : 0.0);
            break;
        }
        case LossKind::TRADES: {
            const double kl = kl_divergence(p_nat, p_adv);
            L.base = cross_entropy_from_logits(z_adv, y) + beta * kl;
            for (std::size_t c = 0; c < C; ++c) {
                dz_adv[c] = (p_adv[c] - (c == y ? 1.0 : 0.0)) + beta * (p_adv[c] - p_nat[c]);
                dz_nat[c] = beta * p_nat[c] * (std::log(p_nat[c] / p_adv[c]) - kl);
            }
            break;
        }
        case LossKind::MART: {
            const std::size_t j = detail::argmax_excluding(p_adv, y);
            const double margin = -std::log(std::max(1.0 - p_adv[j], 1e-300));
            const double kl = kl_divergence(p_nat, p_adv);
            const double w = 1.0 - p_nat[y];
            L.base = cross_entropy_from_logits(z_adv, y) + margin + beta * kl * w;
            const double mj = p_adv[j] / std::max(1.0 - p_adv[j], 1e-300);
            for (std::size_t c = 0; c < C; ++c) {
                dz_adv[c] = (p_adv[c] - (c == y ? 1.0 : 0.0)) +
                            mj * ((c == j ? 1.0 : 0.0) - p_adv[c]) +
                            beta * w * (p_adv[c] - p_nat[c]);
                dz_nat[c] = beta * w * p_nat[c] * (std::log(p_nat[c] / p_adv[c]) - kl) -
                            beta * kl * p_nat[y] * ((c == y ? 1.0 : 0.0) - p_nat[c]);
            }
            break;
        }
        case LossKind::IG_NORM: {
            L.base = cross_entropy_from_logits(z_nat, y);
            for (std::size_t c = 0; c < C; ++c) dz_nat[c] = p_nat[c] - (c == y ? 1.0 : 0.0);
            break;
        }
        case LossKind::IG_SUM_NORM:
        case LossKind::ADVAAT: {
            L.base = cross_entropy_from_logits(z_adv, y);
            for (std::size_t c = 0; c < C; ++c) dz_adv[c] = p_adv[c] - (c == y ? 1.0 : 0.0);
            break;
        }
    }

    const bool needs_ig = use_igr || kind == LossKind::IG_NORM ||
                          kind == LossKind::IG_SUM_NORM || kind == LossKind::ADVAAT;
    if (needs_ig) {
        const Vec baseline(x.size(), 0.0);
        const IgTape tape_nat = record_ig_tape(model, x, y, baseline, m);
        const IgTape tape_adv = record_ig_tape(model, x_adv, y, baseline, m);
        const Vec& g1 = tape_nat.values;
        const Vec& g2 = tape_adv.values;
        Vec cot1(g1.size(), 0.0), cot2(g2.size(), 0.0);

        if (kind == LossKind::IG_NORM || kind == LossKind::IG_SUM_NORM) {
            double l1 = 0.0;
            for (std::size_t i = 0; i < g1.size(); ++i) {
                const double diff = g1[i] - g2[i];
                l1 += std::fabs(diff);
                const double s = (diff > 0.0) - (diff < 0.0);
                cot1[i] += lambda * s;
                cot2[i] -= lambda * s;
            }
            L.reg = lambda * l1;
        } else if (kind == LossKind::ADVAAT) {
            Vec c1 = g1, c2 = g2;
            detail::center(c1);
            detail::center(c2);
            auto cg = detail::cosine_with_grad(c1, c2);
            if (cg.degenerate) {
                L.degenerate_attr = true;
            } else {
                const double pcl = 1.0 - (cg.cos + 1.0) / 2.0;
                L.reg = lambda * pcl;
                detail::center(cg.da);  // chain rule through the centering projection
                detail::center(cg.db);
                for (std::size_t i = 0; i < g1.size(); ++i) {
                    cot1[i] += -0.5 * lambda * cg.da[i];
                    cot2[i] += -0.5 * lambda * cg.db[i];
                }
            }
        }

        if (use_igr) {
            auto cg = detail::cosine_with_grad(g1, g2);
            if (cg.degenerate) {
                L.degenerate_attr = true;
            } else {
                L.igr = lambda * (1.0 - cg.cos);
                for (std::size_t i = 0; i < g1.size(); ++i) {
                    cot1[i] -= lambda * cg.da[i];
                    cot2[i] -= lambda * cg.db[i];
                }
            }
        }

        ig_push_params(model, tape_nat, cot1, G);
        ig_push_params(model, tape_adv, cot2, G);
    }

    bool any_nat = false, any_adv = false;
    for (double v : dz_nat) any_nat = any_nat || v != 0.0;
    for (double v : dz_adv) any_adv = any_adv || v != 0.0;
    if (any_adv) backprop_from_logits(model, tr_adv, dz_adv, G);
    if (any_nat) backprop_from_logits(model, tr_nat, dz_nat, G);

    L.total = L.base + L.reg + L.igr;
    return out;
}

// Value-only variant (no gradient work).
inline LossBreakdown compute_loss(const MlpModel& model, LossKind kind, bool use_igr,
                                  const Vec& x, const Vec& x_adv, std::size_t y, double lambda,
                                  double beta, std::size_t m) {
    LossBreakdown L;
    const Vec z_adv = mlp_forward(model, x_adv);
    const Vec z_nat = mlp_forward(model, x);
    const Vec p_adv = softmax(z_adv);
    const Vec p_nat = softmax(z_nat);

    switch (kind) {
        case LossKind::AT:
            L.base = cross_entropy_from_logits(z_adv, y);
            break;
        case LossKind::TRADES:
            L.base = cross_entropy_from_logits(z_adv, y) + beta * kl_divergence(p_nat, p_adv);
            break;
        case LossKind::MART: {
            const std::size_t j = detail::argmax_excluding(p_adv, y);
            L.base = cross_entropy_from_logits(z_adv, y) -
                     std::log(std::max(1.0 - p_adv[j], 1e-300)) +
                     beta * kl_divergence(p_nat, p_adv) * (1.0 - p_nat[y]);
            break;
        }
        case LossKind::IG_NORM:
            L.base = cross_entropy_from_logits(z_nat, y);
            break;
        case LossKind::IG_SUM_NORM:
        case LossKind::ADVAAT:
            L.base = cross_entropy_from_logits(z_adv, y);
            break;
    }

    const bool needs_ig = use_igr || kind == LossKind::IG_NORM ||
                          kind == LossKind::IG_SUM_NORM || kind == LossKind::ADVAAT;
    if (needs_ig) {
        const Vec g1 = integrated_gradients(model, x, y, m).values;
        const Vec g2 = integrated_gradients(model, x_adv, y, m).values;
        if (kind == LossKind::IG_NORM || kind == LossKind::IG_SUM_NORM) {
            double l1 = 0.0;
            for (std::size_t i = 0; i < g1.size(); ++i) l1 += std::fabs(g1[i] - g2[i]);
            L.reg = lambda * l1;
        } else if (kind == LossKind::ADVAAT) {
            bool defined = true;
            const double pcc = pearson_correlation(g1, g2, &defined);
            if (!defined)
                L.degenerate_attr = true;
            else
                L.reg = lambda * (1.0 - (pcc + 1.0) / 2.0);
        }
        if (use_igr) {
            bool flag = false;
            const double c = cosine_similarity(g1, g2, &flag);
            if (flag)
                L.degenerate_attr = true;
            else
                L.igr = lambda * (1.0 - c);
        }
    }

    L.total = L.base + L.reg + L.igr;
    return L;
}

}  // namespace attrirob
