#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <unordered_set>
#include <utility>
#include <vector>

#include "attrirob/errors.hpp"
#include "attrirob/metrics.hpp"
#include "attrirob/rng.hpp"
#include "attrirob/tensor.hpp"

namespace attrirob {

// The two proof operations of Theorem 1.
struct SequenceStep {
    enum class Kind { exchange, scale };
    Kind kind = Kind::scale;
    std::size_t i = 0;
    std::size_t j = 0;     // exchange partner
    double alpha = 1.0;    // scale factor, in (0, 1]
};

inline Vec apply_step(const Vec& x, const SequenceStep& step) {
    Vec out = x;
    if (step.i >= x.size()) throw argument_error("apply_step: index out of range");
    if (step.kind == SequenceStep::Kind::exchange) {
        if (step.j >= x.size()) throw argument_error("apply_step: index out of range");
        std::swap(out[step.i], out[step.j]);
    } else {
        if (!(step.alpha > 0.0 && step.alpha <= 1.0))
            throw argument_error("apply_step: alpha must be in (0, 1]");
        out[step.i] *= step.alpha;
    }
    return out;
}

struct SimulationSample {
    double cosine = 0.0;
    double tau = 0.0;
};

struct SimulationResult {
    std::vector<SimulationSample> samples;
    double association = 0.0;
    bool association_defined = false;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
};

// Fig. 2a: (cos, tau) against a fixed random reference over i.i.d. uniform
// vectors, plus the Pearson association between the two columns.
inline SimulationResult simulate_tau_cos(std::size_t dim, std::size_t n_samples,
                                         std::uint64_t seed) {
    if (dim < 2) throw argument_error("simulate_tau_cos: dim must be >= 2");
    SimulationResult res;
    res.dim = dim;
    res.seed = seed;
    Rng rng(seed);
    Vec ref(dim);
    for (double& v : ref) v = rng.uniform();
    Vec col_cos, col_tau;
    col_cos.reserve(n_samples);
    col_tau.reserve(n_samples);
    Vec v(dim);
    for (std::size_t t = 0; t < n_samples; ++t) {
        for (double& e : v) e = rng.uniform();
        SimulationSample s;
        s.cosine = cosine_similarity(v, ref);
        s.tau = kendall_tau(v, ref, KendallAlgorithm::fast);
        res.samples.push_back(s);
        col_cos.push_back(s.cosine);
        col_tau.push_back(s.tau);
    }
    if (n_samples >= 2) {
        bool defined = false;
        res.association = pearson_correlation(col_cos, col_tau, &defined);
        res.association_defined = defined;
    }
    return res;
}

namespace detail {

// Best-first search over scale/exchange moves toward the rescaled target
// lam * Xp. States keep cos(v, Y) non-increasing; per unfinished coordinate
// the admissible shrink interval follows from F(z) = (Cs + z y_i) /
// (||Y|| sqrt(Cn + z^2)), which peaks at z* = y_i Cn / Cs: left of the peak
// any shrink lowers F, right of it the admissible landing zone is bounded by
// the other root z_c of F(z) = F(u). Since cos only ever decreases and must
// end at exactly cos(Xp, Y), states below that level are dead and get pruned
// (c_floor), and landings are clamped to the floor level set.
struct SeqSearch {
    const Vec& X;
    const Vec& Xp;
    Vec yhat;                 // Y / ||Y||
    std::size_t d;
    std::size_t budget;
    double c_floor = -2.0;
    std::vector<double> left_fr{0.6, 0.25};
    std::vector<double> park_fr{0.995, 0.7, 0.3};
    static constexpr double tol = 1e-13;

    struct Node {
        Vec v;
        double s = 0.0, n2 = 0.0, c = 0.0;
        std::int32_t parent = -1;
        std::int32_t depth = 0;
        SequenceStep step;
    };

    struct HeapEntry {
        std::int32_t rem;
        double negc;
        std::uint64_t order;
        std::int32_t node;
        bool operator>(const HeapEntry& o) const {
            if (rem != o.rem) return rem > o.rem;
            if (negc != o.negc) return negc > o.negc;
            return order > o.order;
        }
    };

    std::vector<Node> nodes;

    void eval(Node& n) const {
        n.s = dot(n.v, yhat);
        n.n2 = dot(n.v, n.v);
        n.c = n.s / std::sqrt(n.n2);
    }

    std::int32_t remaining(const Vec& v, const Vec& target) const {
        std::int32_t r = 0;
        for (std::size_t i = 0; i < d; ++i) r += v[i] != target[i];
        return r;
    }

    std::uint64_t state_key(const Vec& v) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (double e : v) {
            const auto q = static_cast<std::int64_t>(
                std::llround(std::log(std::max(e, 1e-300)) * 1e9));
            for (int b = 0; b < 8; ++b) {
                h ^= static_cast<unsigned char>(q >> (8 * b));
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    std::optional<std::vector<SequenceStep>> reconstruct(std::int32_t idx) const {
        std::vector<SequenceStep> steps;
        for (std::int32_t k = idx; k >= 0 && nodes[k].parent >= 0; k = nodes[k].parent)
            steps.push_back(nodes[k].step);
        std::reverse(steps.begin(), steps.end());
        return steps;
    }

    std::optional<std::vector<SequenceStep>> run(double lam, std::size_t pop_cap,
                                                 std::size_t store_cap, bool use_exchange) {
        Vec target(d);
        for (std::size_t i = 0; i < d; ++i) target[i] = lam * Xp[i];
        if (use_exchange) {
            // Exchanges can route any value anywhere, so reachability is
            // domination of the sorted targets by the sorted starts.
            Vec xs = X, ts = target;
            std::sort(xs.begin(), xs.end(), std::greater<>());
            std::sort(ts.begin(), ts.end(), std::greater<>());
            for (std::size_t i = 0; i < d; ++i)
                if (ts[i] > xs[i]) return std::nullopt;
        } else {
            for (std::size_t i = 0; i < d; ++i)
                if (target[i] > X[i]) return std::nullopt;  // shrink-only reachability
        }

        nodes.clear();
        Node root;
        root.v = X;
        eval(root);
        nodes.push_back(root);
        if (remaining(root.v, target) == 0) return std::vector<SequenceStep>{};

        std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> pq;
        std::unordered_set<std::uint64_t> seen;
        std::uint64_t order = 0;
        pq.push({remaining(root.v, target), -root.c, order++, 0});
        seen.insert(state_key(root.v));

        std::vector<double> cands;
        std::size_t pops = 0;
        while (!pq.empty() && pops < pop_cap && nodes.size() < store_cap) {
            const HeapEntry top = pq.top();
            pq.pop();
            ++pops;
            const Node cur = nodes[top.node];  // copy: nodes vector may grow
            if (static_cast<std::size_t>(cur.depth) >= budget) continue;

            auto try_child = [&](Node&& child) -> std::optional<std::vector<SequenceStep>> {
                eval(child);
                if (child.c > cur.c + tol) return std::nullopt;
                if (child.c < c_floor) return std::nullopt;  // below the final level set
                const std::int32_t rem = remaining(child.v, target);
                child.parent = top.node;
                child.depth = cur.depth + 1;
                if (rem == 0) {
                    nodes.push_back(std::move(child));
                    return reconstruct(static_cast<std::int32_t>(nodes.size() - 1));
                }
                const std::uint64_t key = state_key(child.v);
                if (!seen.insert(key).second) return std::nullopt;
                nodes.push_back(std::move(child));
                pq.push({rem, -nodes.back().c, order++,
                         static_cast<std::int32_t>(nodes.size() - 1)});
                return std::nullopt;
            };

            for (std::size_t i = 0; i < d; ++i) {
                const double u = cur.v[i];
                const double ti = target[i];
                if (u == ti) continue;
                const double yi = yhat[i];
                const double Cs = cur.s - u * yi;
                const double Cn = cur.n2 - u * u;
                const double zstar =
                    Cs > 0.0 ? yi * Cn / Cs : std::numeric_limits<double>::infinity();

                cands.clear();
                cands.push_back(ti);  // the finishing move; cos check filters it

                // Smallest landing that stays on or above the floor level set:
                // lower root of F(z) = c_floor.
                double zfloor = 0.0;
                if (c_floor > -1.0) {
                    const double A = yi * yi - c_floor * c_floor;
                    const double B = 2.0 * Cs * yi;
                    const double Cq = Cs * Cs - c_floor * c_floor * Cn;
                    if (std::fabs(A) > 1e-300) {
                        const double disc = B * B - 4.0 * A * Cq;
                        if (disc >= 0.0) {
                            const double sq = std::sqrt(disc);
                            const double rlo = std::min((-B - sq) / (2.0 * A),
                                                        (-B + sq) / (2.0 * A));
                            if (rlo > 0.0 && rlo <= zstar) zfloor = rlo;
                        }
                    }
                }

                if (u <= zstar) {
                    if (zfloor > 0.0 && zfloor < u * (1.0 - 1e-9))
                        cands.push_back(std::max(ti, zfloor));
                    for (double f : left_fr) {
                        const double z = std::max({ti, u * f, zfloor});
                        if (z < u * (1.0 - 1e-9)) cands.push_back(z);
                    }
                } else {
                    // other root of F(z) = F(u): A z^2 + B z + C = 0
                    const double Fu = cur.c;
                    const double A = yi * yi - Fu * Fu;
                    const double B = 2.0 * Cs * yi;
                    const double Cq = Cs * Cs - Fu * Fu * Cn;
                    double zhi = -1.0;
                    if (std::fabs(A) > 1e-300) {
                        const double disc = B * B - 4.0 * A * Cq;
                        if (disc >= 0.0) {
                            const double sq = std::sqrt(disc);
                            for (double r : {(-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)})
                                if (r >= 0.0 && r <= zstar * (1.0 + 1e-12) &&
                                    r < u * (1.0 - 1e-9))
                                    zhi = std::max(zhi, r);
                        }
                    } else if (B > 0.0) {
                        const double r = -Cq / B;
                        if (r >= 0.0 && r < u * (1.0 - 1e-9)) zhi = r;
                    }
                    if (zhi >= 0.0) {
                        if (zfloor > 0.0 && zfloor <= zhi && zfloor > ti)
                            cands.push_back(zfloor);
                        for (double f : park_fr) {
                            const double z = std::max(zhi * f, zfloor);
                            if (z > ti && z <= zhi) cands.push_back(z);
                        }
                    }
                }

                for (double z : cands) {
                    if (!(z > 0.0) || z >= u) continue;
                    Node child;
                    child.v = cur.v;
                    child.v[i] = z;
                    child.step = SequenceStep{SequenceStep::Kind::scale, i, 0, z / u};
                    if (auto hit = try_child(std::move(child))) return hit;
                }
            }

            if (use_exchange) {
                for (std::size_t i = 0; i + 1 < d; ++i)
                    for (std::size_t j = i + 1; j < d; ++j) {
                        const double vi = cur.v[i], vj = cur.v[j];
                        if (vi == vj || (vi - vj) * (yhat[i] - yhat[j]) < 0.0) continue;
                        if (vj < target[i] || vi < target[j]) continue;  // stranding
                        Node child;
                        child.v = cur.v;
                        std::swap(child.v[i], child.v[j]);
                        child.step = SequenceStep{SequenceStep::Kind::exchange, i, j, 1.0};
                        if (auto hit = try_child(std::move(child))) return hit;
                    }
            }
        }
        return std::nullopt;
    }
};

}  // namespace detail

// Search for Theorem 1 proof steps carrying X to Xp (up to one global
// positive rescale of Xp) with cos(x, Y) non-increasing along the way.
// Deterministic; the seed parameter is part of the interface for strategy
// variants and is unused by this search.
inline std::optional<std::vector<SequenceStep>> find_monotone_sequence(
    const Vec& X, const Vec& Xp, const Vec& Y, std::size_t budget, std::uint64_t seed = 0) {
    (void)seed;
    if (X.size() != Xp.size() || X.size() != Y.size())
        throw shape_error("find_monotone_sequence: dimension mismatch");
    if (X.empty()) return std::vector<SequenceStep>{};
    for (double v : Y)
        if (!(v > 0.0)) throw argument_error("find_monotone_sequence: Y must be positive");
    for (std::size_t i = 0; i < X.size(); ++i)
        if (X[i] < 0.0 || Xp[i] < 0.0)
            throw argument_error("find_monotone_sequence: X, Xp must be nonnegative");

    if (X == Xp) return std::vector<SequenceStep>{};

    const std::size_t d = X.size();
    detail::SeqSearch search{X, Xp, {}, d, budget};
    const double ny = norm2(Y);
    search.yhat = scaled(Y, 1.0 / ny);
    const double nxp = norm2(Xp);
    if (nxp > 0.0) search.c_floor = dot(Xp, search.yhat) / nxp - 1e-9;
    if (d <= 5) {
        search.left_fr = {0.7, 0.45, 0.2};
        search.park_fr = {0.999, 0.95, 0.8, 0.6, 0.4, 0.2};
    }

    // Largest admissible global rescale; shrink slightly so the binding
    // coordinate finishes with alpha strictly below 1. With exchanges values
    // can be routed across slots, so the bound loosens to the sorted ratio.
    double qmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d; ++i) {
        if (Xp[i] == 0.0) {
            if (X[i] != 0.0) return std::nullopt;  // zero pattern not reachable exactly
            continue;
        }
        qmin = std::min(qmin, X[i] / Xp[i]);
    }
    if (!std::isfinite(qmin)) return std::nullopt;
    qmin *= 1.0 - 1e-12;
    if (!(qmin > 0.0)) return std::nullopt;

    Vec xs = X, xps = Xp;
    std::sort(xs.begin(), xs.end(), std::greater<>());
    std::sort(xps.begin(), xps.end(), std::greater<>());
    double qsort = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d; ++i)
        if (xps[i] > 0.0) qsort = std::min(qsort, xs[i] / xps[i]);
    qsort *= 1.0 - 1e-12;

    constexpr double fractions[] = {1.0,  0.975, 0.95, 0.9,   0.85, 0.775, 0.7,  0.6,
                                    0.5,  0.42,  0.35, 0.27,  0.2,  0.15,  0.1,  0.075,
                                    0.05, 0.035, 0.02, 0.012, 0.005, 0.002};
    for (double lf : fractions)
        if (auto hit = search.run(qmin * lf, 12000, 400000, false)) return hit;

    std::vector<double> lams;
    for (double lf : fractions) lams.push_back(qmin * lf);
    for (double lf : {1.0, 0.8, 0.6, 0.45, 0.3})
        if (qsort * lf > qmin) lams.push_back(qsort * lf);
    std::sort(lams.begin(), lams.end(), std::greater<>());
    for (double lam : lams)
        if (auto hit = search.run(lam, 25000, 400000, true)) return hit;
    return std::nullopt;
}

inline std::size_t default_sequence_budget(std::size_t d) { return 10 * d * d; }

enum class SequenceOp { exchange, scale };

struct TauOrderingResult {
    double mean_diff = 0.0;
    double std_error = 0.0;
    std::size_t kept = 0;
    bool power_warning = false;
};

// Theorem 1 empirical content: conditioned on cos(X, Y) >= cos(X', Y) with
// X' one proof op away from X, mean tau(X, Y) - tau(X', Y) over exponential Y.
inline TauOrderingResult conditional_tau_ordering(std::size_t dim, std::size_t trials,
                                                  SequenceOp op_kind, std::uint64_t seed) {
    if (dim < 2) throw argument_error("conditional_tau_ordering: dim must be >= 2");
    TauOrderingResult res;
    res.power_warning = trials < 100;
    Rng rng(seed);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng sub = rng.derive(t);
        Vec x(dim);
        for (double& v : x) v = sub.uniform();
        SequenceStep step;
        if (op_kind == SequenceOp::exchange) {
            step.kind = SequenceStep::Kind::exchange;
            step.i = static_cast<std::size_t>(sub.below(dim));
            step.j = static_cast<std::size_t>(sub.below(dim - 1));
            if (step.j >= step.i) ++step.j;
        } else {
            step.kind = SequenceStep::Kind::scale;
            step.i = static_cast<std::size_t>(sub.below(dim));
            double a = sub.uniform();
            while (a <= 0.0) a = sub.uniform();
            step.alpha = a;
        }
        const Vec xp = apply_step(x, step);
        Vec y(dim);
        for (double& v : y) v = sub.exponential(1.0);
        if (cosine_similarity(x, y) < cosine_similarity(xp, y)) continue;
        const double diff = kendall_tau(x, y) - kendall_tau(xp, y);
        sum += diff;
        sumsq += diff * diff;
        ++res.kept;
    }
    if (res.kept > 0) {
        const double n = static_cast<double>(res.kept);
        res.mean_diff = sum / n;
        const double var = std::max(0.0, sumsq / n - res.mean_diff * res.mean_diff);
        res.std_error = res.kept > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    }
    return res;
}

struct PearsonInstability {
    double rho_plus = 0.0;
    double rho_minus = 0.0;
    Vec x;
    Vec eta;
};

// Appendix B: a small-variance x where adding vs subtracting the same tiny
// eta flips the Pearson correlation from near +1 to near -1. With
// x = 1 + a and eta = 1.5 a, centered parts are a, 2.5a and -0.5a.
inline std::optional<PearsonInstability> pearson_instability_demo(std::size_t dim,
                                                                  std::uint64_t seed) {
    if (dim < 3) throw argument_error("pearson_instability_demo: dim must be >= 3");
    Rng rng(seed);
    double spread = 1e-5;
    for (int attempt = 0; attempt < 32; ++attempt, spread *= 0.5) {
        Vec a(dim);
        bool nonzero = false;
        for (double& v : a) {
            v = rng.normal(0.0, spread);
            nonzero = nonzero || v != 0.0;
        }
        if (!nonzero) continue;
        PearsonInstability out;
        out.x.assign(dim, 1.0);
        out.eta.resize(dim);
        Vec plus(dim), minus(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            out.x[i] += a[i];
            out.eta[i] = 1.5 * a[i];
            plus[i] = out.x[i] + out.eta[i];
            minus[i] = out.x[i] - out.eta[i];
        }
        double mean = 0.0, sq = 0.0;
        for (double v : out.x) {
            mean += v;
            sq += v * v;
        }
        mean /= static_cast<double>(dim);
        const double var = sq / static_cast<double>(dim) - mean * mean;
        if (var > 1e-6 * mean * mean) continue;
        bool def_p = false, def_m = false;
        out.rho_plus = pearson_correlation(out.x, plus, &def_p);
        out.rho_minus = pearson_correlation(out.x, minus, &def_m);
        if (def_p && def_m && out.rho_plus > 0.9 && out.rho_minus < -0.9) return out;
    }
    return std::nullopt;
}

struct SequenceTriple {
    Vec x;
    Vec xp;
    Vec y;
};

// Attribution-like trial ensemble for the sequence search: Y exponential(1)
// per the proof, X and Xp multiplicative-noise distortions of Y (the
// theorem's setting compares attributions of a natural/perturbed pair, both
// correlated with Y). Oriented so cos(X, Y) >= cos(Xp, Y).
inline SequenceTriple sample_sequence_triple(std::size_t d, Rng& rng, double sigma_near = 0.25,
                                             double sigma_far = 0.5) {
    SequenceTriple t;
    t.x.resize(d);
    t.xp.resize(d);
    t.y.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        t.y[i] = rng.exponential(1.0);
        t.x[i] = t.y[i] * std::exp(sigma_near * rng.normal());
        t.xp[i] = t.y[i] * std::exp(sigma_far * rng.normal());
    }
    if (cosine_similarity(t.x, t.y) < cosine_similarity(t.xp, t.y)) std::swap(t.x, t.xp);
    return t;
}

struct SequenceSearchStats {
    std::size_t trials = 0;
    std::size_t successes = 0;
    double success_rate = 0.0;
};

inline SequenceSearchStats sequence_success_rate(std::size_t trials, std::uint64_t seed,
                                                 std::size_t max_d = 10) {
    if (max_d < 2) throw argument_error("sequence_success_rate: max_d must be >= 2");
    SequenceSearchStats st;
    st.trials = trials;
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t d = 2 + t % (max_d - 1);
        Rng sub = rng.derive(t);
        const SequenceTriple trip = sample_sequence_triple(d, sub);
        if (find_monotone_sequence(trip.x, trip.xp, trip.y, default_sequence_budget(d)))
            ++st.successes;
    }
    st.success_rate =
        trials == 0 ? 0.0 : static_cast<double>(st.successes) / static_cast<double>(trials);
    return st;
}

}  // namespace attrirob
