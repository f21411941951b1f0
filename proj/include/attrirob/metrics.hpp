#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "attrirob/errors.hpp"
#include "attrirob/tensor.hpp"

namespace attrirob {

enum class KendallAlgorithm { naive, fast };

namespace detail {

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// Merge sort counting strict inversions of the second key.
inline std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf,
                                     std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            inv += static_cast<std::int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
              buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
}

template <typename Key>
inline std::int64_t tie_pair_count(std::vector<Key>& keys) {
    std::sort(keys.begin(), keys.end());
    std::int64_t pairs = 0;
    std::size_t run = 1;
    for (std::size_t i = 1; i <= keys.size(); ++i) {
        if (i < keys.size() && keys[i] == keys[i - 1]) {
            ++run;
        } else {
            pairs += static_cast<std::int64_t>(run) * static_cast<std::int64_t>(run - 1) / 2;
            run = 1;
        }
    }
    return pairs;
}

}  // namespace detail

// Kendall's tau with the fixed d(d-1)/2 denominator and sign(0) = 0.
inline double kendall_tau(const Vec& a, const Vec& b,
                          KendallAlgorithm algorithm = KendallAlgorithm::fast) {
    check_same_length(a, b, "kendall_tau");
    const std::size_t d = a.size();
    if (d < 2) throw argument_error("kendall_tau: need at least 2 entries");
    const std::int64_t n0 = static_cast<std::int64_t>(d) * static_cast<std::int64_t>(d - 1) / 2;

    if (algorithm == KendallAlgorithm::naive) {
        std::int64_t s = 0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j)
                s += detail::sign_of(a[i] - a[j]) * detail::sign_of(b[i] - b[j]);
        return static_cast<double>(s) / static_cast<double>(n0);
    }

    // Knight's algorithm: numerator = n0 - Ta - Tb + Tab - 2*(strict inversions
    // of b after sorting by (a, b)).
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
        if (a[i] != a[j]) return a[i] < a[j];
        return b[i] < b[j];
    });

    std::vector<double> bs(d);
    for (std::size_t i = 0; i < d; ++i) bs[i] = b[idx[i]];

    std::vector<double> ka(a);
    std::int64_t ta = detail::tie_pair_count(ka);
    std::vector<double> kb(b);
    std::int64_t tb = detail::tie_pair_count(kb);
    std::vector<std::pair<double, double>> kab(d);
    for (std::size_t i = 0; i < d; ++i) kab[i] = {a[i], b[i]};
    std::int64_t tab = detail::tie_pair_count(kab);

    std::vector<double> buf(d);
    const std::int64_t inv = detail::count_inversions(bs, buf, 0, d);
    const std::int64_t numer = n0 - ta - tb + tab - 2 * inv;
    return static_cast<double>(numer) / static_cast<double>(n0);
}

inline double kendall_tau(const Tensor& a, const Tensor& b,
                          KendallAlgorithm algorithm = KendallAlgorithm::fast) {
    return kendall_tau(a.data, b.data, algorithm);
}

inline constexpr double degenerate_norm_floor = 1e-12;

// Cosine similarity; near-zero norms yield 0 with the flag set.
inline double cosine_similarity(const Vec& a, const Vec& b, bool* degenerate = nullptr) {
    check_same_length(a, b, "cosine_similarity");
    const double na = norm2(a), nb = norm2(b);
    if (degenerate) *degenerate = false;
    if (na < degenerate_norm_floor || nb < degenerate_norm_floor) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return dot(a, b) / (na * nb);
}

// Pearson correlation as centered cosine; flagged undefined on zero variance.
inline double pearson_correlation(const Vec& a, const Vec& b, bool* defined = nullptr) {
    check_same_length(a, b, "pearson_correlation");
    if (a.size() < 2) throw argument_error("pearson_correlation: need at least 2 entries");
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
    Vec ca(a.size()), cb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[i] = a[i] - ma;
        cb[i] = b[i] - mb;
    }
    bool degenerate = false;
    const double r = cosine_similarity(ca, cb, &degenerate);
    if (defined) *defined = !degenerate;
    return degenerate ? 0.0 : r;
}

// Indices of the k largest entries; ties at the cut resolved by lowest index.
inline std::vector<std::size_t> topk_indices(const Vec& a, std::size_t k, bool absolute_mode) {
    if (k < 1 || k > a.size()) throw argument_error("topk: k out of range");
    std::vector<std::size_t> idx(a.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto keyed = [&](std::size_t i) { return absolute_mode ? std::fabs(a[i]) : a[i]; };
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t i, std::size_t j) { return keyed(i) > keyed(j); });
    idx.resize(k);
    return idx;
}

inline double topk_intersection(const Vec& a, const Vec& b, std::size_t k,
                                bool absolute_mode = true) {
    check_same_length(a, b, "topk_intersection");
    auto ia = topk_indices(a, k, absolute_mode);
    auto ib = topk_indices(b, k, absolute_mode);
    std::sort(ia.begin(), ia.end());
    std::sort(ib.begin(), ib.end());
    std::vector<std::size_t> common;
    std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(),
                          std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(k);
}

struct MetricReport {
    double tau = 0.0;
    double cosine = 0.0;
    double pearson = 0.0;
    bool pearson_defined = true;
    double topk = 0.0;
    std::size_t k = 0;
    bool absolute_mode = true;
};

inline MetricReport compare_attributions(const Vec& a, const Vec& b, std::size_t k,
                                         bool absolute_mode = true) {
    MetricReport r;
    r.k = k;
    r.absolute_mode = absolute_mode;
    if (absolute_mode) {
        Vec aa(a.size()), ab(b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            aa[i] = std::fabs(a[i]);
            ab[i] = std::fabs(b[i]);
        }
        r.tau = kendall_tau(aa, ab);
        r.cosine = cosine_similarity(aa, ab);
        r.pearson = pearson_correlation(aa, ab, &r.pearson_defined);
    } else {
        r.tau = kendall_tau(a, b);
        r.cosine = cosine_similarity(a, b);
        r.pearson = pearson_correlation(a, b, &r.pearson_defined);
    }
    r.topk = topk_intersection(a, b, k, absolute_mode);
    return r;
}

}  // namespace attrirob
