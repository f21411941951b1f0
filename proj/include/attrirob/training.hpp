#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "attrirob/attacks.hpp"
#include "attrirob/consistency.hpp"
#include "attrirob/dataset.hpp"
#include "attrirob/errors.hpp"
#include "attrirob/losses.hpp"
#include "attrirob/mlp.hpp"
#include "attrirob/rng.hpp"
#include "attrirob/threads.hpp"

namespace attrirob {

struct TrainConfig {
    LossKind loss_kind = LossKind::AT;
    bool use_igr = false;
    double lambda = 1.0;
    double beta = 6.0;
    AttackConfig attack{0.1, -1.0, 7, 1, 10, 0.0, 1.0, 10};  // inner PGD
    std::size_t m_train = 10;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::vector<std::size_t> hidden{32, 32};

    void validate() const {
        if (lambda < 0.0) throw config_error("train: lambda must be >= 0");
        if (beta < 0.0) throw config_error("train: beta must be >= 0");
        if (learning_rate <= 0.0) throw config_error("train: learning_rate must be > 0");
        if (momentum < 0.0 || momentum >= 1.0)
            throw config_error("train: momentum must be in [0, 1)");
        if (batch_size == 0) throw config_error("train: batch_size must be positive");
        if (m_train == 0) throw config_error("train: m_train must be positive");
        if (hidden.empty()) throw config_error("train: need at least one hidden layer");
        attack.resolved().validate();
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss_total = 0.0;
    double loss_base = 0.0;
    double loss_reg = 0.0;
    double loss_igr = 0.0;
    double nat_acc = 0.0;
    double adv_acc = 0.0;
    double mean_ig_cos = 0.0;
    double mean_consistency = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> records;
};

struct TrainResult {
    MlpModel model;
    TrainLog log;
};

namespace detail {

// The attack matching each objective: TRADES maximizes its own KL regularizer,
// everything else maximizes cross entropy.
inline PgdObjective inner_objective(LossKind kind) {
    return kind == LossKind::TRADES ? PgdObjective::kl_to_natural
                                    : PgdObjective::cross_entropy;
}

struct SampleStats {
    LossBreakdown loss;
    char nat_ok = 0, adv_ok = 0;
    double ig_cos = 0.0;
    char ig_cos_ok = 0;
    ConsistencyCounts cc;
};

}  // namespace detail

// Algorithm 1: per batch, attack each sample with the method's inner PGD,
// reuse that x~ inside the IGR term, average per-sample gradients, SGD step.
// Deterministic for a fixed seed at any ATTRIROB_THREADS setting: all
// per-sample work writes to its own slot and reductions run in index order.
inline TrainResult train(const TrainConfig& config, const Dataset& data) {
    config.validate();
    data.validate();
    if (data.size() == 0) throw argument_error("train: dataset is empty");

    Rng rng(config.seed);
    std::vector<std::size_t> dims;
    dims.push_back(data.dim());
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(data.class_count);
    Rng init_rng = rng.derive(0x1417);
    TrainResult out{make_mlp(dims, init_rng), TrainLog{}};
    MlpModel& model = out.model;

    const AttackConfig atk = [&] {
        AttackConfig a = config.attack.resolved();
        a.clip_lo = data.lo;
        a.clip_hi = data.hi;
        a.m = config.m_train;
        return a;
    }();
    const PgdObjective obj = detail::inner_objective(config.loss_kind);

    std::vector<Tensor> vel_w;
    std::vector<Vec> vel_b;
    for (const auto& l : model.layers) {
        vel_w.emplace_back(std::vector<std::size_t>{l.out_dim(), l.in_dim()});
        vel_b.emplace_back(l.out_dim(), 0.0);
    }

    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng = rng.derive(0xe90c + epoch);
        shuffle_rng.shuffle(order);

        EpochRecord rec;
        rec.epoch = epoch;
        detail::ConsistencyCounts epoch_cc;
        double cos_sum = 0.0;
        std::size_t cos_count = 0, nat_ok = 0, adv_ok = 0;

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t bsz = std::min(config.batch_size, n - start);
            std::vector<SampleLossResult> results(bsz, SampleLossResult{{}, ParamGrads(model)});
            std::vector<detail::SampleStats> stats(bsz);

            parallel_for(bsz, [&](std::size_t i) {
                const std::size_t idx = order[start + i];
                const Vec& x = data.inputs[idx];
                const std::size_t y = data.labels[idx];
                const std::uint64_t atk_seed =
                    mix_seeds(mix_seeds(config.seed, 0xa77acc + epoch), idx);
                const Vec x_adv = pgd(model, obj, x, y, atk, atk_seed);
                results[i] = loss_value_and_param_grad(model, config.loss_kind,
                                                       config.use_igr, x, x_adv, y,
                                                       config.lambda, config.beta,
                                                       config.m_train);
                detail::SampleStats& st = stats[i];
                st.loss = results[i].breakdown;
                const ForwardTrace tn = mlp_forward_trace(model, x);
                const ForwardTrace ta = mlp_forward_trace(model, x_adv);
                std::size_t pn = 0, pa = 0;
                for (std::size_t c = 1; c < data.class_count; ++c) {
                    if (tn.z.back()[c] > tn.z.back()[pn]) pn = c;
                    if (ta.z.back()[c] > ta.z.back()[pa]) pa = c;
                }
                st.nat_ok = pn == y;
                st.adv_ok = pa == y;
                for (std::size_t l = 0; l + 1 < model.layers.size(); ++l)
                    for (std::size_t u = 0; u < tn.mask[l].size(); ++u)
                        st.cc.add(tn.mask[l][u], ta.mask[l][u]);
                const Vec g1 = integrated_gradients(model, x, y, config.m_train).values;
                const Vec g2 = integrated_gradients(model, x_adv, y, config.m_train).values;
                bool degenerate = false;
                const double c = cosine_similarity(g1, g2, &degenerate);
                st.ig_cos = c;
                st.ig_cos_ok = !degenerate;
            });

            ParamGrads batch_grads(model);
            double batch_loss = 0.0;
            for (std::size_t i = 0; i < bsz; ++i) {
                batch_grads.add(results[i].grads, 1.0 / static_cast<double>(bsz));
                batch_loss += results[i].breakdown.total;
                rec.loss_total += results[i].breakdown.total;
                rec.loss_base += results[i].breakdown.base;
                rec.loss_reg += results[i].breakdown.reg;
                rec.loss_igr += results[i].breakdown.igr;
                nat_ok += stats[i].nat_ok;
                adv_ok += stats[i].adv_ok;
                if (stats[i].ig_cos_ok) {
                    cos_sum += stats[i].ig_cos;
                    ++cos_count;
                }
                epoch_cc.ab += stats[i].cc.ab;
                epoch_cc.a += stats[i].cc.a;
                epoch_cc.b += stats[i].cc.b;
                epoch_cc.total += stats[i].cc.total;
            }
            if (!std::isfinite(batch_loss))
                throw divergence_error("train: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", batch offset " +
                                       std::to_string(start));
            sgd_step(model, batch_grads, vel_w, vel_b, config.learning_rate,
                     config.momentum);
        }

        const double dn = static_cast<double>(n);
        rec.loss_total /= dn;
        rec.loss_base /= dn;
        rec.loss_reg /= dn;
        rec.loss_igr /= dn;
        rec.nat_acc = static_cast<double>(nat_ok) / dn;
        rec.adv_acc = static_cast<double>(adv_ok) / dn;
        rec.mean_ig_cos = cos_count ? cos_sum / static_cast<double>(cos_count) : 0.0;
        rec.mean_consistency = epoch_cc.value();
        out.log.records.push_back(rec);
    }
    return out;
}

}  // namespace attrirob
