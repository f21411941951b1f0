#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "attrirob/attacks.hpp"
#include "attrirob/consistency.hpp"
#include "attrirob/dataset.hpp"
#include "attrirob/io.hpp"
#include "attrirob/theoremlab.hpp"
#include "attrirob/threads.hpp"
#include "attrirob/training.hpp"

namespace attrirob {

constexpr int current_schema_version = 1;

struct DatasetSpec {
    std::string kind = "moons";  // blobs | moons | idx
    std::size_t n = 2000;
    double noise = 0.1;
    std::size_t dim = 2;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string images;
    std::string labels;
    std::size_t limit = std::numeric_limits<std::size_t>::max();
    std::size_t class_count = 10;
};

struct EvalSpec {
    std::size_t m_eval = 50;
    std::size_t k = 10;
    std::size_t limit = std::numeric_limits<std::size_t>::max();
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    DatasetSpec dataset;
    std::vector<std::size_t> hidden{32, 32};
    std::string checkpoint;
    TrainConfig train;
    AttackConfig attack;
    EvalSpec eval;
    std::size_t sim_dim = 10000;
    std::size_t sim_n = 1000;
    std::size_t theorem_trials = 500;
    std::size_t theorem_max_d = 10;
    std::size_t tau_trials = 10000;
    std::vector<std::size_t> tau_dims{3, 5, 10};
    json raw = json::object();
};

namespace detail {

inline void require_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw config_error("config section '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw config_error("unknown config key '" + it.key() + "' in " + where);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    try {
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw config_error(std::string("bad value for config key '") + key + "': " + e.what());
    }
}

inline AttackConfig parse_attack(const json& j, const std::string& where) {
    require_keys(j, where, {"epsilon", "alpha", "steps", "restarts", "k", "m", "clip"});
    AttackConfig a;
    a.epsilon = get_or(j, "epsilon", a.epsilon);
    a.alpha = get_or(j, "alpha", a.alpha);
    a.steps = get_or(j, "steps", a.steps);
    a.restarts = get_or(j, "restarts", a.restarts);
    a.k = get_or(j, "k", a.k);
    a.m = get_or(j, "m", a.m);
    if (j.contains("clip")) {
        const auto clip = j.at("clip").get<std::vector<double>>();
        if (clip.size() != 2) throw config_error(where + ".clip must be [lo, hi]");
        a.clip_lo = clip[0];
        a.clip_hi = clip[1];
    }
    a.resolved().validate();
    return a;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const json& j) {
    detail::require_keys(j, "top level",
                         {"schema_version", "seed", "out_dir", "dataset", "model", "train",
                          "attack", "eval", "simulate", "theorem"});
    if (!j.contains("schema_version"))
        throw config_error("config missing required key 'schema_version'");
    if (j.at("schema_version").get<int>() != current_schema_version)
        throw config_error("unsupported schema_version (expected " +
                           std::to_string(current_schema_version) + ")");

    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.out_dir = detail::get_or<std::string>(j, "out_dir", cfg.out_dir);

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        detail::require_keys(d, "dataset", {"kind", "n", "noise", "dim", "seed", "images",
                                            "labels", "limit", "class_count"});
        cfg.dataset.kind = detail::get_or<std::string>(d, "kind", cfg.dataset.kind);
        cfg.dataset.n = detail::get_or(d, "n", cfg.dataset.n);
        cfg.dataset.noise = detail::get_or(d, "noise", cfg.dataset.noise);
        cfg.dataset.dim = detail::get_or(d, "dim", cfg.dataset.dim);
        if (d.contains("seed")) {
            cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
            cfg.dataset.seed_set = true;
        }
        cfg.dataset.images = detail::get_or<std::string>(d, "images", "");
        cfg.dataset.labels = detail::get_or<std::string>(d, "labels", "");
        cfg.dataset.limit = detail::get_or(d, "limit", cfg.dataset.limit);
        cfg.dataset.class_count = detail::get_or(d, "class_count", cfg.dataset.class_count);
        if (cfg.dataset.kind != "blobs" && cfg.dataset.kind != "moons" &&
            cfg.dataset.kind != "idx")
            throw config_error("dataset.kind must be blobs, moons, or idx");
        if (cfg.dataset.kind == "idx" &&
            (cfg.dataset.images.empty() || cfg.dataset.labels.empty()))
            throw config_error("dataset.kind=idx requires images and labels paths");
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        detail::require_keys(m, "model", {"hidden", "checkpoint"});
        cfg.hidden = detail::get_or(m, "hidden", cfg.hidden);
        cfg.checkpoint = detail::get_or<std::string>(m, "checkpoint", "");
        if (cfg.hidden.empty()) throw config_error("model.hidden must be nonempty");
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        detail::require_keys(t, "train",
                             {"loss", "use_igr", "lambda", "beta", "epochs", "batch_size",
                              "learning_rate", "momentum", "m_train", "attack"});
        cfg.train.loss_kind =
            loss_kind_from_string(detail::get_or<std::string>(t, "loss", "AT"));
        cfg.train.use_igr = detail::get_or(t, "use_igr", cfg.train.use_igr);
        cfg.train.lambda = detail::get_or(t, "lambda", cfg.train.lambda);
        cfg.train.beta = detail::get_or(t, "beta", cfg.train.beta);
        cfg.train.epochs = detail::get_or(t, "epochs", cfg.train.epochs);
        cfg.train.batch_size = detail::get_or(t, "batch_size", cfg.train.batch_size);
        cfg.train.learning_rate = detail::get_or(t, "learning_rate", cfg.train.learning_rate);
        cfg.train.momentum = detail::get_or(t, "momentum", cfg.train.momentum);
        cfg.train.m_train = detail::get_or(t, "m_train", cfg.train.m_train);
        if (t.contains("attack")) cfg.train.attack = detail::parse_attack(t.at("attack"), "train.attack");
    }
    cfg.train.hidden = cfg.hidden;
    cfg.train.seed = cfg.seed;

    if (j.contains("attack")) cfg.attack = detail::parse_attack(j.at("attack"), "attack");

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        detail::require_keys(e, "eval", {"m_eval", "k", "limit"});
        cfg.eval.m_eval = detail::get_or(e, "m_eval", cfg.eval.m_eval);
        cfg.eval.k = detail::get_or(e, "k", cfg.eval.k);
        cfg.eval.limit = detail::get_or(e, "limit", cfg.eval.limit);
    }

    if (j.contains("simulate")) {
        const json& s = j.at("simulate");
        detail::require_keys(s, "simulate", {"dim", "n_samples"});
        cfg.sim_dim = detail::get_or(s, "dim", cfg.sim_dim);
        cfg.sim_n = detail::get_or(s, "n_samples", cfg.sim_n);
    }

    if (j.contains("theorem")) {
        const json& t = j.at("theorem");
        detail::require_keys(t, "theorem", {"trials", "max_d", "tau_trials", "tau_dims"});
        cfg.theorem_trials = detail::get_or(t, "trials", cfg.theorem_trials);
        cfg.theorem_max_d = detail::get_or(t, "max_d", cfg.theorem_max_d);
        cfg.tau_trials = detail::get_or(t, "tau_trials", cfg.tau_trials);
        cfg.tau_dims = detail::get_or(t, "tau_dims", cfg.tau_dims);
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(json_from_file(path));
}

inline Dataset make_dataset(const DatasetSpec& spec, std::uint64_t default_seed) {
    if (spec.kind == "idx")
        return load_idx(spec.images, spec.labels, spec.limit, spec.class_count);
    const std::uint64_t seed =
        spec.seed_set ? spec.seed : mix_seeds(default_seed, 0xda7a5e7);
    Dataset ds = generate_synthetic(synthetic_kind_from_string(spec.kind), spec.n, spec.noise,
                                    seed, spec.dim);
    return ds;
}

namespace detail {

inline void prepare_out_dir(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    json_to_file(cfg.raw, cfg.out_dir + "/config.json");
}

inline std::string path_basename(const std::string& p) {
    return std::filesystem::path(p).filename().string();
}

struct RestartMeans {
    double tau = 0.0, cosine = 0.0, pearson = 0.0, topk = 0.0;
};

inline RestartMeans restart_means(const AttackReport& rep) {
    RestartMeans m;
    for (const auto& r : rep.per_restart_metrics) {
        m.tau += r.tau;
        m.cosine += r.cosine;
        m.pearson += r.pearson;
        m.topk += r.topk;
    }
    const double n = static_cast<double>(rep.per_restart_metrics.size());
    if (n > 0) {
        m.tau /= n;
        m.cosine /= n;
        m.pearson /= n;
        m.topk /= n;
    }
    return m;
}

}  // namespace detail

struct EvalSummary {
    std::size_t total = 0;
    std::size_t evaluated = 0;
    std::size_t skipped_misclassified = 0;
    double natural_accuracy = 0.0;
    double fgsm_accuracy = 0.0;
    double pgd_accuracy = 0.0;
    double mean_tau = 0.0;
    double mean_cosine = 0.0;
    double mean_pearson = 0.0;
    double mean_topk = 0.0;
    double worst_tau = 0.0;
    double worst_cosine = 0.0;
    double worst_pearson = 0.0;
    double worst_topk = 0.0;
    double consistency = 0.0;
    std::vector<double> consistency_per_layer;
};

// The section 6 protocol at desk scale: IFIA attribution metrics (mean and
// worst restart) for correctly classified samples, FGSM/PGD accuracy and
// activation consistency for everyone, one CSV row per sample, aggregate
// summary JSON recomputable from the rows.
inline EvalSummary run_eval(const MlpModel& model, const Dataset& data,
                            const AttackConfig& attack, const EvalSpec& spec,
                            std::uint64_t seed, const std::string& out_dir) {
    const std::size_t n = std::min(data.size(), spec.limit);
    AttackConfig atk = attack.resolved();
    atk.clip_lo = data.lo;
    atk.clip_hi = data.hi;
    atk.m = spec.m_eval;
    atk.k = spec.k;
    atk.validate();

    struct Row {
        bool nat_ok = false, fgsm_ok = false, pgd_ok = false, label_preserved = false;
        detail::RestartMeans mean;
        MetricReport worst;
        Vec pgd_x;
    };
    std::vector<Row> rows(n);

    parallel_for(n, [&](std::size_t i) {
        const Vec& x = data.inputs[i];
        const std::size_t y = data.labels[i];
        Row& r = rows[i];
        r.nat_ok = predict(model, x) == y;
        const Vec x_fgsm = fgsm(model, x, y, atk.epsilon, {atk.clip_lo, atk.clip_hi});
        r.fgsm_ok = predict(model, x_fgsm) == y;
        r.pgd_x = pgd(model, PgdObjective::cross_entropy, x, y, atk, mix_seeds(seed, 2 * i));
        r.pgd_ok = predict(model, r.pgd_x) == y;
        if (r.nat_ok) {
            const AttackReport rep = ifia_topk(model, x, y, atk, mix_seeds(seed, 2 * i + 1));
            r.label_preserved = rep.label_preserved;
            r.mean = detail::restart_means(rep);
            const Vec ig_nat = integrated_gradients(model, x, y, atk.m).values;
            const Vec ig_adv = integrated_gradients(model, rep.perturbed, y, atk.m).values;
            r.worst = compare_attributions(ig_nat, ig_adv, atk.k, true);
        }
    });

    CsvWriter csv(out_dir + "/eval.csv",
                  {"sample_id", "natural_correct", "label_preserved", "tau_mean",
                   "cosine_mean", "pearson_mean", "topk_mean", "tau_worst", "cosine_worst",
                   "pearson_worst", "topk_worst", "fgsm_correct", "pgd_correct"});
    EvalSummary sum;
    sum.total = n;
    std::vector<Vec> nat_inputs, adv_inputs;
    nat_inputs.reserve(n);
    adv_inputs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Row& r = rows[i];
        nat_inputs.push_back(data.inputs[i]);
        adv_inputs.push_back(r.pgd_x);
        sum.natural_accuracy += r.nat_ok;
        sum.fgsm_accuracy += r.fgsm_ok;
        sum.pgd_accuracy += r.pgd_ok;
        if (r.nat_ok) {
            ++sum.evaluated;
            sum.mean_tau += r.mean.tau;
            sum.mean_cosine += r.mean.cosine;
            sum.mean_pearson += r.mean.pearson;
            sum.mean_topk += r.mean.topk;
            sum.worst_tau += r.worst.tau;
            sum.worst_cosine += r.worst.cosine;
            sum.worst_pearson += r.worst.pearson;
            sum.worst_topk += r.worst.topk;
            csv.row({CsvWriter::cell(i), "1", CsvWriter::cell(r.label_preserved),
                     CsvWriter::cell(r.mean.tau), CsvWriter::cell(r.mean.cosine),
                     CsvWriter::cell(r.mean.pearson), CsvWriter::cell(r.mean.topk),
                     CsvWriter::cell(r.worst.tau), CsvWriter::cell(r.worst.cosine),
                     CsvWriter::cell(r.worst.pearson), CsvWriter::cell(r.worst.topk),
                     CsvWriter::cell(r.fgsm_ok), CsvWriter::cell(r.pgd_ok)});
        } else {
            ++sum.skipped_misclassified;
            csv.row({CsvWriter::cell(i), "0", "", "", "", "", "", "", "", "", "",
                     CsvWriter::cell(r.fgsm_ok), CsvWriter::cell(r.pgd_ok)});
        }
    }
    if (n > 0) {
        sum.natural_accuracy /= static_cast<double>(n);
        sum.fgsm_accuracy /= static_cast<double>(n);
        sum.pgd_accuracy /= static_cast<double>(n);
        const ActivationTrace tn = record_activation_trace(model, nat_inputs);
        const ActivationTrace ta = record_activation_trace(model, adv_inputs);
        sum.consistency = activation_consistency(tn, ta);
        sum.consistency_per_layer = activation_consistency_per_layer(tn, ta);
    }
    if (sum.evaluated > 0) {
        const double e = static_cast<double>(sum.evaluated);
        sum.mean_tau /= e;
        sum.mean_cosine /= e;
        sum.mean_pearson /= e;
        sum.mean_topk /= e;
        sum.worst_tau /= e;
        sum.worst_cosine /= e;
        sum.worst_pearson /= e;
        sum.worst_topk /= e;
    }

    json_to_file(
        json{{"total", sum.total},
             {"evaluated", sum.evaluated},
             {"skipped_misclassified", sum.skipped_misclassified},
             {"natural_accuracy", sum.natural_accuracy},
             {"fgsm_accuracy", sum.fgsm_accuracy},
             {"pgd_accuracy", sum.pgd_accuracy},
             {"mean", {{"tau", sum.mean_tau}, {"cosine", sum.mean_cosine},
                       {"pearson", sum.mean_pearson}, {"topk", sum.mean_topk}}},
             {"worst", {{"tau", sum.worst_tau}, {"cosine", sum.worst_cosine},
                        {"pearson", sum.worst_pearson}, {"topk", sum.worst_topk}}},
             {"activation_consistency", sum.consistency},
             {"activation_consistency_per_layer", sum.consistency_per_layer}},
        out_dir + "/summary.json");
    return sum;
}

inline void cmd_train(const ExperimentConfig& cfg) {
    detail::prepare_out_dir(cfg);
    const Dataset ds = make_dataset(cfg.dataset, cfg.seed);
    const TrainResult res = train(cfg.train, ds);
    save_checkpoint(res.model, cfg.out_dir + "/checkpoint.json",
                    json{{"loss", to_string(cfg.train.loss_kind)},
                         {"use_igr", cfg.train.use_igr},
                         {"lambda", cfg.train.lambda},
                         {"seed", cfg.seed},
                         {"hidden", cfg.hidden},
                         {"dataset_kind", cfg.dataset.kind}});
    save_train_log(res.log, cfg.out_dir + "/train_log.csv");
}

inline void cmd_eval(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw config_error("eval requires model.checkpoint");
    detail::prepare_out_dir(cfg);
    const MlpModel model = load_checkpoint(cfg.checkpoint);
    const Dataset ds = make_dataset(cfg.dataset, cfg.seed);
    run_eval(model, ds, cfg.attack, cfg.eval, cfg.seed, cfg.out_dir);
}

inline void cmd_attack(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw config_error("attack requires model.checkpoint");
    detail::prepare_out_dir(cfg);
    const MlpModel model = load_checkpoint(cfg.checkpoint);
    const Dataset ds = make_dataset(cfg.dataset, cfg.seed);
    AttackConfig atk = cfg.attack.resolved();
    atk.clip_lo = ds.lo;
    atk.clip_hi = ds.hi;
    atk.validate();
    const std::size_t n = std::min(ds.size(), cfg.eval.limit);

    std::vector<AttackReport> reports(n);
    parallel_for(n, [&](std::size_t i) {
        reports[i] = ifia_topk(model, ds.inputs[i], ds.labels[i], atk, mix_seeds(cfg.seed, i));
    });

    CsvWriter csv(cfg.out_dir + "/attack.csv",
                  {"sample_id", "label_preserved", "tau", "cosine", "pearson", "topk"});
    std::size_t evaluated = 0, skipped = 0;
    double tau = 0.0, cosine = 0.0, pearson = 0.0, topk = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (reports[i].naturally_misclassified) {
            ++skipped;
            continue;
        }
        const detail::RestartMeans m = detail::restart_means(reports[i]);
        csv.row({CsvWriter::cell(i), CsvWriter::cell(reports[i].label_preserved),
                 CsvWriter::cell(m.tau), CsvWriter::cell(m.cosine),
                 CsvWriter::cell(m.pearson), CsvWriter::cell(m.topk)});
        tau += m.tau;
        cosine += m.cosine;
        pearson += m.pearson;
        topk += m.topk;
        ++evaluated;
    }
    const double e = evaluated ? static_cast<double>(evaluated) : 1.0;
    json_to_file(json{{"total", n},
                      {"evaluated", evaluated},
                      {"skipped_misclassified", skipped},
                      {"mean", {{"tau", tau / e}, {"cosine", cosine / e},
                                {"pearson", pearson / e}, {"topk", topk / e}}}},
                 cfg.out_dir + "/summary.json");
}

inline void cmd_simulate(const ExperimentConfig& cfg) {
    detail::prepare_out_dir(cfg);
    const SimulationResult res = simulate_tau_cos(cfg.sim_dim, cfg.sim_n, cfg.seed);
    CsvWriter csv(cfg.out_dir + "/simulate.csv", {"cosine", "tau"});
    for (const auto& s : res.samples)
        csv.row({CsvWriter::cell(s.cosine), CsvWriter::cell(s.tau)});
    json_to_file(json{{"association", res.association},
                      {"association_defined", res.association_defined},
                      {"n", cfg.sim_n},
                      {"dim", cfg.sim_dim},
                      {"seed", cfg.seed}},
                 cfg.out_dir + "/summary.json");
}

inline void cmd_consistency(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw config_error("consistency requires model.checkpoint");
    detail::prepare_out_dir(cfg);
    const MlpModel model = load_checkpoint(cfg.checkpoint);
    const Dataset ds = make_dataset(cfg.dataset, cfg.seed);
    AttackConfig atk = cfg.attack.resolved();
    atk.clip_lo = ds.lo;
    atk.clip_hi = ds.hi;
    atk.validate();
    const std::size_t n = std::min(ds.size(), cfg.eval.limit);
    if (n == 0) throw argument_error("consistency: empty dataset");

    std::vector<Vec> adv(n);
    parallel_for(n, [&](std::size_t i) {
        adv[i] = pgd(model, PgdObjective::cross_entropy, ds.inputs[i], ds.labels[i], atk,
                     mix_seeds(cfg.seed, i));
    });
    std::vector<Vec> nat(ds.inputs.begin(), ds.inputs.begin() + static_cast<long>(n));
    const ActivationTrace tn = record_activation_trace(model, nat);
    const ActivationTrace ta = record_activation_trace(model, adv);
    const double c = activation_consistency(tn, ta);
    const std::vector<double> per_layer = activation_consistency_per_layer(tn, ta);

    std::vector<std::string> header{"model_id", "dataset", "consistency"};
    for (std::size_t l = 0; l < per_layer.size(); ++l)
        header.push_back("layer" + std::to_string(l));
    CsvWriter csv(cfg.out_dir + "/consistency.csv", header);
    std::vector<std::string> row{detail::path_basename(cfg.checkpoint), cfg.dataset.kind,
                                 CsvWriter::cell(c)};
    for (double v : per_layer) row.push_back(CsvWriter::cell(v));
    csv.row(row);
}

inline void cmd_theorem(const ExperimentConfig& cfg) {
    detail::prepare_out_dir(cfg);
    const SequenceSearchStats st =
        sequence_success_rate(cfg.theorem_trials, cfg.seed, cfg.theorem_max_d);
    json orderings = json::array();
    for (std::size_t d : cfg.tau_dims)
        for (SequenceOp op : {SequenceOp::exchange, SequenceOp::scale}) {
            const TauOrderingResult r = conditional_tau_ordering(
                d, cfg.tau_trials, op, mix_seeds(cfg.seed, d * 2 + (op == SequenceOp::scale)));
            orderings.push_back(json{
                {"dim", d},
                {"op", op == SequenceOp::exchange ? "exchange" : "scale"},
                {"mean_diff", r.mean_diff},
                {"std_error", r.std_error},
                {"kept", r.kept},
                {"power_warning", r.power_warning}});
        }
    json_to_file(json{{"sequence_search",
                       {{"trials", st.trials},
                        {"successes", st.successes},
                        {"success_rate", st.success_rate},
                        {"max_d", cfg.theorem_max_d}}},
                      {"conditional_tau_ordering", orderings}},
                 cfg.out_dir + "/theorem.json");
}

}  // namespace attrirob
