#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <attrirob/attrirob.hpp>

using namespace attrirob;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "attrirob_harness_test";
    fs::create_directories(dir);
    return dir;
}

json minimal() { return json{{"schema_version", 1}}; }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    EXPECT_TRUE(in.good()) << p;
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.size() && line.back() == ',') cells.push_back("");
        rows.push_back(cells);
    }
    return rows;
}

const char* cli_path() { return std::getenv("ATTRIROB_CLI"); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(ConfigParse, SchemaVersionIsRequiredAndChecked) {
    EXPECT_NO_THROW(parse_experiment_config(minimal()));
    EXPECT_THROW(parse_experiment_config(json::object()), config_error);
    json wrong = minimal();
    wrong["schema_version"] = 2;
    EXPECT_THROW(parse_experiment_config(wrong), config_error);
}

TEST(ConfigParse, UnknownKeysAreNamed) {
    auto expect_named = [](const json& j, const std::string& key, const std::string& where) {
        try {
            parse_experiment_config(j);
            FAIL() << "expected config_error for " << key;
        } catch (const config_error& e) {
            const std::string msg = e.what();
            EXPECT_NE(msg.find(key), std::string::npos) << msg;
            EXPECT_NE(msg.find(where), std::string::npos) << msg;
        }
    };
    json top = minimal();
    top["epochs"] = 3;
    expect_named(top, "epochs", "top level");
    json d = minimal();
    d["dataset"] = {{"kind", "moons"}, {"size", 10}};
    expect_named(d, "size", "dataset");
    json m = minimal();
    m["model"] = {{"layers", {4}}};
    expect_named(m, "layers", "model");
    json t = minimal();
    t["train"] = {{"lr", 0.1}};
    expect_named(t, "lr", "train");
    json ta = minimal();
    ta["train"] = {{"attack", {{"eps", 0.1}}}};
    expect_named(ta, "eps", "train.attack");
    json a = minimal();
    a["attack"] = {{"norm", "linf"}};
    expect_named(a, "norm", "attack");
    json e = minimal();
    e["eval"] = {{"metric", "tau"}};
    expect_named(e, "metric", "eval");
    json s = minimal();
    s["simulate"] = {{"samples", 5}};
    expect_named(s, "samples", "simulate");
    json th = minimal();
    th["theorem"] = {{"budget", 5}};
    expect_named(th, "budget", "theorem");
}

TEST(ConfigParse, DatasetRules) {
    json j = minimal();
    j["dataset"] = {{"kind", "circles"}};
    EXPECT_THROW(parse_experiment_config(j), config_error);
    j["dataset"] = {{"kind", "idx"}};
    EXPECT_THROW(parse_experiment_config(j), config_error);
    j["dataset"] = {{"kind", "idx"}, {"images", "i.idx"}, {"labels", "l.idx"}};
    const ExperimentConfig cfg = parse_experiment_config(j);
    EXPECT_EQ(cfg.dataset.kind, "idx");
    EXPECT_EQ(cfg.dataset.images, "i.idx");
}

TEST(ConfigParse, ValuesPropagateAndValidate) {
    json j{{"schema_version", 1},
           {"seed", 17},
           {"out_dir", "runs/a"},
           {"dataset", {{"kind", "blobs"}, {"n", 64}, {"noise", 0.05}, {"dim", 4},
                        {"seed", 123}}},
           {"model", {{"hidden", {12, 6}}, {"checkpoint", "m.json"}}},
           {"train", {{"loss", "TRADES"}, {"use_igr", true}, {"lambda", 0.5},
                      {"beta", 4.0}, {"epochs", 3}, {"batch_size", 16},
                      {"learning_rate", 0.05}, {"momentum", 0.8}, {"m_train", 6},
                      {"attack", {{"epsilon", 0.08}, {"steps", 5}}}}},
           {"attack", {{"epsilon", 0.2}, {"alpha", 0.01}, {"steps", 30}, {"restarts", 2},
                       {"k", 4}, {"m", 20}, {"clip", {-1.0, 2.0}}}},
           {"eval", {{"m_eval", 25}, {"k", 5}, {"limit", 100}}},
           {"simulate", {{"dim", 50}, {"n_samples", 10}}},
           {"theorem", {{"trials", 7}, {"max_d", 5}, {"tau_trials", 100},
                        {"tau_dims", {3, 4}}}}};
    const ExperimentConfig cfg = parse_experiment_config(j);
    EXPECT_EQ(cfg.seed, 17u);
    EXPECT_EQ(cfg.out_dir, "runs/a");
    EXPECT_TRUE(cfg.dataset.seed_set);
    EXPECT_EQ(cfg.dataset.seed, 123u);
    EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{12, 6}));
    EXPECT_EQ(cfg.checkpoint, "m.json");
    EXPECT_EQ(cfg.train.loss_kind, LossKind::TRADES);
    EXPECT_TRUE(cfg.train.use_igr);
    EXPECT_EQ(cfg.train.hidden, cfg.hidden);    // model owns the architecture
    EXPECT_EQ(cfg.train.seed, cfg.seed);        // one seed drives everything
    EXPECT_DOUBLE_EQ(cfg.train.attack.epsilon, 0.08);
    EXPECT_DOUBLE_EQ(cfg.attack.clip_lo, -1.0);
    EXPECT_DOUBLE_EQ(cfg.attack.clip_hi, 2.0);
    EXPECT_EQ(cfg.eval.m_eval, 25u);
    EXPECT_EQ(cfg.sim_dim, 50u);
    EXPECT_EQ(cfg.theorem_trials, 7u);
    EXPECT_EQ(cfg.tau_dims, (std::vector<std::size_t>{3, 4}));

    j["model"]["hidden"] = json::array();
    EXPECT_THROW(parse_experiment_config(j), config_error);
    j["model"]["hidden"] = {8};
    j["attack"]["clip"] = {0.0, 0.5, 1.0};
    EXPECT_THROW(parse_experiment_config(j), config_error);
    j["attack"]["clip"] = {1.0, 0.0};
    EXPECT_THROW(parse_experiment_config(j), config_error);
    j["attack"]["clip"] = {0.0, 1.0};
    j["seed"] = "abc";
    EXPECT_THROW(parse_experiment_config(j), config_error);
}

TEST(MakeDataset, SyntheticSeedsAndIdx) {
    DatasetSpec spec;
    spec.kind = "blobs";
    spec.n = 12;
    const Dataset a = make_dataset(spec, 1);
    const Dataset b = make_dataset(spec, 2);
    EXPECT_NE(a.inputs, b.inputs);  // default seed derives from the run seed
    spec.seed = 9;
    spec.seed_set = true;
    const Dataset c = make_dataset(spec, 1);
    const Dataset d = make_dataset(spec, 2);
    EXPECT_EQ(c.inputs, d.inputs);  // explicit dataset seed wins

    const char* src = std::getenv("ATTRIROB_SOURCE_DIR");
    ASSERT_NE(src, nullptr);
    DatasetSpec idx;
    idx.kind = "idx";
    idx.images = std::string(src) + "/data/digits-images-idx3-ubyte";
    idx.labels = std::string(src) + "/data/digits-labels-idx1-ubyte";
    idx.limit = 50;
    const Dataset ds = make_dataset(idx, 1);
    EXPECT_EQ(ds.size(), 50u);
    EXPECT_EQ(ds.dim(), 64u);
}

TEST(RunEval, SummaryIsRecomputableFromCsv) {
    Rng rng(23);
    MlpModel model = make_mlp({2, 6, 2}, rng);
    for (auto& l : model.layers)
        for (auto& b : l.b) b = rng.uniform(-0.3, 0.3);
    const Dataset ds = generate_synthetic(SyntheticKind::moons, 30, 0.15, 6);
    AttackConfig atk;
    atk.epsilon = 0.08;
    atk.steps = 3;
    atk.restarts = 2;
    EvalSpec spec;
    spec.m_eval = 6;
    spec.k = 2;
    const auto dir = work_dir() / "eval_recompute";
    fs::create_directories(dir);

    const EvalSummary sum = run_eval(model, ds, atk, spec, 77, dir.string());
    EXPECT_EQ(sum.total, 30u);
    EXPECT_EQ(sum.evaluated + sum.skipped_misclassified, 30u);

    const auto rows = read_csv(dir / "eval.csv");
    ASSERT_EQ(rows.size(), 31u);
    ASSERT_EQ(rows[0].size(), 13u);
    double nat = 0, fg = 0, pg = 0, tau = 0, cosm = 0, topw = 0;
    std::size_t evaluated = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        nat += r[1] == "1";
        fg += r[11] == "1";
        pg += r[12] == "1";
        if (r[1] == "1") {
            ++evaluated;
            tau += std::stod(r[3]);
            cosm += std::stod(r[4]);
            topw += std::stod(r[10]);
        } else {
            for (int c = 2; c <= 10; ++c) EXPECT_TRUE(r[c].empty()) << "row " << i;
        }
    }
    EXPECT_EQ(evaluated, sum.evaluated);
    EXPECT_DOUBLE_EQ(nat / 30.0, sum.natural_accuracy);
    EXPECT_DOUBLE_EQ(fg / 30.0, sum.fgsm_accuracy);
    EXPECT_DOUBLE_EQ(pg / 30.0, sum.pgd_accuracy);
    if (evaluated > 0) {
        EXPECT_NEAR(tau / evaluated, sum.mean_tau, 1e-12);
        EXPECT_NEAR(cosm / evaluated, sum.mean_cosine, 1e-12);
        EXPECT_NEAR(topw / evaluated, sum.worst_topk, 1e-12);
    }

    const json summary = json_from_file((dir / "summary.json").string());
    EXPECT_EQ(summary["total"], 30);
    EXPECT_DOUBLE_EQ(summary["natural_accuracy"], sum.natural_accuracy);
    EXPECT_DOUBLE_EQ(summary["mean"]["tau"], sum.mean_tau);
    EXPECT_DOUBLE_EQ(summary["worst"]["cosine"], sum.worst_cosine);
    EXPECT_DOUBLE_EQ(summary["activation_consistency"], sum.consistency);
    ASSERT_EQ(summary["activation_consistency_per_layer"].size(), 1u);
    EXPECT_GE(sum.consistency, 0.0);
    EXPECT_LE(sum.consistency, 1.0);

    // limit trims the pass
    EvalSpec limited = spec;
    limited.limit = 7;
    const auto dir2 = work_dir() / "eval_limited";
    fs::create_directories(dir2);
    EXPECT_EQ(run_eval(model, ds, atk, limited, 77, dir2.string()).total, 7u);
}

TEST(RunEval, EmptyDatasetWritesHeaderOnly) {
    Rng rng(29);
    const MlpModel model = make_mlp({2, 4, 2}, rng);
    Dataset empty;
    AttackConfig atk;
    atk.epsilon = 0.05;
    const auto dir = work_dir() / "eval_empty";
    fs::create_directories(dir);
    const EvalSummary sum = run_eval(model, empty, atk, EvalSpec{}, 1, dir.string());
    EXPECT_EQ(sum.total, 0u);
    EXPECT_EQ(sum.evaluated, 0u);
    const auto rows = read_csv(dir / "eval.csv");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0][0], "sample_id");
}

TEST(Cli, EndToEndPipelineAndExitCodes) {
    ASSERT_NE(cli_path(), nullptr) << "ATTRIROB_CLI must point at the CLI binary";
    const auto root = work_dir() / "cli";
    fs::remove_all(root);
    fs::create_directories(root);

    json cfg{{"schema_version", 1},
             {"seed", 3},
             {"out_dir", (root / "train").string()},
             {"dataset", {{"kind", "blobs"}, {"n", 24}, {"noise", 0.06}}},
             {"model", {{"hidden", {6}}}},
             {"train", {{"loss", "AT"}, {"epochs", 2}, {"batch_size", 8},
                        {"m_train", 3},
                        {"attack", {{"epsilon", 0.05}, {"steps", 2}, {"restarts", 1}}}}},
             {"attack", {{"epsilon", 0.05}, {"steps", 2}, {"restarts", 1}, {"k", 2},
                         {"m", 4}}},
             {"eval", {{"m_eval", 4}, {"k", 2}, {"limit", 10}}}};
    const auto cfg_path = root / "train.json";
    json_to_file(cfg, cfg_path.string());

    ASSERT_EQ(run_cli("train --config " + cfg_path.string()), 0);
    EXPECT_TRUE(fs::exists(root / "train" / "checkpoint.json"));
    EXPECT_TRUE(fs::exists(root / "train" / "train_log.csv"));
    EXPECT_TRUE(fs::exists(root / "train" / "config.json"));
    EXPECT_EQ(read_csv(root / "train" / "train_log.csv").size(), 3u);

    json ecfg = cfg;
    ecfg["out_dir"] = (root / "eval").string();
    ecfg["model"]["checkpoint"] = (root / "train" / "checkpoint.json").string();
    const auto ecfg_path = root / "eval.json";
    json_to_file(ecfg, ecfg_path.string());
    ASSERT_EQ(run_cli("eval --config " + ecfg_path.string()), 0);
    EXPECT_TRUE(fs::exists(root / "eval" / "eval.csv"));
    const json esum = json_from_file((root / "eval" / "summary.json").string());
    EXPECT_EQ(esum["total"], 10);

    ASSERT_EQ(run_cli("attack --config " + ecfg_path.string() + " --out " +
                      (root / "atk").string()),
              0);
    const auto atk_rows = read_csv(root / "atk" / "attack.csv");
    ASSERT_GE(atk_rows.size(), 1u);
    EXPECT_EQ(atk_rows[0],
              (std::vector<std::string>{"sample_id", "label_preserved", "tau", "cosine",
                                        "pearson", "topk"}));
    const json asum = json_from_file((root / "atk" / "summary.json").string());
    EXPECT_EQ(asum["total"].get<int>(),
              asum["evaluated"].get<int>() + asum["skipped_misclassified"].get<int>());

    ASSERT_EQ(run_cli("consistency --config " + ecfg_path.string() + " --out " +
                      (root / "cons").string()),
              0);
    const auto cons = read_csv(root / "cons" / "consistency.csv");
    ASSERT_EQ(cons.size(), 2u);
    EXPECT_EQ(cons[0][0], "model_id");
    EXPECT_EQ(cons[0][3], "layer0");
    EXPECT_EQ(cons[1][0], "checkpoint.json");
    EXPECT_EQ(cons[1][1], "blobs");

    json scfg{{"schema_version", 1}, {"out_dir", (root / "sim").string()},
              {"simulate", {{"dim", 40}, {"n_samples", 30}}}};
    const auto scfg_path = root / "sim.json";
    json_to_file(scfg, scfg_path.string());
    ASSERT_EQ(run_cli("simulate --config " + scfg_path.string() + " --seed 5"), 0);
    EXPECT_EQ(read_csv(root / "sim" / "simulate.csv").size(), 31u);
    const json ssum = json_from_file((root / "sim" / "summary.json").string());
    EXPECT_EQ(ssum["seed"], 5);
    EXPECT_TRUE(ssum["association_defined"].get<bool>());
    // the seed override lands in the echoed config too
    const json echoed = json_from_file((root / "sim" / "config.json").string());
    EXPECT_EQ(echoed["seed"], 5);

    json tcfg{{"schema_version", 1}, {"out_dir", (root / "thm").string()},
              {"theorem", {{"trials", 6}, {"max_d", 4}, {"tau_trials", 150},
                           {"tau_dims", {3}}}}};
    const auto tcfg_path = root / "thm.json";
    json_to_file(tcfg, tcfg_path.string());
    ASSERT_EQ(run_cli("theorem --config " + tcfg_path.string()), 0);
    const json tsum = json_from_file((root / "thm" / "theorem.json").string());
    EXPECT_EQ(tsum["sequence_search"]["trials"], 6);
    ASSERT_EQ(tsum["conditional_tau_ordering"].size(), 2u);
}

TEST(Cli, ErrorExitCodes) {
    ASSERT_NE(cli_path(), nullptr);
    const auto root = work_dir() / "cli_err";
    fs::create_directories(root);

    EXPECT_EQ(run_cli(""), 2);                    // missing subcommand
    EXPECT_EQ(run_cli("explode --config x"), 2);  // unknown subcommand
    EXPECT_EQ(run_cli("simulate"), 2);            // --config is required
    EXPECT_EQ(run_cli("simulate --config " + (root / "missing.json").string()), 2);

    json bad{{"schema_version", 1}, {"rate", 1}};
    json_to_file(bad, (root / "bad.json").string());
    EXPECT_EQ(run_cli("simulate --config " + (root / "bad.json").string()), 2);

    json noschema{{"seed", 1}};
    json_to_file(noschema, (root / "noschema.json").string());
    EXPECT_EQ(run_cli("simulate --config " + (root / "noschema.json").string()), 2);

    // eval without a checkpoint is a config error
    json nockpt{{"schema_version", 1}, {"out_dir", (root / "o").string()},
                {"dataset", {{"kind", "blobs"}, {"n", 8}}}};
    json_to_file(nockpt, (root / "nockpt.json").string());
    EXPECT_EQ(run_cli("eval --config " + (root / "nockpt.json").string()), 2);

    // diverging training exits 3
    json div{{"schema_version", 1},
             {"seed", 3},
             {"out_dir", (root / "div").string()},
             {"dataset", {{"kind", "moons"}, {"n", 16}, {"noise", 0.1}}},
             {"model", {{"hidden", {6}}}},
             {"train", {{"loss", "AT"}, {"epochs", 2}, {"batch_size", 8},
                        {"learning_rate", 1e160}, {"m_train", 3},
                        {"attack", {{"epsilon", 0.05}, {"steps", 2}, {"restarts", 1}}}}}};
    json_to_file(div, (root / "div.json").string());
    EXPECT_EQ(run_cli("train --config " + (root / "div.json").string()), 3);
}
