// multiea: build datasets, train, evaluate, export embeddings and run sweeps.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "multiea/config.hpp"
#include "multiea/dataset.hpp"
#include "multiea/io.hpp"
#include "multiea/manifest.hpp"
#include "multiea/metrics.hpp"
#include "multiea/parallel.hpp"
#include "multiea/synthetic.hpp"
#include "multiea/training.hpp"

namespace fs = std::filesystem;
using namespace multiea;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

/// Thrown after the full list of validation problems has been printed.
struct ValidationFailed {};

void fail_if(const std::vector<std::string>& errors) {
    if (errors.empty()) return;
    for (const auto& e : errors) std::cerr << "config error: " << e << '\n';
    throw ValidationFailed{};
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// ---- shared option groups -------------------------------------------------------

struct TrainFlags {
    std::string strategy;
    std::size_t anchor_index = 0;
    double margin = 0.0;
    std::size_t negatives = 0;
    double learning_rate = 0.0;
    std::size_t dim = 0;
    std::size_t layers = 0;
    std::size_t patience = 0;
    std::size_t max_epochs = 0;
    std::uint64_t seed = 0;
    bool ordered_pairs = false;
    double monitor_fraction = 0.0;
    CLI::Option *o_strategy, *o_anchor, *o_margin, *o_neg, *o_lr, *o_dim, *o_layers, *o_patience, *o_epochs, *o_seed,
        *o_ordered, *o_monitor;

    void add(CLI::App* app) {
        o_strategy = app->add_option("--strategy", strategy, "alignment strategy: mean, anchor or each");
        o_anchor = app->add_option("--anchor-index", anchor_index, "anchor KG index for --strategy anchor");
        o_margin = app->add_option("--margin", margin, "margin of the ranking loss (default 1)");
        o_neg = app->add_option("--negatives", negatives, "negative groups per positive (default 10)");
        o_lr = app->add_option("--lr", learning_rate, "Adam learning rate (default 0.01)");
        o_dim = app->add_option("--dim", dim, "embedding dimension (default 256)");
        o_layers = app->add_option("--layers", layers, "encoder layers (default 2)");
        o_patience = app->add_option("--patience", patience, "early-stopping patience (default 10)");
        o_epochs = app->add_option("--max-epochs", max_epochs, "epoch limit (default 500)");
        o_seed = app->add_option("--seed", seed, "random seed (default 42)");
        o_ordered = app->add_flag("--ordered-pairs", ordered_pairs, "sum the each-other distance over ordered pairs");
        o_monitor = app->add_option("--monitor-fraction", monitor_fraction,
                                    "share of training labels held out for early stopping (default 0.1)");
    }

    void apply(TrainConfig& cfg, std::vector<std::string>& errors) const {
        if (o_strategy->count()) {
            if (auto s = parse_strategy(strategy))
                cfg.strategy = *s;
            else
                errors.push_back("unknown strategy '" + strategy + "' (expected mean, anchor or each)");
        }
        if (o_anchor->count()) cfg.anchor_index = anchor_index;
        if (o_margin->count()) cfg.margin = margin;
        if (o_neg->count()) cfg.negative_groups = negatives;
        if (o_lr->count()) cfg.learning_rate = learning_rate;
        if (o_dim->count()) cfg.dim = dim;
        if (o_layers->count()) cfg.layer_count = layers;
        if (o_patience->count()) cfg.patience = patience;
        if (o_epochs->count()) cfg.max_epochs = max_epochs;
        if (o_seed->count()) cfg.rng_seed = seed;
        if (o_ordered->count()) cfg.ordered_pairs = ordered_pairs;
        if (o_monitor->count()) cfg.monitor_fraction = monitor_fraction;
    }
};

struct EvalFlags {
    bool infer = true;
    double gamma = 0.2;
    std::vector<double> weights;
    std::vector<std::size_t> ks;
    bool full_pool = false;
    CLI::Option *o_infer, *o_gamma, *o_weights, *o_ks, *o_full;

    void add(CLI::App* app) {
        o_infer = app->add_flag("--infer,!--no-infer", infer, "apply two-order inference enhancement (default on)");
        o_gamma = app->add_option("--gamma", gamma, "first-order similarity weight; the rest is split across paths");
        o_weights = app->add_option("--weights", weights, "explicit weights: first-order, then one per path")
                        ->delimiter(',');
        o_ks = app->add_option("--k", ks, "Hits@K cut-offs (default 1,10,20)")->delimiter(',');
        o_full = app->add_flag("--full-pool", full_pool, "rank against every entity instead of the test labels");
    }

    void apply(EvalOptions& opt) const {
        if (o_infer->count()) opt.enhance = infer;
        if (o_gamma->count()) opt.first_order_weight = gamma;
        if (o_weights->count()) opt.weights = weights;
        if (o_ks->count()) opt.ks = ks;
        if (o_full->count()) opt.full_pool = full_pool;
    }
};

RunConfig load_run_config(const std::string& path, std::vector<std::string>& errors) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), errors, path);
}

nlohmann::json train_json(const TrainConfig& c) {
    nlohmann::json j{{"strategy", to_string(c.strategy)},
                     {"margin", c.margin},
                     {"negative_groups", c.negative_groups},
                     {"learning_rate", c.learning_rate},
                     {"dim", c.dim},
                     {"layer_count", c.layer_count},
                     {"patience", c.patience},
                     {"max_epochs", c.max_epochs},
                     {"seed", c.rng_seed},
                     {"ordered_pairs", c.ordered_pairs},
                     {"monitor_fraction", c.monitor_fraction}};
    j["anchor_index"] = c.anchor_index ? nlohmann::json(*c.anchor_index) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json eval_json(const EvalOptions& e) {
    return {{"infer", e.enhance}, {"gamma", e.first_order_weight}, {"weights", e.weights},
            {"ks", e.ks},         {"full_pool", e.full_pool}};
}

nlohmann::json report_json(const EvalReport& r) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, mh] : r.m_hits) j["M-Hits@" + std::to_string(k)] = mh.value;
    for (const auto& [pair, by_k] : r.pair_hits)
        for (const auto& [k, h] : by_k)
            j["Hits@" + std::to_string(k) + "[" + r.kg_name(pair.first) + "-" + r.kg_name(pair.second) + "]"] = h.hits;
    return j;
}

/// Resolves the dataset directory and merges file config with command-line overrides.
struct Prepared {
    RunConfig cfg;
    MultiKgDataset ds;
};

Prepared prepare(const std::string& config_path, const std::string& dataset_flag, const TrainFlags* tf,
                 const EvalFlags* ef) {
    std::vector<std::string> errors;
    Prepared p;
    p.cfg = load_run_config(config_path, errors);
    if (!dataset_flag.empty()) p.cfg.dataset = dataset_flag;
    if (tf) tf->apply(p.cfg.train, errors);
    if (ef) ef->apply(p.cfg.eval);
    if (p.cfg.dataset.empty()) errors.emplace_back("no dataset given (--dataset or 'dataset' in the config file)");
    auto more = validate(p.cfg);
    errors.insert(errors.end(), more.begin(), more.end());
    fail_if(errors);
    p.ds = load_dataset(p.cfg.dataset);
    fail_if(validate(p.cfg, p.ds.arity()));
    return p;
}

EncodedEmbeddings encode_dataset(const MultiKgDataset& ds, const ModelParams& params) {
    std::vector<GraphContext> contexts;
    for (const auto& kg : ds.kgs) contexts.push_back(make_graph_context(kg));
    return encode(contexts, params);
}

void write_report(const fs::path& path, const EvalReport& report) {
    auto out = open_output(path);
    report.write_tsv(out);
}

// ---- build-dataset ----------------------------------------------------------------

struct BuildArgs {
    std::vector<std::string> kgs;
    std::vector<std::string> pairs;
    std::size_t degree_threshold = 15;
    double train_ratio = 0.3;
    std::uint64_t seed = 42;
    std::string out;
};

int cmd_build_dataset(const BuildArgs& a) {
    std::vector<std::string> errors;
    std::vector<std::pair<std::string, std::string>> specs;
    for (const auto& s : a.kgs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
            errors.push_back("--kg expects name=path, got '" + s + "'");
        else
            specs.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (specs.size() < 2) errors.emplace_back("at least two --kg inputs are required (pivot first)");
    if (a.pairs.size() + 1 != a.kgs.size())
        errors.push_back("expected " + std::to_string(a.kgs.empty() ? 0 : a.kgs.size() - 1) +
                         " --pairs files (one per non-pivot KG), got " + std::to_string(a.pairs.size()));
    if (!(a.train_ratio > 0.0 && a.train_ratio < 1.0)) errors.emplace_back("--train-ratio must lie in (0, 1)");
    fail_if(errors);

    RunManifest manifest;
    manifest.command = "build-dataset";
    manifest.config = {{"degree_threshold", a.degree_threshold}, {"train_ratio", a.train_ratio}, {"kgs", a.kgs},
                       {"pairs", a.pairs}};
    manifest.seeds = {{"split", a.seed}};

    std::vector<KnowledgeGraph> raw;
    std::vector<IdMap> entity_maps;
    for (const auto& [name, path] : specs) {
        auto in = open_input(path);
        IdMap ents, rels;
        try {
            raw.push_back(load_kg(in, ents, rels));
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
        entity_maps.push_back(std::move(ents));
        manifest.add_input(path);
    }
    std::vector<PairTable> tables;
    std::size_t skipped_total = 0;
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
        auto in = open_input(a.pairs[i]);
        std::size_t skipped = 0;
        tables.push_back(read_pair_table(in, entity_maps[0], entity_maps[i + 1], &skipped, a.pairs[i]));
        skipped_total += skipped;
        manifest.add_input(a.pairs[i]);
    }
    const auto labels = join_pairwise_labels(tables, specs.size());
    if (labels.empty()) throw DataError("the pair files share no pivot entity; no labels to build");

    std::vector<InducedSubgraph> subgraphs;
    for (std::size_t m = 0; m < raw.size(); ++m) {
        std::vector<std::size_t> seeds;
        for (const auto& l : labels) seeds.push_back(l[m]);
        subgraphs.push_back(induce_subgraph(raw[m], seeds, a.degree_threshold));
    }
    auto [kept, dropped] = remap_labels(labels, subgraphs);

    MultiKgDataset ds;
    for (std::size_t m = 0; m < specs.size(); ++m) {
        ds.names.push_back(specs[m].first);
        ds.kgs.push_back(std::move(subgraphs[m].kg));
    }
    const fs::path out = a.out;
    {
        auto f = open_output(out / "labels.tsv");
        write_labels(f, kept, ds.kgs);
    }
    auto [train, test] = split_labels(kept, a.train_ratio, a.seed);
    ds.train_labels = std::move(train);
    ds.test_labels = std::move(test);
    ds.validate();
    save_dataset(out, ds);
    {
        auto f = open_output(out / "stats.tsv");
        write_stats(f, ds);
    }

    std::cout << "labels: " << kept.size() << " (" << dropped << " dropped by subgraph induction, " << skipped_total
              << " pair rows naming unknown entities)\n"
              << "train/test: " << ds.train_labels.size() << '/' << ds.test_labels.size() << '\n'
              << "label ratio: " << fmt(label_ratio(ds)) << '\n';
    write_stats(std::cout, ds);

    manifest.results = {{"labels", kept.size()},
                        {"dropped_labels", dropped},
                        {"skipped_pair_rows", skipped_total},
                        {"train_labels", ds.train_labels.size()},
                        {"test_labels", ds.test_labels.size()},
                        {"label_ratio", label_ratio(ds)}};
    for (const auto* f : {"kgs.tsv", "labels.tsv", "stats.tsv", "train_labels.tsv", "test_labels.tsv"})
        manifest.add_output(out / f);
    for (const auto& n : ds.names) manifest.add_output(out / n);
    manifest.write(out / "manifest.json");
    return 0;
}

// ---- gen-synthetic ------------------------------------------------------------------

struct SyntheticArgs {
    PlantedSpec spec;
    bool raw = false;
    std::string out;
};

int cmd_gen_synthetic(const SyntheticArgs& a) {
    const auto ds = planted_alignment(a.spec);
    const fs::path out = a.out;
    RunManifest manifest;
    manifest.command = "gen-synthetic";
    manifest.config = {{"kgs", a.spec.kg_count},         {"entities", a.spec.entity_count},
                       {"relations", a.spec.relation_count}, {"triples", a.spec.triple_count},
                       {"train_ratio", a.spec.train_ratio},  {"raw", a.raw}};
    manifest.seeds = {{"generator", a.spec.seed}, {"split", a.spec.seed + 1}};
    if (a.raw) {
        // Raw inputs for build-dataset: one triple file per KG and pivot-keyed pair files.
        std::vector<AlignmentLabel> labels = ds.train_labels;
        labels.insert(labels.end(), ds.test_labels.begin(), ds.test_labels.end());
        std::sort(labels.begin(), labels.end());
        for (std::size_t m = 0; m < ds.kgs.size(); ++m) {
            const auto path = out / (ds.names[m] + "_triples.tsv");
            auto f = open_output(path);
            write_triples(f, ds.kgs[m]);
            manifest.add_output(path);
        }
        for (std::size_t m = 1; m < ds.kgs.size(); ++m) {
            const auto path = out / (ds.names[0] + "_" + ds.names[m] + "_pairs.tsv");
            auto f = open_output(path);
            for (const auto& l : labels)
                f << ds.kgs[0].entity_names[l[0]] << '\t' << ds.kgs[m].entity_names[l[m]] << '\n';
            manifest.add_output(path);
        }
    } else {
        save_dataset(out, ds);
        manifest.add_output(out);
    }
    manifest.write(out / "manifest.json");
    std::cout << "wrote " << ds.kgs.size() << " KGs with " << ds.train_labels.size() + ds.test_labels.size()
              << " planted labels to " << out.string() << '\n';
    return 0;
}

// ---- train --------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string dataset;
    std::string out;
    TrainFlags train;
    EvalFlags eval;
};

int cmd_train(const TrainArgs& a) {
    auto p = prepare(a.config, a.dataset, &a.train, &a.eval);
    const fs::path out = a.out;
    RunManifest manifest;
    manifest.command = "train";
    manifest.config = {{"dataset", p.cfg.dataset}, {"train", train_json(p.cfg.train)}, {"eval", eval_json(p.cfg.eval)},
                       {"threads", thread_count()}};
    manifest.seeds = {{"train", p.cfg.train.rng_seed}};
    manifest.add_input_tree(p.cfg.dataset);

    TrainResult result;
    try {
        Trainer trainer(p.ds, p.cfg.train);
        std::cerr << "training on " << trainer.loss_labels().size() << " labels, monitoring "
                  << trainer.monitor_labels().size() << '\n';
        result = trainer.run();
    } catch (const DivergenceError& e) {
        manifest.results = {{"status", "diverged"}, {"epoch", e.epoch()}, {"message", e.what()}};
        manifest.write(out / "manifest.json");
        throw;
    }

    save_checkpoint(out / "checkpoint.bin", result.params);
    {
        auto f = open_output(out / "loss_curve.tsv");
        f << "epoch\tloss\tmonitor\n";
        char buf[96];
        for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
            const double mon = e < result.monitor_curve.size() ? result.monitor_curve[e] : -1.0;
            std::snprintf(buf, sizeof buf, "%zu\t%.10g\t%.6f\n", e + 1, result.loss_curve[e], mon);
            f << buf;
        }
    }
    const auto encoded = encode_dataset(p.ds, result.params);
    const auto report = evaluate(encoded, p.ds.test_labels, p.cfg.eval, p.ds.names);
    write_report(out / "report.tsv", report);
    report.write_summary(std::cout);

    double total = 0.0;
    for (double s : result.epoch_seconds) total += s;
    manifest.results = {{"status", "ok"},
                        {"epochs_run", result.epochs_run},
                        {"best_epoch", result.best_epoch + 1},
                        {"stopped_early", result.stopped_early},
                        {"train_seconds", total},
                        {"epoch_seconds", result.epoch_seconds},
                        {"test", report_json(report)}};
    for (const auto* f : {"checkpoint.bin", "loss_curve.tsv", "report.tsv"}) manifest.add_output(out / f);
    manifest.write(out / "manifest.json");
    std::cerr << "epochs: " << result.epochs_run << ", best: " << result.best_epoch + 1
              << (result.stopped_early ? " (early stop)" : "") << '\n';
    return 0;
}

// ---- eval ---------------------------------------------------------------------------

struct EvalArgs {
    std::string config;
    std::string dataset;
    std::string checkpoint;
    std::string out;
    std::string dump_similarity;
    std::size_t dump_top = 10;
    EvalFlags eval;
};

int cmd_eval(const EvalArgs& a) {
    auto p = prepare(a.config, a.dataset, nullptr, &a.eval);
    const auto params = load_checkpoint(a.checkpoint);
    check_compatible(params, p.ds);
    const auto encoded = encode_dataset(p.ds, params);
    DirectionalSimilarities sims;
    const auto report = evaluate(encoded, p.ds.test_labels, p.cfg.eval, p.ds.names, &sims);
    report.write_summary(std::cout);

    RunManifest manifest;
    manifest.command = "eval";
    manifest.config = {{"dataset", p.cfg.dataset}, {"checkpoint", a.checkpoint}, {"eval", eval_json(p.cfg.eval)}};
    manifest.add_input_tree(p.cfg.dataset);
    manifest.add_input(a.checkpoint);
    manifest.results = {{"seconds", report.seconds}, {"test", report_json(report)}};

    if (!a.out.empty()) {
        const fs::path out = a.out;
        write_report(out / "report.tsv", report);
        manifest.add_output(out / "report.tsv");
        if (!a.dump_similarity.empty()) {
            for (const auto& [pair, s] : sims) {
                const auto path = fs::path(a.dump_similarity) /
                                  (p.ds.names[pair.first] + "-" + p.ds.names[pair.second] + ".tsv");
                auto f = open_output(path);
                write_similarity_top(f, s, p.ds.kgs[pair.first].entity_names, p.ds.kgs[pair.second].entity_names,
                                     a.dump_top);
                manifest.add_output(path);
            }
        }
        manifest.write(out / "manifest.json");
    } else {
        report.write_tsv(std::cout);
    }
    return 0;
}

// ---- export-embeddings ------------------------------------------------------------------

struct ExportArgs {
    std::string dataset;
    std::string checkpoint;
    std::string out;
};

int cmd_export(const ExportArgs& a) {
    const auto params = load_checkpoint(a.checkpoint);
    const auto ds = load_dataset(a.dataset);
    check_compatible(params, ds);
    const auto encoded = encode_dataset(ds, params);
    const fs::path out = a.out;
    RunManifest manifest;
    manifest.command = "export-embeddings";
    manifest.config = {{"dataset", a.dataset}, {"checkpoint", a.checkpoint}};
    manifest.add_input(a.checkpoint);
    manifest.add_input_tree(a.dataset);
    for (std::size_t m = 0; m < ds.kgs.size(); ++m) {
        const auto emb = out / (ds.names[m] + ".tsv");
        auto f = open_output(emb);
        write_embeddings(f, encoded.tables[m], ds.kgs[m].entity_names);
        const auto ids = out / (ds.names[m] + ".ent_ids.tsv");
        fs::copy_file(fs::path(a.dataset) / ds.names[m] / "ent_ids.tsv", ids, fs::copy_options::overwrite_existing);
        manifest.add_output(emb);
        manifest.add_output(ids);
    }
    manifest.write(out / "manifest.json");
    std::cout << "exported " << ds.kgs.size() << " embedding tables to " << out.string() << '\n';
    return 0;
}

// ---- sweep ------------------------------------------------------------------------------

struct SweepArgs {
    std::string config;
    std::string dataset;
    std::string out;
    std::vector<std::string> params;
    std::vector<double> values;
    TrainFlags train;
    EvalFlags eval;
};

const std::map<std::string, std::vector<double>>& default_grids() {
    static const std::map<std::string, std::vector<double>> grids{
        {"gamma", {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}},
        {"margin", {0.5, 1.0, 1.5, 2.0, 2.5, 3.0}},
        {"negatives", {1, 5, 10, 15, 20, 25}},
        {"train-ratio", {0.1, 0.2, 0.3, 0.4, 0.5}},
    };
    return grids;
}

int cmd_sweep(const SweepArgs& a) {
    std::vector<std::string> errors;
    auto params = a.params;
    if (params.empty() || (params.size() == 1 && params[0] == "all")) params = {"gamma", "margin", "negatives", "train-ratio"};
    for (const auto& name : params)
        if (!default_grids().count(name))
            errors.push_back("unknown sweep parameter '" + name + "' (gamma, margin, negatives, train-ratio, all)");
    if (!a.values.empty() && params.size() != 1) errors.emplace_back("--values needs exactly one --param");
    fail_if(errors);
    auto p = prepare(a.config, a.dataset, &a.train, &a.eval);

    const fs::path out = a.out;
    RunManifest manifest;
    manifest.command = "sweep";
    manifest.config = {{"dataset", p.cfg.dataset}, {"train", train_json(p.cfg.train)}, {"eval", eval_json(p.cfg.eval)},
                       {"params", params}};
    manifest.seeds = {{"train", p.cfg.train.rng_seed}};
    manifest.add_input_tree(p.cfg.dataset);

    std::vector<AlignmentLabel> all = p.ds.train_labels;
    all.insert(all.end(), p.ds.test_labels.begin(), p.ds.test_labels.end());

    for (const auto& name : params) {
        const auto grid = a.values.empty() ? default_grids().at(name) : a.values;
        const auto table_path = out / ("sweep_" + name + ".tsv");
        auto table = open_output(table_path);
        table << name << "\tmetric\tK\tvalue\n";
        manifest.add_output(table_path);

        std::optional<ModelParams> shared; // gamma only changes inference
        for (double v : grid) {
            auto train_cfg = p.cfg.train;
            auto eval_cfg = p.cfg.eval;
            auto ds = p.ds;
            std::vector<std::string> errs;
            if (name == "gamma") {
                eval_cfg.enhance = true;
                eval_cfg.weights.clear();
                eval_cfg.first_order_weight = v;
            } else if (name == "margin") {
                train_cfg.margin = v;
            } else if (name == "negatives") {
                if (v < 1 || v != std::floor(v)) errs.push_back("negatives value " + fmt(v) + " must be a positive integer");
                train_cfg.negative_groups = static_cast<std::size_t>(v);
            } else {
                auto [tr, te] = split_labels(all, v, train_cfg.rng_seed);
                ds.train_labels = std::move(tr);
                ds.test_labels = std::move(te);
            }
            auto more = train_cfg.validate(ds.arity());
            errs.insert(errs.end(), more.begin(), more.end());
            validate_eval(eval_cfg, errs);
            fail_if(errs);

            ModelParams trained;
            if (name == "gamma" && shared) {
                trained = *shared;
            } else {
                trained = train(ds, train_cfg).params;
                if (name == "gamma") shared = trained;
            }
            const auto report = evaluate(encode_dataset(ds, trained), ds.test_labels, eval_cfg, ds.names);
            const auto report_path = out / ("sweep_" + name) / (fmt(v) + ".tsv");
            {
                auto single = open_output(report_path);
                report.write_tsv(single);
            }
            manifest.add_output(report_path);
            std::stringstream rows;
            report.write_tsv(rows);
            std::string line;
            std::getline(rows, line); // header
            while (std::getline(rows, line)) table << fmt(v) << '\t' << line << '\n';
            table.flush();
            const auto k1 = report.m_hits.empty() ? report.pair_hits.begin()->second.begin()->second.hits
                                                  : report.m_hits.begin()->second.value;
            std::cout << name << '=' << fmt(v) << "  " << (report.m_hits.empty() ? "Hits@" : "M-Hits@")
                      << report.ks.front() << '=' << fmt(k1) << '\n';
            manifest.results[name][fmt(v)] = report_json(report);
        }
    }
    manifest.write(out / "manifest.json");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-KG entity alignment: dataset building, training, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker threads for similarity kernels (MULTIEA_THREADS; default 1)");

    BuildArgs build;
    auto* b = app.add_subcommand("build-dataset", "join pair-wise labels through a pivot KG and induce subgraphs");
    b->add_option("--kg", build.kgs, "name=triples.tsv; repeat per KG, pivot first")->required();
    b->add_option("--pairs", build.pairs, "pivot<TAB>other label file; one per non-pivot KG, in --kg order")
        ->required();
    b->add_option("--degree-threshold", build.degree_threshold, "keep seed neighbors with degree above this")
        ->capture_default_str();
    b->add_option("--train-ratio", build.train_ratio, "share of labels used for training")->capture_default_str();
    b->add_option("--seed", build.seed, "split seed")->capture_default_str();
    b->add_option("--out", build.out, "output dataset directory")->required();

    SyntheticArgs synth;
    auto* g = app.add_subcommand("gen-synthetic", "generate isomorphic random KGs with planted alignments");
    g->add_option("--kgs", synth.spec.kg_count, "number of KGs")->capture_default_str();
    g->add_option("--entities", synth.spec.entity_count, "entities per KG")->capture_default_str();
    g->add_option("--relations", synth.spec.relation_count, "relations per KG")->capture_default_str();
    g->add_option("--triples", synth.spec.triple_count, "triples per KG")->capture_default_str();
    g->add_option("--train-ratio", synth.spec.train_ratio, "share of labels used for training")->capture_default_str();
    g->add_option("--seed", synth.spec.seed, "generator seed")->capture_default_str();
    g->add_flag("--raw", synth.raw, "write raw triple and pair files for build-dataset instead of a dataset");
    g->add_option("--out", synth.out, "output directory")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train the encoder and write checkpoint, loss curve and test report");
    t->add_option("--config", tr.config, "TOML config; command-line options override it");
    t->add_option("--dataset", tr.dataset, "dataset directory");
    t->add_option("--out", tr.out, "output directory")->required();
    tr.train.add(t);
    tr.eval.add(t);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "score a checkpoint on the test labels");
    e->add_option("--config", ev.config, "TOML config; command-line options override it");
    e->add_option("--dataset", ev.dataset, "dataset directory");
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint.bin from train")->required();
    e->add_option("--out", ev.out, "directory for report.tsv and manifest.json (stdout when omitted)");
    e->add_option("--dump-similarity", ev.dump_similarity, "directory for per-pair top-candidate dumps (needs --out)");
    e->add_option("--dump-top", ev.dump_top, "candidates per row in similarity dumps")->capture_default_str();
    ev.eval.add(e);

    ExportArgs ex;
    auto* x = app.add_subcommand("export-embeddings", "write final entity embeddings as TSV, one file per KG");
    x->add_option("--dataset", ex.dataset, "dataset directory")->required();
    x->add_option("--checkpoint", ex.checkpoint, "checkpoint.bin from train")->required();
    x->add_option("--out", ex.out, "output directory")->required();

    SweepArgs sw;
    auto* s = app.add_subcommand("sweep", "grid over gamma, margin, negative groups and train ratio");
    s->add_option("--config", sw.config, "TOML config; command-line options override it");
    s->add_option("--dataset", sw.dataset, "dataset directory");
    s->add_option("--out", sw.out, "output directory")->required();
    s->add_option("--param", sw.params, "gamma, margin, negatives, train-ratio or all (repeatable)");
    s->add_option("--values", sw.values, "grid override for a single --param")->delimiter(',');
    sw.train.add(s);
    sw.eval.add(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : kExitConfig;
    }

    if (threads == 0) threads = threads_from_env();
    set_thread_count(threads == 0 ? 1 : threads);

    try {
        if (b->parsed()) return cmd_build_dataset(build);
        if (g->parsed()) return cmd_gen_synthetic(synth);
        if (t->parsed()) return cmd_train(tr);
        if (e->parsed()) return cmd_eval(ev);
        if (x->parsed()) return cmd_export(ex);
        if (s->parsed()) return cmd_sweep(sw);
    } catch (const ValidationFailed&) {
        return kExitConfig;
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << '\n';
        return kExitConfig;
    } catch (const DataError& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kExitData;
    } catch (const DivergenceError& err) {
        std::cerr << "diverged: " << err.what() << '\n';
        return kExitDivergence;
    } catch (const NumericError& err) {
        std::cerr << "numerical error: " << err.what() << '\n';
        return kExitDivergence;
    } catch (const fs::filesystem_error& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kExitData;
    }
    return 0;
}
