#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "multiea/encoder.hpp"
#include "multiea/io.hpp"

using namespace multiea;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        std::random_device rd;
        auto p = fs::temp_directory_path() / ("multiea_cli_" + std::to_string(rd()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

/// Runs the CLI with `args`; stdout and stderr go to `<work>/last.log`.
int run(const std::string& args) {
    const auto log = work_dir() / "last.log";
    const std::string cmd = std::string("\"") + MULTIEA_CLI_PATH + "\" " + args + " >\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string last_log() { return slurp(work_dir() / "last.log"); }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const std::string kFastTrain = "--dim 16 --max-epochs 4 --negatives 2 --k 1,10,20 --threads 1";

/// `metric<TAB>K<TAB>value` rows keyed by (metric, K).
std::map<std::pair<std::string, int>, double> read_report(const fs::path& path) {
    std::map<std::pair<std::string, int>, double> out;
    std::istringstream in(slurp(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string metric;
        int k = 0;
        double v = 0;
        std::getline(row, metric, '\t');
        row >> k >> v;
        out[{metric, k}] = v;
    }
    return out;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        ASSERT_EQ(run("gen-synthetic --entities 80 --relations 4 --triples 320 --seed 5 --out " + q(dataset())), 0)
            << last_log();
        ASSERT_EQ(run("train --dataset " + q(dataset()) + " --strategy each --infer " + kFastTrain + " --out " +
                      q(model())),
                  0)
            << last_log();
    }
    static void TearDownTestSuite() { fs::remove_all(work_dir()); }

    static fs::path dataset() { return work_dir() / "synthetic"; }
    static fs::path model() { return work_dir() / "model"; }
};

} // namespace

TEST_F(Cli, TrainWritesArtifacts) {
    for (const char* f : {"checkpoint.bin", "loss_curve.tsv", "report.tsv", "manifest.json"})
        EXPECT_TRUE(fs::exists(model() / f)) << f;
    const auto curve = slurp(model() / "loss_curve.tsv");
    EXPECT_EQ(curve.rfind("epoch\tloss\tmonitor\n", 0), 0u);
    EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 5);
    const auto manifest = slurp(model() / "manifest.json");
    EXPECT_NE(manifest.find("\"inputs\""), std::string::npos);
    EXPECT_NE(manifest.find("train_labels.tsv"), std::string::npos);
}

TEST_F(Cli, AnchorWithoutIndexIsConfigError) {
    EXPECT_EQ(run("train --dataset " + q(dataset()) + " --strategy anchor --out " + q(work_dir() / "x")), 2);
    EXPECT_NE(last_log().find("anchor_index"), std::string::npos);
    EXPECT_FALSE(fs::exists(work_dir() / "x" / "checkpoint.bin"));
}

TEST_F(Cli, ConfigErrorsAreListedTogether) {
    const auto cfg = work_dir() / "bad.toml";
    std::ofstream(cfg) << "[train]\nmargin = -1.0\nnegative_groups = 0\nstrategy = \"nearest\"\n[eval]\nweights = [0.3, 0.3]\n";
    EXPECT_EQ(run("train --config " + q(cfg) + " --dataset " + q(dataset()) + " --out " + q(work_dir() / "x")), 2);
    const auto log = last_log();
    for (const char* needle : {"margin", "negative_groups", "nearest", "sum to 1"})
        EXPECT_NE(log.find(needle), std::string::npos) << needle;
}

TEST_F(Cli, OverridesWinOverConfig) {
    const auto cfg = work_dir() / "ok.toml";
    std::ofstream(cfg) << "dataset = " << q(dataset()) << "\n[train]\ndim = 0\nmax_epochs = 1\n";
    EXPECT_EQ(run("train --config " + q(cfg) + " --dim 8 --negatives 1 --k 1 --out " + q(work_dir() / "ov")), 0)
        << last_log();
    EXPECT_EQ(std::count(std::istreambuf_iterator<char>(std::ifstream(work_dir() / "ov" / "loss_curve.tsv").rdbuf()),
                         std::istreambuf_iterator<char>(), '\n'),
              2);
}

TEST_F(Cli, MissingDatasetIsDataError) {
    EXPECT_EQ(run("train --dataset " + q(work_dir() / "nope") + " --out " + q(work_dir() / "x")), 3);
}

TEST_F(Cli, DivergenceExitsWithFourAndRecordsIt) {
    const auto out = work_dir() / "diverged";
    EXPECT_EQ(run("train --dataset " + q(dataset()) + " --dim 8 --max-epochs 3 --lr 1e300 --out " + q(out)), 4);
    EXPECT_NE(slurp(out / "manifest.json").find("diverged"), std::string::npos);
    EXPECT_FALSE(fs::exists(out / "checkpoint.bin"));
}

TEST_F(Cli, SingleThreadedTrainingIsByteIdentical) {
    ASSERT_EQ(run("train --dataset " + q(dataset()) + " " + kFastTrain + " --out " + q(work_dir() / "again")), 0);
    EXPECT_EQ(slurp(model() / "checkpoint.bin"), slurp(work_dir() / "again" / "checkpoint.bin"));
    EXPECT_EQ(slurp(model() / "loss_curve.tsv"), slurp(work_dir() / "again" / "loss_curve.tsv"));
    EXPECT_EQ(slurp(model() / "report.tsv"), slurp(work_dir() / "again" / "report.tsv"));
}

TEST_F(Cli, NoInferMatchesGammaOne) {
    const auto ckpt = q(model() / "checkpoint.bin");
    ASSERT_EQ(run("eval --dataset " + q(dataset()) + " --checkpoint " + ckpt + " --no-infer --out " +
                  q(work_dir() / "off")),
              0)
        << last_log();
    ASSERT_EQ(run("eval --dataset " + q(dataset()) + " --checkpoint " + ckpt + " --infer --gamma 1.0 --out " +
                  q(work_dir() / "one")),
              0);
    EXPECT_EQ(slurp(work_dir() / "off" / "report.tsv"), slurp(work_dir() / "one" / "report.tsv"));
}

TEST_F(Cli, ReportValuesAreMonotoneInK) {
    const auto report = read_report(model() / "report.tsv");
    ASSERT_TRUE(report.count({"M-Hits", 1}));
    std::set<std::string> metrics;
    for (const auto& [key, v] : report) {
        metrics.insert(key.first);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    for (const auto& m : metrics) {
        EXPECT_LE(report.at({m, 1}), report.at({m, 10})) << m;
        EXPECT_LE(report.at({m, 10}), report.at({m, 20})) << m;
    }
}

TEST_F(Cli, EvalRejectsMismatchedCheckpoint) {
    const auto other = work_dir() / "other";
    ASSERT_EQ(run("gen-synthetic --entities 50 --relations 4 --triples 200 --out " + q(other)), 0);
    EXPECT_EQ(run("eval --dataset " + q(other) + " --checkpoint " + q(model() / "checkpoint.bin")), 3);
}

TEST_F(Cli, EvalDumpsTopCandidates) {
    ASSERT_EQ(run("eval --dataset " + q(dataset()) + " --checkpoint " + q(model() / "checkpoint.bin") +
                  " --k 1 --dump-top 3 --dump-similarity " + q(work_dir() / "dump") + " --out " +
                  q(work_dir() / "dumped")),
              0)
        << last_log();
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(work_dir() / "dump")) {
        ++files;
        const auto text = slurp(entry.path());
        const auto lines = std::count(text.begin(), text.end(), '\n');
        EXPECT_EQ(lines % 3, 0);
        EXPECT_GT(lines, 0);
    }
    EXPECT_EQ(files, 6u);
}

TEST_F(Cli, ExportedEmbeddingsRoundTrip) {
    const auto out = work_dir() / "emb";
    ASSERT_EQ(run("export-embeddings --dataset " + q(dataset()) + " --checkpoint " + q(model() / "checkpoint.bin") +
                  " --out " + q(out)),
              0)
        << last_log();
    const auto ds = load_dataset(dataset());
    const auto params = load_checkpoint(model() / "checkpoint.bin");
    std::vector<GraphContext> contexts;
    for (const auto& kg : ds.kgs) contexts.push_back(make_graph_context(kg));
    const auto enc = encode(contexts, params);
    for (std::size_t m = 0; m < ds.kgs.size(); ++m) {
        std::ifstream in(out / (ds.names[m] + ".tsv"));
        const auto file = read_embeddings(in);
        EXPECT_EQ(file.ids, ds.kgs[m].entity_names);
        ASSERT_EQ(file.table.rows, enc.tables[m].rows);
        for (std::size_t i = 0; i < file.table.values.size(); ++i)
            ASSERT_NEAR(file.table.values[i], enc.tables[m].values[i], 1e-6);
        for (std::size_t r = 0; r < file.table.rows; ++r) EXPECT_NEAR(norm2(file.table.row(r)), 1.0, 1e-5);
        EXPECT_EQ(slurp(out / (ds.names[m] + ".ent_ids.tsv")), slurp(dataset() / ds.names[m] / "ent_ids.tsv"));
    }
}

TEST_F(Cli, ExportNeedsCheckpoint) {
    EXPECT_EQ(run("export-embeddings --dataset " + q(dataset()) + " --checkpoint " + q(work_dir() / "none.bin") +
                  " --out " + q(work_dir() / "e2")),
              3);
}

TEST_F(Cli, BuildDatasetThresholdZeroIsSuperset) {
    const auto raw = work_dir() / "raw";
    ASSERT_EQ(run("gen-synthetic --raw --entities 120 --relations 5 --triples 500 --seed 9 --out " + q(raw)), 0)
        << last_log();
    auto build = [&](int threshold, const fs::path& out) {
        std::string cmd = "build-dataset --kg en=" + q(raw / "kg0_triples.tsv") + " --kg fr=" +
                          q(raw / "kg1_triples.tsv") + " --kg ja=" + q(raw / "kg2_triples.tsv") + " --pairs " +
                          q(raw / "kg0_kg1_pairs.tsv") + " --pairs " + q(raw / "kg0_kg2_pairs.tsv") +
                          " --degree-threshold " + std::to_string(threshold) + " --out " + q(out);
        return run(cmd);
    };
    ASSERT_EQ(build(15, work_dir() / "b15"), 0) << last_log();
    ASSERT_EQ(build(0, work_dir() / "b0"), 0) << last_log();
    const auto d15 = load_dataset(work_dir() / "b15");
    const auto d0 = load_dataset(work_dir() / "b0");
    EXPECT_EQ(d15.names, (std::vector<std::string>{"en", "fr", "ja"}));
    for (std::size_t m = 0; m < 3; ++m) {
        const std::set<std::string> wide(d0.kgs[m].entity_names.begin(), d0.kgs[m].entity_names.end());
        for (const auto& e : d15.kgs[m].entity_names) EXPECT_TRUE(wide.count(e)) << e;
        EXPECT_LE(d15.kgs[m].triples.size(), d0.kgs[m].triples.size());
    }
    EXPECT_EQ(d15.train_labels.size() + d15.test_labels.size(), d0.train_labels.size() + d0.test_labels.size());
    EXPECT_TRUE(fs::exists(work_dir() / "b15" / "stats.tsv"));
    EXPECT_TRUE(fs::exists(work_dir() / "b15" / "manifest.json"));
}

TEST_F(Cli, BuildDatasetMissingFileIsDataError) {
    EXPECT_EQ(run("build-dataset --kg a=" + q(work_dir() / "no.tsv") + " --kg b=" + q(work_dir() / "no2.tsv") +
                  " --pairs " + q(work_dir() / "no3.tsv") + " --out " + q(work_dir() / "bx")),
              3);
}

TEST_F(Cli, GammaSweepWritesOneReportPerValue) {
    const auto out = work_dir() / "sweep";
    ASSERT_EQ(run("sweep --param gamma --values 0,0.5,1 --dataset " + q(dataset()) + " " + kFastTrain + " --out " +
                  q(out)),
              0)
        << last_log();
    for (const char* v : {"0", "0.5", "1"}) EXPECT_TRUE(fs::exists(out / "sweep_gamma" / (std::string(v) + ".tsv")));
    const auto table = slurp(out / "sweep_gamma.tsv");
    EXPECT_EQ(table.rfind("gamma\tmetric\tK\tvalue\n", 0), 0u);
    // gamma = 1 is the first-order model, which is what train reported.
    EXPECT_EQ(slurp(out / "sweep_gamma" / "1.tsv"),
              [&] {
                  EXPECT_EQ(run("eval --dataset " + q(dataset()) + " --checkpoint " + q(model() / "checkpoint.bin") +
                                " --no-infer --k 1,10,20 --out " + q(work_dir() / "g1")),
                            0);
                  return slurp(work_dir() / "g1" / "report.tsv");
              }());
}

TEST_F(Cli, UnknownSweepParameterIsConfigError) {
    EXPECT_EQ(run("sweep --param dropout --dataset " + q(dataset()) + " --out " + q(work_dir() / "sx")), 2);
}

TEST_F(Cli, HelpAndBadFlags) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_NE(last_log().find("build-dataset"), std::string::npos);
    EXPECT_EQ(run("train --no-such-flag"), 2);
}
