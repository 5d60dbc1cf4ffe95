#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "multiea/encoder.hpp"
#include "multiea/io.hpp"
#include "multiea/synthetic.hpp"

using namespace multiea;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("multiea_io_" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

MultiKgDataset small_dataset() {
    PlantedSpec spec;
    spec.entity_count = 30;
    spec.relation_count = 4;
    spec.triple_count = 80;
    return planted_alignment(spec);
}

ModelParams small_params(const MultiKgDataset& ds, std::uint64_t seed = 1) {
    std::vector<KnowledgeGraph> aug;
    for (const auto& kg : ds.kgs) aug.push_back(kg.augmented() ? kg : augment_self_relations(kg));
    std::mt19937_64 rng(seed);
    return init_params(aug, 8, 2, rng);
}

} // namespace

TEST(IdMaps, RoundTrip) {
    std::ostringstream out;
    write_id_map(out, {"Q1", "Q7", "http://x/y"});
    std::istringstream in(out.str());
    const auto map = read_id_map(in, "ids");
    EXPECT_EQ(map.names(), (std::vector<std::string>{"Q1", "Q7", "http://x/y"}));
}

TEST(IdMaps, RejectsGapsAndDuplicates) {
    std::istringstream gap("0\ta\n2\tb\n");
    EXPECT_THROW(read_id_map(gap, "ids"), DataError);
    std::istringstream dup("0\ta\n1\ta\n");
    EXPECT_THROW(read_id_map(dup, "ids"), DataError);
    std::istringstream shape("0\ta\tb\n");
    EXPECT_THROW(read_id_map(shape, "ids"), DataError);
}

TEST(Labels, RoundTripThroughOriginalIds) {
    const auto ds = small_dataset();
    std::ostringstream out;
    write_labels(out, ds.test_labels, ds.kgs);
    std::vector<IdMap> maps(3);
    for (std::size_t m = 0; m < 3; ++m)
        for (const auto& n : ds.kgs[m].entity_names) maps[m].intern(n);
    std::istringstream in(out.str());
    EXPECT_EQ(read_labels(in, maps, "labels"), ds.test_labels);
    std::istringstream bad("kg0:e0\tnope\tkg2:e0\n");
    EXPECT_THROW(read_labels(bad, maps, "labels"), DataError);
}

TEST(PairTable, SkipsUnknownEntities) {
    IdMap a, b;
    a.intern("x");
    a.intern("y");
    b.intern("p");
    std::istringstream in("x\tp\ny\tq\nz\tp\n");
    std::size_t skipped = 0;
    const auto table = read_pair_table(in, a, b, &skipped);
    EXPECT_EQ(table, (PairTable{{0, 0}}));
    EXPECT_EQ(skipped, 2u);
    std::istringstream bad("x\n");
    EXPECT_THROW(read_pair_table(bad, a, b), DataError);
}

TEST(Dataset, DirectoryRoundTrip) {
    TempDir tmp;
    const auto ds = small_dataset();
    save_dataset(tmp.path() / "ds", ds);
    const auto back = load_dataset(tmp.path() / "ds");
    EXPECT_EQ(back.names, ds.names);
    EXPECT_EQ(back.train_labels, ds.train_labels);
    EXPECT_EQ(back.test_labels, ds.test_labels);
    for (std::size_t m = 0; m < 3; ++m) {
        EXPECT_EQ(back.kgs[m].entity_count, ds.kgs[m].entity_count);
        EXPECT_EQ(back.kgs[m].relation_count, ds.kgs[m].relation_count);
        EXPECT_EQ(back.kgs[m].triples, ds.kgs[m].triples);
        EXPECT_EQ(back.kgs[m].entity_names, ds.kgs[m].entity_names);
    }
    std::ostringstream stats;
    write_stats(stats, back);
    EXPECT_EQ(stats.str().substr(0, stats.str().find('\n')), "KG\tentities\trelations\ttriples\tlabels");
}

TEST(Dataset, AugmentedGraphsSaveWithoutSelfLoops) {
    TempDir tmp;
    auto ds = small_dataset();
    const auto original = ds.kgs[0].triples;
    for (auto& kg : ds.kgs) kg = augment_self_relations(kg);
    save_dataset(tmp.path() / "ds", ds);
    const auto back = load_dataset(tmp.path() / "ds");
    EXPECT_EQ(back.kgs[0].triples, original);
    EXPECT_FALSE(back.kgs[0].augmented());
}

TEST(Dataset, MissingFileIsDataError) {
    TempDir tmp;
    EXPECT_THROW(load_dataset(tmp.path() / "absent"), DataError);
}

TEST(Checkpoint, BinaryRoundTripIsExact) {
    const auto ds = small_dataset();
    const auto params = small_params(ds);
    std::stringstream buf;
    save_checkpoint(buf, params);
    const auto back = load_checkpoint(buf);
    EXPECT_EQ(back, params);
    EXPECT_NO_THROW(check_compatible(back, ds));

    std::stringstream again;
    save_checkpoint(again, back);
    std::stringstream first;
    save_checkpoint(first, params);
    EXPECT_EQ(again.str(), first.str());
}

TEST(Checkpoint, RejectsGarbageAndTruncation) {
    std::istringstream junk("not a checkpoint at all");
    EXPECT_THROW(load_checkpoint(junk), DataError);
    const auto ds = small_dataset();
    std::ostringstream out;
    save_checkpoint(out, small_params(ds));
    const auto bytes = out.str();
    std::istringstream cut(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(cut), DataError);
}

TEST(Checkpoint, CompatibilityCheck) {
    const auto ds = small_dataset();
    auto other = ds;
    other.kgs.pop_back();
    other.names.pop_back();
    EXPECT_THROW(check_compatible(small_params(ds), other), DataError);
    PlantedSpec bigger;
    bigger.entity_count = 31;
    bigger.relation_count = 4;
    bigger.triple_count = 80;
    EXPECT_THROW(check_compatible(small_params(planted_alignment(bigger)), ds), DataError);
}

TEST(Embeddings, RoundTripWithinPrintedPrecision) {
    const auto ds = small_dataset();
    std::vector<GraphContext> contexts;
    for (const auto& kg : ds.kgs) contexts.push_back(make_graph_context(kg));
    const auto enc = encode(contexts, small_params(ds));
    std::ostringstream out;
    write_embeddings(out, enc.tables[1], ds.kgs[1].entity_names);
    std::istringstream in(out.str());
    const auto back = read_embeddings(in);
    EXPECT_EQ(back.ids, ds.kgs[1].entity_names);
    ASSERT_EQ(back.table.rows, enc.tables[1].rows);
    ASSERT_EQ(back.table.cols, 8u);
    for (std::size_t i = 0; i < back.table.values.size(); ++i)
        EXPECT_NEAR(back.table.values[i], enc.tables[1].values[i], 5e-7 + 1e-12);
    for (std::size_t r = 0; r < back.table.rows; ++r) EXPECT_NEAR(norm2(back.table.row(r)), 1.0, 1e-5);
}

TEST(Embeddings, RejectsRaggedRows) {
    std::istringstream in("a\t0.1\t0.2\nb\t0.3\n");
    EXPECT_THROW(read_embeddings(in), DataError);
}

TEST(SimilarityDump, TopColumnsPerRow) {
    SimilarityMatrix s;
    s.rows = {0, 1};
    s.cols = {2, 0, 1};
    s.values = Tensor(2, 3, std::vector<double>{0.1, 0.7, 0.7, 0.9, 0.2, 0.3});
    std::ostringstream out;
    write_similarity_top(out, s, {"a", "b"}, {"x", "y", "z"}, 2);
    EXPECT_EQ(out.str(), "a\tx\t0.700000\na\ty\t0.700000\nb\tz\t0.900000\nb\ty\t0.300000\n");
}
