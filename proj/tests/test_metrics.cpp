#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "multiea/encoder.hpp"
#include "multiea/metrics.hpp"
#include "oracles.hpp"

using namespace multiea;

namespace {

SimilarityMatrix square(std::size_t n, std::vector<double> values) {
    SimilarityMatrix s;
    s.rows.resize(n);
    std::iota(s.rows.begin(), s.rows.end(), std::size_t{0});
    s.cols = s.rows;
    s.values = Tensor(n, n, std::move(values));
    return s;
}

SimilarityMatrix eye(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return square(n, v);
}

} // namespace

TEST(Hits, IdentityIsPerfect) {
    const auto s = eye(5);
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}};
    for (std::size_t k = 1; k <= 5; ++k) EXPECT_EQ(hits_at_k(s, pairs, k).hits, 1.0);
}

TEST(Hits, CounterpartsLastScoreZero) {
    auto s = eye(4);
    for (auto& v : s.values.values) v = 1.0 - v;
    EXPECT_EQ(hits_at_k(s, {{0, 0}, {1, 1}, {2, 2}, {3, 3}}, 1).hits, 0.0);
}

TEST(Hits, HandExample) {
    // l->r ranks (1, 3); r->l ranks (2, 1).
    const auto s = square(3, {0.8, 0.05, 0.2, 0.9, 0.1, 0.5, 0.0, 0.0, 0.3});
    const auto h = hits_at_k(s, {{0, 0}, {1, 1}}, 2);
    EXPECT_EQ(h.left, 0.5);
    EXPECT_EQ(h.right, 1.0);
    EXPECT_EQ(h.hits, 0.75);
}

TEST(Hits, Errors) {
    const auto s = eye(3);
    EXPECT_THROW(hits_at_k(s, {{0, 0}}, 4), ConfigError);
    EXPECT_THROW(hits_at_k(s, {{0, 0}}, 0), ConfigError);
    EXPECT_THROW(hits_at_k(s, {{0, 7}}, 1), DataError);
}

TEST(MHits, PerfectSimilarities) {
    DirectionalSimilarities sims;
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            if (a != b) sims.emplace(std::pair{a, b}, eye(3));
    const std::vector<AlignmentLabel> labels{{0, 0, 0, 0}, {1, 1, 1, 1}, {2, 2, 2, 2}};
    EXPECT_EQ(m_hits_at_k(sims, labels, 4, 1).value, 1.0);
}

TEST(MHits, HandExampleTwoThirds) {
    DirectionalSimilarities sims;
    sims.emplace(std::pair{0, 1}, eye(2));
    sims.emplace(std::pair{0, 2}, square(2, {1.0, 0.0, 1.0, 0.5})); // label 2 ranks 2nd
    sims.emplace(std::pair{1, 0}, eye(2));
    sims.emplace(std::pair{1, 2}, eye(2));
    sims.emplace(std::pair{2, 0}, eye(2));
    sims.emplace(std::pair{2, 1}, square(2, {0.0, 1.0, 0.0, 1.0})); // label 1 ranks 2nd
    const std::vector<AlignmentLabel> labels{{0, 0, 0}, {1, 1, 1}};
    const auto r = m_hits_at_k(sims, labels, 3, 1);
    EXPECT_EQ(r.per_target, (std::vector<double>{0.5, 1.0, 0.5}));
    EXPECT_DOUBLE_EQ(r.value, 2.0 / 3.0);
}

TEST(MHits, Guards) {
    DirectionalSimilarities sims;
    sims.emplace(std::pair{0, 1}, eye(2));
    sims.emplace(std::pair{1, 0}, eye(2));
    EXPECT_THROW(m_hits_at_k(sims, {{0, 0}}, 2, 1), ConfigError);
    sims.emplace(std::pair{0, 2}, eye(2));
    try {
        m_hits_at_k(sims, {{0, 0, 0}}, 3, 1);
        FAIL() << "expected a missing-matrix error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("(1, 2)"), std::string::npos);
    }
}

TEST(MHits, MatchesBruteForceOracle) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 3 + trial % 2;
        const std::size_t n = 2 + rng() % 5;
        const std::size_t labels = 1 + rng() % n;
        const auto inst = oracle::random_metric_instance(m, n, labels, rng);
        for (std::size_t k = 1; k <= std::min<std::size_t>(3, n); ++k)
            EXPECT_EQ(m_hits_at_k(inst.sims, inst.labels, m, k).value, oracle::m_hits(inst.sims, inst.labels, m, k));
    }
}

TEST(MHits, MonotoneInKAndStricterThanPairs) {
    std::mt19937_64 rng(18);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = oracle::random_metric_instance(4, 6, 5, rng);
        double prev = 0.0;
        for (std::size_t k = 1; k <= 6; ++k) {
            const auto r = m_hits_at_k(inst.sims, inst.labels, 4, k);
            EXPECT_GE(r.value, prev);
            prev = r.value;
            for (std::size_t target = 0; target < 4; ++target)
                for (std::size_t other = 0; other < 4; ++other) {
                    if (other == target) continue;
                    std::vector<std::pair<std::size_t, std::size_t>> pairs;
                    for (const auto& l : inst.labels) pairs.emplace_back(l[target], l[other]);
                    EXPECT_LE(r.per_target[target], hits_at_k(inst.sims.at({target, other}), pairs, k).left);
                }
        }
        EXPECT_EQ(prev, 1.0);
    }
}

TEST(Pools, LabelAndFull) {
    const std::vector<AlignmentLabel> labels{{4, 1, 0}, {2, 3, 5}};
    EXPECT_EQ(label_pools(labels, 3), (std::vector<std::vector<std::size_t>>{{4, 2}, {1, 3}, {0, 5}}));
    EXPECT_EQ(full_pools({2, 3}), (std::vector<std::vector<std::size_t>>{{0, 1}, {0, 1, 2}}));
}

TEST(Evaluate, ReportShapeAndIdentityEmbeddings) {
    std::mt19937_64 rng(19);
    const auto base = normalize_rows(xavier_uniform(8, 6, rng));
    EncodedEmbeddings enc;
    enc.tables.assign(3, base);
    std::vector<AlignmentLabel> labels;
    for (std::size_t i = 0; i < 8; ++i) labels.push_back({i, i, i});
    EvalOptions opts;
    opts.ks = {5, 1, 5};
    const auto report = evaluate(enc, labels, opts, {"a", "b", "c"});
    EXPECT_EQ(report.ks, (std::vector<std::size_t>{1, 5}));
    EXPECT_EQ(report.m_hits.at(1).value, 1.0);
    EXPECT_EQ(report.pair_hits.size(), 3u);
    std::ostringstream tsv;
    report.write_tsv(tsv);
    EXPECT_EQ(tsv.str().rfind("metric\tK\tvalue\nM-Hits\t1\t1.000000\nm_Hits[a]\t1\t1.000000\n", 0), 0u);
    std::ostringstream summary;
    report.write_summary(summary);
    EXPECT_NE(summary.str().find("M-Hits=100.00%"), std::string::npos);
}

TEST(Evaluate, NoEnhanceEqualsFirstWeightOne) {
    std::mt19937_64 rng(20);
    EncodedEmbeddings enc;
    for (int m = 0; m < 3; ++m) enc.tables.push_back(normalize_rows(xavier_uniform(10, 4, rng)));
    std::vector<AlignmentLabel> labels;
    for (std::size_t i = 0; i < 10; ++i) labels.push_back({i, (i + 3) % 10, (i * 3) % 10});
    EvalOptions off;
    off.enhance = false;
    off.ks = {1, 5};
    EvalOptions one;
    one.first_order_weight = 1.0;
    one.ks = {1, 5};
    std::ostringstream a, b;
    evaluate(enc, labels, off).write_tsv(a);
    evaluate(enc, labels, one).write_tsv(b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Evaluate, TwoKgsReportPairHitsOnly) {
    std::mt19937_64 rng(21);
    EncodedEmbeddings enc;
    for (int m = 0; m < 2; ++m) enc.tables.push_back(normalize_rows(xavier_uniform(5, 4, rng)));
    std::vector<AlignmentLabel> labels{{0, 1}, {1, 0}, {2, 2}};
    const auto report = evaluate(enc, labels, EvalOptions{{1}, true, 0.2, {}, false});
    EXPECT_TRUE(report.m_hits.empty());
    EXPECT_FALSE(report.enhanced);
    EXPECT_EQ(report.pair_hits.size(), 1u);
}
