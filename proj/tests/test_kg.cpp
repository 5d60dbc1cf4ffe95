#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "multiea/kg.hpp"

using namespace multiea;

namespace {

KnowledgeGraph make_kg(std::size_t entities, std::size_t relations, std::vector<Triple> triples) {
    KnowledgeGraph kg;
    kg.entity_count = entities;
    kg.relation_count = relations;
    kg.triples = std::move(triples);
    return kg;
}

KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t r, std::size_t t) {
    std::uniform_int_distribution<std::size_t> e(0, n - 1), k(0, r - 1);
    std::set<Triple> seen;
    while (seen.size() < t) seen.insert({e(rng), k(rng), e(rng)});
    return make_kg(n, r, {seen.begin(), seen.end()});
}

} // namespace

TEST(LoadKg, EmptyStream) {
    const auto kg = load_kg_from_string("");
    EXPECT_EQ(kg.entity_count, 0u);
    EXPECT_EQ(kg.relation_count, 0u);
    EXPECT_TRUE(kg.triples.empty());
    EXPECT_FALSE(kg.augmented());
}

TEST(LoadKg, DuplicateLinesDropped) {
    const auto kg = load_kg_from_string("a\tr\tb\nb\tr\ta\na\tr\tb\n");
    EXPECT_EQ(kg.entity_count, 2u);
    EXPECT_EQ(kg.relation_count, 1u);
    ASSERT_EQ(kg.triples.size(), 2u);
    EXPECT_EQ(kg.triples[0], (Triple{0, 0, 1}));
    EXPECT_EQ(kg.triples[1], (Triple{1, 0, 0}));
}

TEST(LoadKg, FirstAppearanceOrder) {
    const auto kg = load_kg_from_string("x\tp\ty\r\n\ny\tq\tz\n");
    EXPECT_EQ(kg.entity_names, (std::vector<std::string>{"x", "y", "z"}));
    EXPECT_EQ(kg.relation_names, (std::vector<std::string>{"p", "q"}));
    EXPECT_EQ(kg.triples[1], (Triple{1, 1, 2}));
}

TEST(LoadKg, IntegerIdsAreOpaque) {
    const auto kg = load_kg_from_string("10\t5\t3\n3\t5\t10\n");
    EXPECT_EQ(kg.entity_count, 2u);
    EXPECT_EQ(kg.entity_names[0], "10");
}

TEST(LoadKg, MalformedLineReportsLineNumber) {
    try {
        load_kg_from_string("a\tr\tb\na r b\n");
        FAIL() << "expected a parse error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    EXPECT_THROW(load_kg_from_string("a\tr\n"), DataError);
    EXPECT_THROW(load_kg_from_string("a\tr\tb\tc\n"), DataError);
}

TEST(LoadKg, FrozenMapsRejectUnknownIds) {
    IdMap ents, rels;
    ents.intern("a");
    ents.intern("b");
    rels.intern("r");
    std::istringstream ok("a\tr\tb\n");
    EXPECT_EQ(load_kg(ok, ents, rels, true).triples.size(), 1u);
    std::istringstream bad("a\tr\tc\n");
    EXPECT_THROW(load_kg(bad, ents, rels, true), DataError);
}

TEST(Augment, AddsOneSelfLoopPerEntity) {
    const auto kg = make_kg(3, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 0}, {0, 1, 2}});
    const auto aug = augment_self_relations(kg);
    EXPECT_EQ(aug.relation_count, 3u);
    EXPECT_EQ(aug.triples.size(), 7u);
    ASSERT_TRUE(aug.self_relation_id);
    EXPECT_EQ(*aug.self_relation_id, aug.relation_count - 1);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_EQ(std::count(aug.triples.begin(), aug.triples.end(), Triple{i, 2, i}), 1);
    EXPECT_NO_THROW(aug.validate());
    EXPECT_EQ(aug.original_triple_count(), 4u);
    EXPECT_EQ(aug.original_relation_count(), 2u);
}

TEST(Augment, EmptyGraph) {
    const auto aug = augment_self_relations(KnowledgeGraph{});
    EXPECT_EQ(aug.relation_count, 1u);
    EXPECT_TRUE(aug.triples.empty());
}

TEST(Augment, TripleCountIsTriplesPlusEntities) {
    // 21497 triples over 3893 entities grow to 25390.
    KnowledgeGraph kg;
    kg.entity_count = 3893;
    kg.relation_count = 2;
    for (std::size_t t = 0; t < 21497; ++t) kg.triples.push_back({t % 3893, t % 2, (t % 3893 + 1 + t / 3893) % 3893});
    EXPECT_NO_THROW(kg.validate());
    EXPECT_EQ(augment_self_relations(kg).triples.size(), 25390u);
}

TEST(Augment, TwiceIsAnError) {
    const auto aug = augment_self_relations(make_kg(2, 1, {{0, 0, 1}}));
    EXPECT_THROW(augment_self_relations(aug), DataError);
}

TEST(NeighborIndex, RequiresAugmentation) {
    EXPECT_THROW(build_neighbor_index(make_kg(2, 1, {{0, 0, 1}})), DataError);
}

TEST(NeighborIndex, SingleEdgeIsBidirected) {
    const auto kg = augment_self_relations(make_kg(2, 1, {{0, 0, 1}}));
    const auto idx = build_neighbor_index(kg);
    const auto s0 = idx.segment(0);
    const auto s1 = idx.segment(1);
    EXPECT_EQ(std::vector<NeighborTuple>(s0.begin(), s0.end()), (std::vector<NeighborTuple>{{0, 1}, {1, 0}}));
    EXPECT_EQ(std::vector<NeighborTuple>(s1.begin(), s1.end()), (std::vector<NeighborTuple>{{0, 0}, {1, 1}}));
}

TEST(NeighborIndex, IsolatedEntityHasOnlySelf) {
    const auto kg = augment_self_relations(make_kg(3, 1, {{0, 0, 1}}));
    const auto idx = build_neighbor_index(kg);
    const auto s2 = idx.segment(2);
    ASSERT_EQ(s2.size(), 1u);
    EXPECT_EQ(s2[0], (NeighborTuple{1, 2}));
}

TEST(NeighborIndex, SymmetricPairAppearsOnce) {
    const auto kg = augment_self_relations(make_kg(2, 1, {{0, 0, 1}, {1, 0, 0}}));
    const auto idx = build_neighbor_index(kg);
    const auto s0 = idx.segment(0);
    EXPECT_EQ(std::count(s0.begin(), s0.end(), NeighborTuple{0, 1}), 1);
    EXPECT_EQ(s0.size(), 2u);
}

TEST(NeighborIndex, MatchesBruteForceSetsOnRandomGraphs) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const auto kg = augment_self_relations(random_graph(rng, 12, 3, 25));
        const auto idx = build_neighbor_index(kg);
        const auto self = *kg.self_relation_id;
        std::size_t total = 0;
        for (std::size_t i = 0; i < kg.entity_count; ++i) {
            std::set<NeighborTuple> expected;
            for (const auto& t : kg.triples) {
                if (t.head == i) expected.insert({t.relation, t.tail});
                if (t.tail == i) expected.insert({t.relation, t.head});
            }
            const auto seg = idx.segment(i);
            const std::vector<NeighborTuple> got(seg.begin(), seg.end());
            EXPECT_EQ(got, std::vector<NeighborTuple>(expected.begin(), expected.end()));
            EXPECT_TRUE(std::is_sorted(got.begin(), got.end()));
            EXPECT_EQ(std::count(got.begin(), got.end(), NeighborTuple{self, i}), 1);
            for (const auto& [k, j] : got)
                if (k != self) {
                    const auto other = idx.segment(j);
                    EXPECT_NE(std::find(other.begin(), other.end(), NeighborTuple{k, i}), other.end());
                }
            total += got.size();
        }
        EXPECT_EQ(total, idx.tuples.size());
        EXPECT_EQ(build_neighbor_index(kg), idx);
    }
}

TEST(NeighborIndex, TupleCountFormulaWithoutSymmetricDuplicates) {
    // No reversed pairs, no self-loops: 2|T| + |E| tuples.
    const auto kg = augment_self_relations(make_kg(4, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}}));
    EXPECT_EQ(build_neighbor_index(kg).tuples.size(), 2u * 3u + 4u);
}

TEST(KnowledgeGraph, ValidateCatchesBadIndices) {
    EXPECT_THROW(make_kg(2, 1, {{0, 0, 2}}).validate(), DataError);
    EXPECT_THROW(make_kg(2, 1, {{0, 1, 1}}).validate(), DataError);
    EXPECT_THROW(make_kg(2, 1, {{0, 0, 1}, {0, 0, 1}}).validate(), DataError);
}
