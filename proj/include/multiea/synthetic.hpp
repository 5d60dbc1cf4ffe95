#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "multiea/dataset.hpp"
#include "multiea/errors.hpp"
#include "multiea/kg.hpp"

namespace multiea {

struct PlantedSpec {
    std::size_t kg_count = 3;
    std::size_t entity_count = 500;
    std::size_t relation_count = 10;
    std::size_t triple_count = 3000;
    double train_ratio = 0.3;
    std::uint64_t seed = 7;
};

/// Uniform random KG without self-loops or duplicate triples.
inline KnowledgeGraph random_kg(std::size_t entities, std::size_t relations, std::size_t triples, std::mt19937_64& rng) {
    if (entities < 2 || relations < 1) throw ConfigError("random_kg needs >= 2 entities and >= 1 relation");
    const double capacity = static_cast<double>(entities) * static_cast<double>(entities - 1) * static_cast<double>(relations);
    if (static_cast<double>(triples) > 0.5 * capacity) throw ConfigError("random_kg: too many triples for the entity set");
    std::uniform_int_distribution<std::size_t> ent(0, entities - 1);
    std::uniform_int_distribution<std::size_t> rel(0, relations - 1);
    std::set<Triple> seen;
    KnowledgeGraph kg;
    kg.entity_count = entities;
    kg.relation_count = relations;
    while (kg.triples.size() < triples) {
        Triple t{ent(rng), rel(rng), ent(rng)};
        if (t.head == t.tail || !seen.insert(t).second) continue;
        kg.triples.push_back(t);
    }
    for (std::size_t i = 0; i < entities; ++i) kg.entity_names.push_back("e" + std::to_string(i));
    for (std::size_t k = 0; k < relations; ++k) kg.relation_names.push_back("r" + std::to_string(k));
    return kg;
}

/// Copy of `base` with entities and relations relabelled by random permutations
/// and triples shuffled. Returns the entity permutation (base index -> copy index).
inline KnowledgeGraph permuted_copy(const KnowledgeGraph& base, std::mt19937_64& rng, const std::string& prefix,
                                    std::vector<std::size_t>& entity_perm) {
    entity_perm.resize(base.entity_count);
    std::iota(entity_perm.begin(), entity_perm.end(), std::size_t{0});
    std::shuffle(entity_perm.begin(), entity_perm.end(), rng);
    std::vector<std::size_t> rel_perm(base.relation_count);
    std::iota(rel_perm.begin(), rel_perm.end(), std::size_t{0});
    std::shuffle(rel_perm.begin(), rel_perm.end(), rng);

    KnowledgeGraph kg;
    kg.entity_count = base.entity_count;
    kg.relation_count = base.relation_count;
    for (const auto& t : base.triples) kg.triples.push_back({entity_perm[t.head], rel_perm[t.relation], entity_perm[t.tail]});
    std::shuffle(kg.triples.begin(), kg.triples.end(), rng);
    for (std::size_t i = 0; i < kg.entity_count; ++i) kg.entity_names.push_back(prefix + ":e" + std::to_string(i));
    for (std::size_t k = 0; k < kg.relation_count; ++k) kg.relation_names.push_back(prefix + ":r" + std::to_string(k));
    return kg;
}

/// M isomorphic copies of one random KG; every base entity yields a label.
inline MultiKgDataset planted_alignment(const PlantedSpec& spec) {
    if (spec.kg_count < 2) throw ConfigError("planted alignment needs at least two KGs");
    std::mt19937_64 rng(spec.seed);
    const auto base = random_kg(spec.entity_count, spec.relation_count, spec.triple_count, rng);
    MultiKgDataset ds;
    std::vector<std::vector<std::size_t>> perms(spec.kg_count);
    for (std::size_t m = 0; m < spec.kg_count; ++m) {
        ds.names.push_back("kg" + std::to_string(m));
        ds.kgs.push_back(permuted_copy(base, rng, ds.names.back(), perms[m]));
    }
    std::vector<AlignmentLabel> labels;
    for (std::size_t e = 0; e < spec.entity_count; ++e) {
        AlignmentLabel l;
        for (std::size_t m = 0; m < spec.kg_count; ++m) l.push_back(perms[m][e]);
        labels.push_back(std::move(l));
    }
    auto [train, test] = split_labels(std::move(labels), spec.train_ratio, spec.seed + 1);
    ds.train_labels = std::move(train);
    ds.test_labels = std::move(test);
    return ds;
}

} // namespace multiea
