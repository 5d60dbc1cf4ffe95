#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "multiea/errors.hpp"
#include "multiea/kg.hpp"

namespace multiea {

/// One M-way alignment tuple; position m holds an entity index of KG m.
using AlignmentLabel = std::vector<std::size_t>;

/// Pair-wise label table: (pivot entity, other entity) index pairs.
using PairTable = std::vector<std::pair<std::size_t, std::size_t>>;

struct MultiKgDataset {
    std::vector<std::string> names;
    std::vector<KnowledgeGraph> kgs;
    std::vector<AlignmentLabel> train_labels;
    std::vector<AlignmentLabel> test_labels;
    std::optional<std::size_t> anchor_index;

    std::size_t arity() const noexcept { return kgs.size(); }

    std::vector<std::size_t> entity_counts() const {
        std::vector<std::size_t> out;
        for (const auto& kg : kgs) out.push_back(kg.entity_count);
        return out;
    }

    void validate() const {
        if (kgs.size() < 2) throw DataError("a dataset needs at least two knowledge graphs");
        if (anchor_index && *anchor_index >= kgs.size()) throw DataError("anchor index out of range");
        std::vector<std::set<std::size_t>> used(kgs.size());
        auto check = [&](const std::vector<AlignmentLabel>& labels, const char* which) {
            for (const auto& label : labels) {
                if (label.size() != kgs.size())
                    throw DataError(std::string(which) + " label has arity " + std::to_string(label.size()) +
                                    ", expected " + std::to_string(kgs.size()));
                for (std::size_t m = 0; m < label.size(); ++m) {
                    if (label[m] >= kgs[m].entity_count)
                        throw DataError(std::string(which) + " label entity out of range in KG " + std::to_string(m));
                    if (!used[m].insert(label[m]).second)
                        throw DataError("entity " + std::to_string(label[m]) + " of KG " + std::to_string(m) +
                                        " appears in more than one label");
                }
            }
        };
        check(train_labels, "train");
        check(test_labels, "test");
    }
};

/// Joins M-1 pivot-keyed pair tables into M-way labels. A pivot entity yields a
/// label only when every table maps it; output is sorted by pivot index.
inline std::vector<AlignmentLabel> join_pairwise_labels(const std::vector<PairTable>& pair_files, std::size_t arity) {
    if (arity < 2) throw ConfigError("join needs arity >= 2");
    if (pair_files.size() + 1 != arity)
        throw ConfigError("expected " + std::to_string(arity - 1) + " pair tables, got " +
                          std::to_string(pair_files.size()));

    std::vector<std::map<std::size_t, std::size_t>> partner(pair_files.size());
    for (std::size_t f = 0; f < pair_files.size(); ++f) {
        for (const auto& [pivot, other] : pair_files[f]) {
            auto [it, inserted] = partner[f].emplace(pivot, other);
            if (!inserted && it->second != other)
                throw DataError("pair table " + std::to_string(f) + ": pivot entity " + std::to_string(pivot) +
                                " mapped to two different partners");
        }
    }

    std::vector<AlignmentLabel> labels;
    if (partner.empty()) return labels;
    for (const auto& [pivot, first_partner] : partner.front()) {
        AlignmentLabel label{pivot, first_partner};
        bool complete = true;
        for (std::size_t f = 1; f < partner.size() && complete; ++f) {
            auto it = partner[f].find(pivot);
            if (it == partner[f].end())
                complete = false;
            else
                label.push_back(it->second);
        }
        if (complete) labels.push_back(std::move(label));
    }
    return labels;
}

struct InducedSubgraph {
    KnowledgeGraph kg;
    std::vector<std::size_t> entity_map;   // new index -> old index
    std::vector<std::size_t> relation_map; // new index -> old index
    std::unordered_map<std::size_t, std::size_t> entity_lookup; // old -> new
};

/// Undirected degree: number of incident triples, self-loops counted once.
inline std::vector<std::size_t> entity_degrees(const KnowledgeGraph& kg) {
    std::vector<std::size_t> degree(kg.entity_count, 0);
    for (const auto& t : kg.triples) {
        ++degree[t.head];
        if (t.tail != t.head) ++degree[t.tail];
    }
    return degree;
}

/// Keeps the seeds plus their one-hop neighbors whose degree is strictly above
/// the threshold, then all triples with both endpoints kept. Relations and
/// entities are re-indexed densely; kept entities retain their relative order.
inline InducedSubgraph induce_subgraph(const KnowledgeGraph& kg, const std::vector<std::size_t>& seeds,
                                       std::size_t degree_threshold) {
    if (kg.augmented()) throw DataError("induce_subgraph expects an un-augmented knowledge graph");
    std::vector<char> keep(kg.entity_count, 0);
    for (auto s : seeds) {
        if (s >= kg.entity_count) throw DataError("seed entity " + std::to_string(s) + " not in knowledge graph");
        keep[s] = 1;
    }
    const auto degree = entity_degrees(kg);
    std::vector<char> is_seed = keep;
    for (const auto& t : kg.triples) {
        if (is_seed[t.head] && degree[t.tail] > degree_threshold) keep[t.tail] = 1;
        if (is_seed[t.tail] && degree[t.head] > degree_threshold) keep[t.head] = 1;
    }

    InducedSubgraph out;
    for (std::size_t i = 0; i < kg.entity_count; ++i) {
        if (!keep[i]) continue;
        out.entity_lookup.emplace(i, out.entity_map.size());
        out.entity_map.push_back(i);
    }
    std::unordered_map<std::size_t, std::size_t> rel_lookup;
    for (const auto& t : kg.triples) {
        if (!keep[t.head] || !keep[t.tail]) continue;
        auto [it, inserted] = rel_lookup.emplace(t.relation, out.relation_map.size());
        if (inserted) out.relation_map.push_back(t.relation);
        out.kg.triples.push_back({out.entity_lookup.at(t.head), it->second, out.entity_lookup.at(t.tail)});
    }
    out.kg.entity_count = out.entity_map.size();
    out.kg.relation_count = out.relation_map.size();
    for (auto old : out.entity_map) out.kg.entity_names.push_back(kg.entity_name(old));
    for (auto old : out.relation_map)
        out.kg.relation_names.push_back(old < kg.relation_names.size() ? kg.relation_names[old] : std::to_string(old));
    return out;
}

/// Shuffles with the given seed and takes round-half-up(ratio * N) labels for training.
inline std::pair<std::vector<AlignmentLabel>, std::vector<AlignmentLabel>>
split_labels(std::vector<AlignmentLabel> labels, double train_ratio, std::uint64_t rng_seed) {
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train ratio must lie in (0, 1)");
    if (labels.empty()) throw DataError("cannot split an empty label set");
    const auto n = labels.size();
    const auto train_size = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(n) + 0.5));
    if (train_size >= n) throw ConfigError("train ratio leaves no test labels");
    if (train_size == 0) throw ConfigError("train ratio leaves no training labels");

    std::mt19937_64 rng(rng_seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(order[i], order[pick(rng)]);
    }
    std::pair<std::vector<AlignmentLabel>, std::vector<AlignmentLabel>> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = i < train_size ? out.first : out.second;
        dst.push_back(std::move(labels[order[i]]));
    }
    return out;
}

/// (N * M) / sum of entity counts, over all labels (train + test).
inline double label_ratio(const MultiKgDataset& dataset) {
    const auto n = dataset.train_labels.size() + dataset.test_labels.size();
    if (n == 0) return 0.0;
    std::size_t entities = 0;
    for (const auto& kg : dataset.kgs) entities += kg.entity_count;
    if (entities == 0) return 0.0;
    return static_cast<double>(n * dataset.kgs.size()) / static_cast<double>(entities);
}

/// Drops labels whose entities did not survive per-KG induction and remaps the rest.
inline std::pair<std::vector<AlignmentLabel>, std::size_t>
remap_labels(const std::vector<AlignmentLabel>& labels, const std::vector<InducedSubgraph>& subgraphs) {
    std::vector<AlignmentLabel> kept;
    std::size_t dropped = 0;
    for (const auto& label : labels) {
        AlignmentLabel mapped;
        bool ok = true;
        for (std::size_t m = 0; m < label.size() && ok; ++m) {
            auto it = subgraphs[m].entity_lookup.find(label[m]);
            if (it == subgraphs[m].entity_lookup.end())
                ok = false;
            else
                mapped.push_back(it->second);
        }
        if (ok)
            kept.push_back(std::move(mapped));
        else
            ++dropped;
    }
    return {std::move(kept), dropped};
}

} // namespace multiea
