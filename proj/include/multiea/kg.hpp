#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "multiea/errors.hpp"

namespace multiea {

struct Triple {
    std::size_t head = 0;
    std::size_t relation = 0;
    std::size_t tail = 0;

    friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
    std::size_t operator()(const Triple& t) const noexcept {
        std::size_t h = t.head;
        h = h * 1000003u ^ t.relation;
        h = h * 1000003u ^ t.tail;
        return h;
    }
};

/// Bidirectional map between original string ids and dense indices,
/// assigned in first-appearance order.
class IdMap {
public:
    std::size_t intern(std::string_view id) {
        auto it = index_.find(std::string(id));
        if (it != index_.end()) return it->second;
        const std::size_t next = names_.size();
        names_.emplace_back(id);
        index_.emplace(names_.back(), next);
        return next;
    }

    std::optional<std::size_t> find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// One candidate KG: dense entity/relation index spaces plus a deduplicated triple set.
struct KnowledgeGraph {
    std::size_t entity_count = 0;
    std::size_t relation_count = 0;
    std::vector<Triple> triples;
    std::optional<std::size_t> self_relation_id;
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;

    bool augmented() const noexcept { return self_relation_id.has_value(); }

    /// Triple count excluding the self-loops added by augmentation.
    std::size_t original_triple_count() const noexcept {
        return augmented() ? triples.size() - entity_count : triples.size();
    }

    /// Relation count excluding the virtual self-relation.
    std::size_t original_relation_count() const noexcept {
        return augmented() ? relation_count - 1 : relation_count;
    }

    const std::string& entity_name(std::size_t i) const {
        static const std::string empty;
        return i < entity_names.size() ? entity_names[i] : empty;
    }

    void validate() const {
        std::unordered_set<Triple, TripleHash> seen;
        seen.reserve(triples.size());
        for (const auto& t : triples) {
            if (t.head >= entity_count || t.tail >= entity_count)
                throw DataError("triple references entity outside [0, " + std::to_string(entity_count) + ")");
            if (t.relation >= relation_count)
                throw DataError("triple references relation outside [0, " + std::to_string(relation_count) + ")");
            if (!seen.insert(t).second) throw DataError("duplicate triple in knowledge graph");
        }
        if (self_relation_id && *self_relation_id + 1 != relation_count)
            throw DataError("self relation must be the last relation index");
    }
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

} // namespace detail

/// Parses `head<TAB>relation<TAB>tail` lines. Ids are opaque strings mapped
/// densely in first-appearance order through the given maps, which may be
/// pre-seeded (e.g. from `ent_ids.tsv`) and may be frozen so that unknown ids
/// are rejected.
inline KnowledgeGraph load_kg(std::istream& in, IdMap& entities, IdMap& relations, bool frozen = false) {
    KnowledgeGraph kg;
    std::unordered_set<Triple, TripleHash> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::strip_cr(line);
        if (view.empty()) continue;
        const auto fields = detail::split_tabs(view);
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
            throw DataError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        auto resolve = [&](IdMap& map, std::string_view id, const char* what) {
            if (!frozen) return map.intern(id);
            auto found = map.find(id);
            if (!found)
                throw DataError("line " + std::to_string(line_no) + ": unknown " + what + " id '" +
                                std::string(id) + "'");
            return *found;
        };
        Triple t;
        t.head = resolve(entities, fields[0], "entity");
        t.relation = resolve(relations, fields[1], "relation");
        t.tail = resolve(entities, fields[2], "entity");
        if (seen.insert(t).second) kg.triples.push_back(t);
    }
    kg.entity_count = entities.size();
    kg.relation_count = relations.size();
    kg.entity_names = entities.names();
    kg.relation_names = relations.names();
    return kg;
}

inline KnowledgeGraph load_kg(std::istream& in) {
    IdMap entities;
    IdMap relations;
    return load_kg(in, entities, relations);
}

inline KnowledgeGraph load_kg_from_string(const std::string& text) {
    std::istringstream in(text);
    return load_kg(in);
}

/// Adds the virtual self-relation (as the last relation index) and one
/// self-loop triple per entity.
inline KnowledgeGraph augment_self_relations(KnowledgeGraph kg) {
    if (kg.augmented()) throw DataError("knowledge graph is already augmented");
    const std::size_t self_id = kg.relation_count;
    kg.relation_count += 1;
    kg.self_relation_id = self_id;
    if (!kg.relation_names.empty()) kg.relation_names.emplace_back("<self>");
    kg.triples.reserve(kg.triples.size() + kg.entity_count);
    for (std::size_t i = 0; i < kg.entity_count; ++i) kg.triples.push_back({i, self_id, i});
    return kg;
}

struct NeighborTuple {
    std::size_t relation = 0;
    std::size_t entity = 0;

    friend auto operator<=>(const NeighborTuple&, const NeighborTuple&) = default;
};

/// CSR layout of the bi-directed neighbor sets: segment i holds every
/// (relation, entity) reachable from i by one triple in either direction,
/// sorted by (relation, entity) and deduplicated.
struct NeighborIndex {
    std::vector<std::size_t> offsets{0};
    std::vector<NeighborTuple> tuples;

    std::size_t entity_count() const noexcept { return offsets.size() - 1; }

    std::span<const NeighborTuple> segment(std::size_t i) const {
        return std::span<const NeighborTuple>(tuples).subspan(offsets[i], offsets[i + 1] - offsets[i]);
    }

    friend bool operator==(const NeighborIndex&, const NeighborIndex&) = default;
};

inline NeighborIndex build_neighbor_index(const KnowledgeGraph& kg) {
    if (!kg.augmented()) throw DataError("neighbor index requires an augmented knowledge graph");
    std::vector<std::size_t> counts(kg.entity_count, 0);
    for (const auto& t : kg.triples) {
        ++counts[t.head];
        ++counts[t.tail];
    }
    std::vector<std::size_t> start(kg.entity_count + 1, 0);
    for (std::size_t i = 0; i < kg.entity_count; ++i) start[i + 1] = start[i] + counts[i];
    std::vector<NeighborTuple> raw(start.back());
    std::vector<std::size_t> cursor(start.begin(), start.end() - 1);
    for (const auto& t : kg.triples) {
        raw[cursor[t.head]++] = {t.relation, t.tail};
        raw[cursor[t.tail]++] = {t.relation, t.head};
    }

    NeighborIndex index;
    index.offsets.reserve(kg.entity_count + 1);
    index.tuples.reserve(raw.size());
    for (std::size_t i = 0; i < kg.entity_count; ++i) {
        auto first = raw.begin() + static_cast<std::ptrdiff_t>(start[i]);
        auto last = raw.begin() + static_cast<std::ptrdiff_t>(start[i + 1]);
        std::sort(first, last);
        last = std::unique(first, last);
        index.tuples.insert(index.tuples.end(), first, last);
        index.offsets.push_back(index.tuples.size());
    }
    return index;
}

} // namespace multiea
