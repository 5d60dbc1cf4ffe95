#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "multiea/dataset.hpp"
#include "multiea/encoder.hpp"
#include "multiea/errors.hpp"
#include "multiea/inference.hpp"
#include "multiea/kg.hpp"

namespace multiea {

namespace fs = std::filesystem;

inline std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

// ---- id maps ----------------------------------------------------------------

/// `index<TAB>original_id` rows; indices must be 0..n-1 in order.
inline IdMap read_id_map(std::istream& in, const std::string& what) {
    IdMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::strip_cr(line);
        if (view.empty()) continue;
        const auto fields = detail::split_tabs(view);
        if (fields.size() != 2)
            throw DataError(what + " line " + std::to_string(line_no) + ": expected index<TAB>original_id");
        if (fields[0] != std::to_string(map.size()))
            throw DataError(what + " line " + std::to_string(line_no) + ": indices must be dense and ordered");
        if (map.find(fields[1])) throw DataError(what + " line " + std::to_string(line_no) + ": duplicate id");
        map.intern(fields[1]);
    }
    return map;
}

inline void write_id_map(std::ostream& out, const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) out << i << '\t' << names[i] << '\n';
}

namespace detail {
inline std::vector<std::string> names_or_indices(const std::vector<std::string>& names, std::size_t count) {
    if (names.size() == count) return names;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(std::to_string(i));
    return out;
}
} // namespace detail

/// Un-augmented triples with original ids.
inline void write_triples(std::ostream& out, const KnowledgeGraph& kg) {
    const auto ents = detail::names_or_indices(kg.entity_names, kg.entity_count);
    const auto rels = detail::names_or_indices(kg.relation_names, kg.relation_count);
    for (const auto& t : kg.triples) {
        if (kg.self_relation_id && t.relation == *kg.self_relation_id) continue;
        out << ents[t.head] << '\t' << rels[t.relation] << '\t' << ents[t.tail] << '\n';
    }
}

// ---- labels -------------------------------------------------------------------

/// M tab-separated original entity ids per line.
inline void write_labels(std::ostream& out, const std::vector<AlignmentLabel>& labels,
                         const std::vector<KnowledgeGraph>& kgs) {
    std::vector<std::vector<std::string>> names;
    for (const auto& kg : kgs) names.push_back(detail::names_or_indices(kg.entity_names, kg.entity_count));
    for (const auto& label : labels) {
        for (std::size_t m = 0; m < label.size(); ++m) out << (m ? "\t" : "") << names[m][label[m]];
        out << '\n';
    }
}

inline std::vector<AlignmentLabel> read_labels(std::istream& in, const std::vector<IdMap>& entity_maps,
                                               const std::string& what) {
    std::vector<AlignmentLabel> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::strip_cr(line);
        if (view.empty()) continue;
        const auto fields = detail::split_tabs(view);
        if (fields.size() != entity_maps.size())
            throw DataError(what + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(entity_maps.size()) + " fields");
        AlignmentLabel label;
        for (std::size_t m = 0; m < fields.size(); ++m) {
            auto idx = entity_maps[m].find(fields[m]);
            if (!idx)
                throw DataError(what + " line " + std::to_string(line_no) + ": unknown entity '" +
                                std::string(fields[m]) + "' for KG " + std::to_string(m));
            label.push_back(*idx);
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

/// `pivot_entity<TAB>other_entity` rows resolved through the two KGs' id maps.
/// Rows naming entities absent from either KG are skipped and counted.
inline PairTable read_pair_table(std::istream& in, const IdMap& pivot, const IdMap& other, std::size_t* skipped = nullptr,
                                 const std::string& what = "pair file") {
    PairTable table;
    std::string line;
    std::size_t line_no = 0;
    std::size_t missing = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::strip_cr(line);
        if (view.empty()) continue;
        const auto fields = detail::split_tabs(view);
        if (fields.size() != 2)
            throw DataError(what + " line " + std::to_string(line_no) + ": expected pivot<TAB>other");
        auto a = pivot.find(fields[0]);
        auto b = other.find(fields[1]);
        if (!a || !b) {
            ++missing;
            continue;
        }
        table.emplace_back(*a, *b);
    }
    if (skipped) *skipped = missing;
    return table;
}

// ---- dataset directories --------------------------------------------------------
//
// <dir>/kgs.tsv                   index<TAB>name
// <dir>/<name>/triples.tsv        head<TAB>relation<TAB>tail (original ids)
// <dir>/<name>/ent_ids.tsv        index<TAB>original_id
// <dir>/<name>/rel_ids.tsv        index<TAB>original_id
// <dir>/train_labels.tsv, test_labels.tsv   M original ids per line

inline void save_dataset(const fs::path& dir, const MultiKgDataset& ds) {
    fs::create_directories(dir);
    {
        auto out = open_output(dir / "kgs.tsv");
        for (std::size_t m = 0; m < ds.kgs.size(); ++m) out << m << '\t' << ds.names.at(m) << '\n';
    }
    for (std::size_t m = 0; m < ds.kgs.size(); ++m) {
        const auto& kg = ds.kgs[m];
        const auto sub = dir / ds.names[m];
        auto triples = open_output(sub / "triples.tsv");
        write_triples(triples, kg);
        auto ents = open_output(sub / "ent_ids.tsv");
        write_id_map(ents, detail::names_or_indices(kg.entity_names, kg.entity_count));
        auto rels = open_output(sub / "rel_ids.tsv");
        std::vector<std::string> rel_names = detail::names_or_indices(kg.relation_names, kg.relation_count);
        if (kg.self_relation_id) rel_names.pop_back();
        write_id_map(rels, rel_names);
    }
    auto train = open_output(dir / "train_labels.tsv");
    write_labels(train, ds.train_labels, ds.kgs);
    auto test = open_output(dir / "test_labels.tsv");
    write_labels(test, ds.test_labels, ds.kgs);
}

inline MultiKgDataset load_dataset(const fs::path& dir) {
    MultiKgDataset ds;
    {
        auto in = open_input(dir / "kgs.tsv");
        auto map = read_id_map(in, (dir / "kgs.tsv").string());
        ds.names = map.names();
    }
    std::vector<IdMap> entity_maps;
    for (const auto& name : ds.names) {
        const auto sub = dir / name;
        auto ent_in = open_input(sub / "ent_ids.tsv");
        auto ents = read_id_map(ent_in, (sub / "ent_ids.tsv").string());
        auto rel_in = open_input(sub / "rel_ids.tsv");
        auto rels = read_id_map(rel_in, (sub / "rel_ids.tsv").string());
        auto triples = open_input(sub / "triples.tsv");
        try {
            ds.kgs.push_back(load_kg(triples, ents, rels, /*frozen=*/true));
        } catch (const DataError& e) {
            throw DataError((sub / "triples.tsv").string() + ": " + e.what());
        }
        entity_maps.push_back(std::move(ents));
    }
    auto train = open_input(dir / "train_labels.tsv");
    ds.train_labels = read_labels(train, entity_maps, (dir / "train_labels.tsv").string());
    auto test = open_input(dir / "test_labels.tsv");
    ds.test_labels = read_labels(test, entity_maps, (dir / "test_labels.tsv").string());
    ds.validate();
    return ds;
}

/// Table-1 style statistics: KG, |E|, |R|, |T|, |S| (counts before augmentation).
inline void write_stats(std::ostream& out, const MultiKgDataset& ds) {
    const auto labels = ds.train_labels.size() + ds.test_labels.size();
    out << "KG\tentities\trelations\ttriples\tlabels\n";
    for (std::size_t m = 0; m < ds.kgs.size(); ++m) {
        const auto& kg = ds.kgs[m];
        out << ds.names[m] << '\t' << kg.entity_count << '\t' << kg.original_relation_count() << '\t'
            << kg.original_triple_count() << '\t' << labels << '\n';
    }
}

// ---- checkpoints ----------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'M', 'U', 'L', 'T', 'I', 'E', 'A', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace detail {
template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated checkpoint");
    return v;
}
inline void put_tensor(std::ostream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}
inline Tensor get_tensor(std::istream& in, std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint");
    return t;
}
} // namespace detail

/// Binary layout: magic, version, dim, layer_count, M, per-KG (entities,
/// relations), then entity tables, relation tables, a_h, a_r, a_t as raw
/// little-endian doubles.
inline void save_checkpoint(std::ostream& out, const ModelParams& p) {
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint64_t>(out, p.dim);
    detail::put<std::uint64_t>(out, p.layer_count);
    detail::put<std::uint64_t>(out, p.kg_count());
    for (std::size_t m = 0; m < p.kg_count(); ++m) {
        detail::put<std::uint64_t>(out, p.entity[m].rows);
        detail::put<std::uint64_t>(out, p.relation[m].rows);
    }
    for (const auto* t : p.tensors()) detail::put_tensor(out, *t);
    if (!out) throw DataError("failed writing checkpoint");
}

inline ModelParams load_checkpoint(std::istream& in) {
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw DataError("not a checkpoint file");
    const auto version = detail::get<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    ModelParams p;
    p.dim = detail::get<std::uint64_t>(in);
    p.layer_count = detail::get<std::uint64_t>(in);
    const auto m = detail::get<std::uint64_t>(in);
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    for (std::uint64_t i = 0; i < m; ++i) {
        const auto e = detail::get<std::uint64_t>(in);
        const auto r = detail::get<std::uint64_t>(in);
        shapes.emplace_back(e, r);
    }
    for (const auto& s : shapes) p.entity.push_back(detail::get_tensor(in, s.first, p.dim));
    for (const auto& s : shapes) p.relation.push_back(detail::get_tensor(in, s.second, p.dim));
    p.attention.head = detail::get_tensor(in, 1, p.dim);
    p.attention.relation = detail::get_tensor(in, 1, p.dim);
    p.attention.tail = detail::get_tensor(in, 1, p.dim);
    return p;
}

inline void save_checkpoint(const fs::path& path, const ModelParams& p) {
    auto out = open_output(path);
    save_checkpoint(out, p);
}

inline ModelParams load_checkpoint(const fs::path& path) {
    auto in = open_input(path);
    return load_checkpoint(in);
}

/// Checkpoint tables must match the augmented KGs of the dataset.
inline void check_compatible(const ModelParams& p, const MultiKgDataset& ds) {
    if (p.kg_count() != ds.kgs.size())
        throw DataError("checkpoint has " + std::to_string(p.kg_count()) + " KGs, dataset has " +
                        std::to_string(ds.kgs.size()));
    for (std::size_t m = 0; m < ds.kgs.size(); ++m) {
        const auto& kg = ds.kgs[m];
        const auto relations = kg.augmented() ? kg.relation_count : kg.relation_count + 1;
        if (p.entity[m].rows != kg.entity_count || p.relation[m].rows != relations)
            throw DataError("checkpoint shape does not match KG " + std::to_string(m) + " (" + ds.names[m] + ")");
    }
}

// ---- embeddings ------------------------------------------------------------------

/// `entity_id<TAB>v1<TAB>...<TAB>vd`, 6 decimal places.
inline void write_embeddings(std::ostream& out, const Tensor& table, const std::vector<std::string>& names) {
    const auto ids = detail::names_or_indices(names, table.rows);
    out << std::fixed << std::setprecision(6);
    for (std::size_t r = 0; r < table.rows; ++r) {
        out << ids[r];
        for (double v : table.row(r)) out << '\t' << v;
        out << '\n';
    }
}

struct EmbeddingFile {
    std::vector<std::string> ids;
    Tensor table;
};

inline EmbeddingFile read_embeddings(std::istream& in) {
    EmbeddingFile f;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::strip_cr(line);
        if (view.empty()) continue;
        const auto fields = detail::split_tabs(view);
        if (fields.size() < 2) throw DataError("embedding line " + std::to_string(line_no) + ": no values");
        if (f.table.cols == 0) f.table.cols = fields.size() - 1;
        if (fields.size() - 1 != f.table.cols)
            throw DataError("embedding line " + std::to_string(line_no) + ": inconsistent dimension");
        f.ids.emplace_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) f.table.values.push_back(std::stod(std::string(fields[c])));
        ++f.table.rows;
    }
    return f;
}

// ---- similarity dumps --------------------------------------------------------------

/// `row_entity<TAB>col_entity<TAB>value` for the top `top` columns of every row.
inline void write_similarity_top(std::ostream& out, const SimilarityMatrix& s, const std::vector<std::string>& row_names,
                                 const std::vector<std::string>& col_names, std::size_t top = 100) {
    const auto k = std::min(top, s.cols.size());
    if (k == 0) return;
    std::vector<std::size_t> col_pos(s.cols.empty() ? 0 : *std::max_element(s.cols.begin(), s.cols.end()) + 1);
    for (std::size_t c = 0; c < s.cols.size(); ++c) col_pos[s.cols[c]] = c;
    out << std::setprecision(6) << std::fixed;
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
        for (auto entity : rank_candidates(s, r, k)) {
            out << (s.rows[r] < row_names.size() ? row_names[s.rows[r]] : std::to_string(s.rows[r])) << '\t'
                << (entity < col_names.size() ? col_names[entity] : std::to_string(entity)) << '\t'
                << s.values(r, col_pos[entity]) << '\n';
        }
    }
}

} // namespace multiea
