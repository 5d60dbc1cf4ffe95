#pragma once

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "multiea/dataset.hpp"
#include "multiea/encoder.hpp"
#include "multiea/errors.hpp"
#include "multiea/inference.hpp"

namespace multiea {

struct PairHits {
    double left = 0.0;
    double right = 0.0;
    double hits = 0.0;
};

namespace detail {
inline std::unordered_map<std::size_t, std::size_t> positions(const std::vector<std::size_t>& ids) {
    std::unordered_map<std::size_t, std::size_t> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
    return out;
}

inline std::size_t position_of(const std::unordered_map<std::size_t, std::size_t>& map, std::size_t id,
                               const char* what) {
    auto it = map.find(id);
    if (it == map.end())
        throw DataError(std::string("label entity ") + std::to_string(id) + " missing from " + what +
                        " candidate pool");
    return it->second;
}
} // namespace detail

/// Pair-wise Hits@K. `pairs` are (left entity, right entity); l_Hits ranks the
/// right counterpart within each left row, r_Hits the reverse.
inline PairHits hits_at_k(const SimilarityMatrix& s_lr, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                          std::size_t k) {
    if (k == 0) throw ConfigError("K must be positive");
    if (k > s_lr.cols.size() || k > s_lr.rows.size()) throw ConfigError("K exceeds the candidate pool");
    if (pairs.empty()) throw DataError("hits_at_k needs at least one label");
    const auto row_pos = detail::positions(s_lr.rows);
    const auto col_pos = detail::positions(s_lr.cols);
    std::size_t left = 0;
    std::size_t right = 0;
    for (const auto& [l, r] : pairs) {
        const auto rp = detail::position_of(row_pos, l, "left");
        const auto cp = detail::position_of(col_pos, r, "right");
        if (rank_in_row(s_lr, rp, cp) <= k) ++left;
        if (rank_in_column(s_lr, cp, rp) <= k) ++right;
    }
    PairHits out;
    const double n = static_cast<double>(pairs.size());
    out.left = static_cast<double>(left) / n;
    out.right = static_cast<double>(right) / n;
    out.hits = 0.5 * (out.left + out.right);
    return out;
}

struct MultiHits {
    std::vector<double> per_target; // m_Hits@K for each target KG
    double value = 0.0;             // mean over targets
};

/// M-Hits@K: a label counts for target KG m only when every one of its M-1
/// counterparts ranks within the top K of the row of its KG-m entity.
inline MultiHits m_hits_at_k(const DirectionalSimilarities& sims, const std::vector<AlignmentLabel>& labels,
                             std::size_t kg_count, std::size_t k) {
    if (kg_count <= 2) throw ConfigError("M-Hits@K is defined for more than two KGs; use hits_at_k");
    if (k == 0) throw ConfigError("K must be positive");
    if (labels.empty()) throw DataError("m_hits_at_k needs at least one label");

    struct Lookup {
        const SimilarityMatrix* s;
        std::unordered_map<std::size_t, std::size_t> rows, cols;
    };
    std::map<std::pair<std::size_t, std::size_t>, Lookup> lookups;
    for (std::size_t a = 0; a < kg_count; ++a)
        for (std::size_t b = 0; b < kg_count; ++b) {
            if (a == b) continue;
            auto it = sims.find({a, b});
            if (it == sims.end())
                throw DataError("missing similarity matrix for KG pair (" + std::to_string(a) + ", " +
                                std::to_string(b) + ")");
            if (k > it->second.cols.size()) throw ConfigError("K exceeds the candidate pool");
            lookups.emplace(std::pair{a, b},
                            Lookup{&it->second, detail::positions(it->second.rows), detail::positions(it->second.cols)});
        }

    MultiHits out;
    for (std::size_t m = 0; m < kg_count; ++m) {
        std::size_t count = 0;
        for (const auto& label : labels) {
            if (label.size() != kg_count) throw DataError("label arity does not match KG count");
            bool all = true;
            for (std::size_t other = 0; other < kg_count && all; ++other) {
                if (other == m) continue;
                const auto& lk = lookups.at({m, other});
                const auto r = detail::position_of(lk.rows, label[m], "row");
                const auto c = detail::position_of(lk.cols, label[other], "column");
                all = rank_in_row(*lk.s, r, c) <= k;
            }
            if (all) ++count;
        }
        out.per_target.push_back(static_cast<double>(count) / static_cast<double>(labels.size()));
    }
    double sum = 0.0;
    for (double v : out.per_target) sum += v;
    out.value = sum / static_cast<double>(kg_count);
    return out;
}

/// Candidate pools from a label list: pool m lists label[m] in label order.
inline std::vector<std::vector<std::size_t>> label_pools(const std::vector<AlignmentLabel>& labels,
                                                         std::size_t kg_count) {
    std::vector<std::vector<std::size_t>> pools(kg_count);
    for (const auto& label : labels)
        for (std::size_t m = 0; m < kg_count; ++m) pools[m].push_back(label.at(m));
    return pools;
}

/// Candidate pools covering every entity of every KG.
inline std::vector<std::vector<std::size_t>> full_pools(const std::vector<std::size_t>& entity_counts) {
    std::vector<std::vector<std::size_t>> pools;
    for (auto n : entity_counts) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        pools.push_back(std::move(p));
    }
    return pools;
}

struct EvalReport {
    std::vector<std::size_t> ks;
    std::size_t label_count = 0;
    std::size_t kg_count = 0;
    bool enhanced = false;
    double first_order_weight = 1.0;
    std::vector<std::string> kg_names;
    std::map<std::size_t, MultiHits> m_hits;                                   // by K; only when M > 2
    std::map<std::pair<std::size_t, std::size_t>, std::map<std::size_t, PairHits>> pair_hits; // (a<b) -> K -> hits
    double seconds = 0.0;

    std::string kg_name(std::size_t m) const {
        return m < kg_names.size() && !kg_names[m].empty() ? kg_names[m] : "kg" + std::to_string(m);
    }

    /// `metric<TAB>K<TAB>value` rows.
    void write_tsv(std::ostream& out) const {
        out << "metric\tK\tvalue\n";
        auto emit = [&](const std::string& metric, std::size_t k, double v) {
            out << metric << '\t' << k << '\t' << std::fixed << std::setprecision(6) << v << '\n';
        };
        for (auto k : ks) {
            if (auto it = m_hits.find(k); it != m_hits.end()) {
                emit("M-Hits", k, it->second.value);
                for (std::size_t m = 0; m < it->second.per_target.size(); ++m)
                    emit("m_Hits[" + kg_name(m) + "]", k, it->second.per_target[m]);
            }
            for (const auto& [pair, by_k] : pair_hits) {
                const auto tag = kg_name(pair.first) + "-" + kg_name(pair.second);
                const auto& h = by_k.at(k);
                emit("Hits[" + tag + "]", k, h.hits);
                emit("l_Hits[" + tag + "]", k, h.left);
                emit("r_Hits[" + tag + "]", k, h.right);
            }
        }
    }

    void write_summary(std::ostream& out) const {
        out << "evaluation: " << label_count << " labels, " << kg_count << " KGs, inference enhancement "
            << (enhanced ? "on (first-order weight " + format(first_order_weight) + ")" : std::string("off"))
            << ", " << format(seconds) << " s\n";
        for (auto k : ks) {
            out << "  K=" << k << ':';
            if (auto it = m_hits.find(k); it != m_hits.end()) out << "  M-Hits=" << percent(it->second.value);
            for (const auto& [pair, by_k] : pair_hits)
                out << "  Hits[" << kg_name(pair.first) << '-' << kg_name(pair.second)
                    << "]=" << percent(by_k.at(k).hits);
            out << '\n';
        }
    }

private:
    static std::string format(double v) {
        std::ostringstream os;
        os << std::setprecision(4) << v;
        return os.str();
    }
    static std::string percent(double v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(2) << 100.0 * v << '%';
        return os.str();
    }
};

struct EvalOptions {
    std::vector<std::size_t> ks{1, 10, 20};
    bool enhance = true;
    double first_order_weight = 0.2;
    std::vector<double> weights; // explicit (first, path...) weights; overrides first_order_weight
    bool full_pool = false;
};

/// Builds the similarity matrices once and scores every requested K.
inline EvalReport evaluate(const EncodedEmbeddings& encoded, const std::vector<AlignmentLabel>& labels,
                           const EvalOptions& options, std::vector<std::string> kg_names = {},
                           DirectionalSimilarities* used = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    const auto m = encoded.tables.size();
    std::vector<std::size_t> counts;
    for (const auto& t : encoded.tables) counts.push_back(t.rows);
    const auto pools = options.full_pool ? full_pools(counts) : label_pools(labels, m);
    auto sims = first_order_similarities(encoded.tables, pools);
    if (options.enhance && m > 2) {
        const auto weights = options.weights.empty() ? EnhancementWeights::split(options.first_order_weight, m - 2)
                                                     : EnhancementWeights{options.weights};
        sims = enhanced_similarities(sims, m, weights);
    }

    EvalReport report;
    report.ks = options.ks;
    std::sort(report.ks.begin(), report.ks.end());
    report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());
    report.label_count = labels.size();
    report.kg_count = m;
    report.enhanced = options.enhance && m > 2;
    report.first_order_weight =
        !report.enhanced ? 1.0 : (options.weights.empty() ? options.first_order_weight : options.weights.front());
    report.kg_names = std::move(kg_names);
    for (auto k : report.ks) {
        if (m > 2) report.m_hits.emplace(k, m_hits_at_k(sims, labels, m, k));
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b) {
                std::vector<std::pair<std::size_t, std::size_t>> pairs;
                for (const auto& l : labels) pairs.emplace_back(l[a], l[b]);
                report.pair_hits[{a, b}][k] = hits_at_k(sims.at({a, b}), pairs, k);
            }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (used) *used = std::move(sims);
    return report;
}

} // namespace multiea
