#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "multiea/diffmath.hpp"
#include "multiea/errors.hpp"
#include "multiea/parallel.hpp"

namespace multiea {

/// Similarities between candidate entities of two KGs. rows/cols hold the
/// entity indices that each matrix row/column stands for.
struct SimilarityMatrix {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> cols;
    Tensor values;

    double operator()(std::size_t r, std::size_t c) const { return values(r, c); }

    SimilarityMatrix transposed() const {
        SimilarityMatrix t;
        t.rows = cols;
        t.cols = rows;
        t.values = Tensor(values.cols, values.rows);
        for (std::size_t r = 0; r < values.rows; ++r)
            for (std::size_t c = 0; c < values.cols; ++c) t.values(c, r) = values(r, c);
        return t;
    }
};

inline constexpr double kEmbeddingUnitTolerance = 1e-6;

/// S[i, j] = 1 - ||h_i - h_j|| / 2 over the declared candidate sets.
inline SimilarityMatrix similarity_matrix(const Tensor& left, const Tensor& right, std::vector<std::size_t> left_rows,
                                          std::vector<std::size_t> right_cols) {
    if (left.cols != right.cols) throw NumericError("similarity_matrix: embedding dimensions differ");
    auto check_unit = [](const Tensor& table, const std::vector<std::size_t>& ids, const char* side) {
        for (auto id : ids) {
            if (id >= table.rows)
                throw NumericError(std::string("similarity_matrix: ") + side + " candidate " + std::to_string(id) +
                                   " out of range");
            if (std::abs(norm2(table.row(id)) - 1.0) > kEmbeddingUnitTolerance)
                throw NumericError(std::string("similarity_matrix: ") + side + " row " + std::to_string(id) +
                                   " is not unit norm");
        }
    };
    check_unit(left, left_rows, "left");
    check_unit(right, right_cols, "right");

    SimilarityMatrix s;
    s.values = Tensor(left_rows.size(), right_cols.size());
    parallel_for(0, left_rows.size(), [&](std::size_t r) {
        const auto a = left.row(left_rows[r]);
        for (std::size_t c = 0; c < right_cols.size(); ++c)
            s.values(r, c) = 1.0 - euclidean_distance(a, right.row(right_cols[c])) / 2.0;
    });
    s.rows = std::move(left_rows);
    s.cols = std::move(right_cols);
    return s;
}

inline SimilarityMatrix multiply(const SimilarityMatrix& a, const SimilarityMatrix& b) {
    if (a.cols != b.rows) throw NumericError("multiply: inner candidate sets differ");
    SimilarityMatrix out;
    out.rows = a.rows;
    out.cols = b.cols;
    out.values = Tensor(a.rows.size(), b.cols.size());
    const auto inner = a.cols.size();
    parallel_for(0, a.rows.size(), [&](std::size_t r) {
        auto dst = out.values.row(r);
        for (std::size_t k = 0; k < inner; ++k) {
            const double x = a.values(r, k);
            const auto src = b.values.row(k);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += x * src[c];
        }
    });
    return out;
}

/// Weights of the first-order term followed by one weight per composition path.
struct EnhancementWeights {
    std::vector<double> gamma;

    void validate() const {
        if (gamma.empty()) throw ConfigError("enhancement weights must not be empty");
        double sum = 0.0;
        for (double g : gamma) {
            if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("enhancement weights must lie in [0, 1]");
            sum += g;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("enhancement weights must sum to 1");
    }

    /// first-order weight `first`, remainder split evenly across `paths` terms.
    /// With no paths the first-order term carries all weight.
    static EnhancementWeights split(double first, std::size_t paths) {
        if (!(first >= 0.0 && first <= 1.0)) throw ConfigError("first-order weight must lie in [0, 1]");
        EnhancementWeights w;
        if (paths == 0) {
            w.gamma = {1.0};
            return w;
        }
        w.gamma.push_back(first);
        for (std::size_t p = 0; p < paths; ++p) w.gamma.push_back((1.0 - first) / static_cast<double>(paths));
        return w;
    }
};

using CompositionPath = std::pair<const SimilarityMatrix*, const SimilarityMatrix*>;

/// gamma_1 * S + sum over paths t of gamma_{t+1} * (S_a S_b). Values may leave
/// [0, 1]; only the ranking they induce matters.
inline SimilarityMatrix enhance(const SimilarityMatrix& target, const std::vector<CompositionPath>& paths,
                                const EnhancementWeights& weights) {
    weights.validate();
    if (weights.gamma.size() != paths.size() + 1)
        throw ConfigError("expected " + std::to_string(paths.size() + 1) + " enhancement weights, got " +
                          std::to_string(weights.gamma.size()));
    SimilarityMatrix out = target;
    for (auto& v : out.values.values) v *= weights.gamma[0];
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& [sa, sb] = paths[p];
        if (sa->cols != sb->rows || sa->rows != target.rows || sb->cols != target.cols)
            throw NumericError("enhance: dimension mismatch on composition path " + std::to_string(p));
        const auto product = multiply(*sa, *sb);
        const double g = weights.gamma[p + 1];
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values.values[i] += g * product.values.values[i];
    }
    return out;
}

/// Position of column `col` in row `row` under (value desc, entity index asc); 1-based.
inline std::size_t rank_in_row(const SimilarityMatrix& s, std::size_t row, std::size_t col) {
    const auto values = s.values.row(row);
    const double v = values[col];
    const auto entity = s.cols[col];
    std::size_t rank = 1;
    for (std::size_t c = 0; c < values.size(); ++c)
        if (values[c] > v || (values[c] == v && s.cols[c] < entity)) ++rank;
    return rank;
}

/// Position of row `row` within column `col` under the same ordering.
inline std::size_t rank_in_column(const SimilarityMatrix& s, std::size_t col, std::size_t row) {
    const double v = s.values(row, col);
    const auto entity = s.rows[row];
    std::size_t rank = 1;
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
        const double x = s.values(r, col);
        if (x > v || (x == v && s.rows[r] < entity)) ++rank;
    }
    return rank;
}

/// Top-K column entities of a row, similarity descending, ties by ascending entity index.
inline std::vector<std::size_t> rank_candidates(const SimilarityMatrix& s, std::size_t row, std::size_t k) {
    if (k == 0) throw ConfigError("rank_candidates: K must be positive");
    if (k > s.cols.size()) throw ConfigError("rank_candidates: K exceeds the candidate pool");
    if (row >= s.rows.size()) throw NumericError("rank_candidates: row out of range");
    std::vector<std::size_t> order(s.cols.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto values = s.values.row(row);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (values[a] != values[b]) return values[a] > values[b];
                          return s.cols[a] < s.cols[b];
                      });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(s.cols[order[i]]);
    return out;
}

/// Every ordered KG pair (m1, m2), m1 != m2.
using DirectionalSimilarities = std::map<std::pair<std::size_t, std::size_t>, SimilarityMatrix>;

/// First-order matrices for all ordered pairs over per-KG candidate pools.
inline DirectionalSimilarities first_order_similarities(const std::vector<Tensor>& tables,
                                                        const std::vector<std::vector<std::size_t>>& pools) {
    if (tables.size() != pools.size()) throw NumericError("first_order_similarities: pool count mismatch");
    DirectionalSimilarities out;
    for (std::size_t a = 0; a < tables.size(); ++a)
        for (std::size_t b = a + 1; b < tables.size(); ++b) {
            auto s = similarity_matrix(tables[a], tables[b], pools[a], pools[b]);
            out.emplace(std::pair{b, a}, s.transposed());
            out.emplace(std::pair{a, b}, std::move(s));
        }
    return out;
}

/// Two-order enhancement of every pair. Paths for pair (a, b) go through every
/// other KG in ascending order; `weights` lists the first-order weight followed
/// by one weight per path.
inline DirectionalSimilarities enhanced_similarities(const DirectionalSimilarities& first, std::size_t kg_count,
                                                     const EnhancementWeights& weights) {
    DirectionalSimilarities out;
    for (std::size_t a = 0; a < kg_count; ++a)
        for (std::size_t b = a + 1; b < kg_count; ++b) {
            std::vector<CompositionPath> paths;
            for (std::size_t mid = 0; mid < kg_count; ++mid) {
                if (mid == a || mid == b) continue;
                paths.emplace_back(&first.at({a, mid}), &first.at({mid, b}));
            }
            auto s = enhance(first.at({a, b}), paths, weights);
            out.emplace(std::pair{b, a}, s.transposed());
            out.emplace(std::pair{a, b}, std::move(s));
        }
    return out;
}

inline DirectionalSimilarities enhanced_similarities(const DirectionalSimilarities& first, std::size_t kg_count,
                                                     double first_order_weight) {
    return enhanced_similarities(first, kg_count,
                                 EnhancementWeights::split(first_order_weight, kg_count >= 2 ? kg_count - 2 : 0));
}

} // namespace multiea
