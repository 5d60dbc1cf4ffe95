#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multiea/errors.hpp"

namespace multiea {

/// Dense row-major matrix of doubles. Vectors are 1 x n.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != rows * cols) throw NumericError("tensor value count does not match shape");
    }

    static Tensor vector(std::vector<double> v) {
        const auto n = v.size();
        return Tensor(1, n, std::move(v));
    }

    std::size_t size() const noexcept { return values.size(); }
    bool same_shape(const Tensor& o) const noexcept { return rows == o.rows && cols == o.cols; }

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Offsets delimiting variable-length segments over a flat axis.
struct SegmentSpec {
    std::vector<std::size_t> offsets{0};

    std::size_t count() const noexcept { return offsets.size() - 1; }
    std::size_t begin(std::size_t s) const { return offsets[s]; }
    std::size_t end(std::size_t s) const { return offsets[s + 1]; }

    void validate(std::size_t flat_length, bool require_non_empty = true) const {
        if (offsets.empty() || offsets.front() != 0) throw NumericError("segment offsets must start at 0");
        if (offsets.back() != flat_length) throw NumericError("segment offsets must end at the flat length");
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
            if (offsets[s + 1] < offsets[s]) throw NumericError("segment offsets must be non-decreasing");
            if (require_non_empty && offsets[s + 1] == offsets[s])
                throw NumericError("segment " + std::to_string(s) + " is empty");
        }
    }
};

inline constexpr double kNormEpsilon = 1e-12;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

inline Tensor elu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.values) v = elu(v);
    return out;
}

/// Max-shifted softmax within each segment.
inline std::vector<double> segment_softmax(std::span<const double> logits, const SegmentSpec& segments) {
    segments.validate(logits.size());
    std::vector<double> out(logits.size());
    for (std::size_t s = 0; s < segments.count(); ++s) {
        const auto b = segments.begin(s);
        const auto e = segments.end(s);
        double mx = logits[b];
        for (auto t = b + 1; t < e; ++t) mx = std::max(mx, logits[t]);
        double sum = 0.0;
        for (auto t = b; t < e; ++t) {
            out[t] = std::exp(logits[t] - mx);
            sum += out[t];
        }
        for (auto t = b; t < e; ++t) out[t] /= sum;
    }
    return out;
}

inline std::vector<double> l2_normalize(std::span<const double> v, std::size_t index_for_error = 0) {
    const double n = norm2(v);
    if (!(n > kNormEpsilon))
        throw NumericError("cannot normalize near-zero vector at index " + std::to_string(index_for_error));
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x /= n;
    return out;
}

/// Normalizes every row; reports the first offending row on failure.
inline Tensor normalize_rows(const Tensor& x) {
    Tensor out = x;
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto row = out.row(r);
        const double n = norm2(row);
        if (!(n > kNormEpsilon)) throw NumericError("cannot normalize near-zero vector at index " + std::to_string(r));
        for (auto& v : row) v /= n;
    }
    return out;
}

inline double euclidean_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw NumericError("euclidean_distance: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Gradient of ||u - v|| with respect to u (the gradient for v is its negation).
/// Zero at u == v.
inline std::vector<double> euclidean_distance_gradient(std::span<const double> u, std::span<const double> v) {
    const double d = euclidean_distance(u, v);
    std::vector<double> g(u.size(), 0.0);
    if (d == 0.0) return g;
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = (u[i] - v[i]) / d;
    return g;
}

struct ValueAndGradient {
    double value = 0.0;
    std::vector<double> gradient;
};

/// Compares an analytic gradient against central differences on the given
/// coordinates (all coordinates when `coordinates` is empty). Returns the max
/// relative error |a - n| / max(1e-8, |a| + |n|).
inline double finite_difference_check(const std::function<ValueAndGradient(std::span<const double>)>& fn,
                                      std::vector<double> point, double epsilon,
                                      std::span<const std::size_t> coordinates = {}) {
    const auto analytic = fn(point).gradient;
    if (analytic.size() != point.size()) throw NumericError("gradient length does not match point");
    std::vector<std::size_t> all;
    if (coordinates.empty()) {
        all.resize(point.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        coordinates = all;
    }
    double worst = 0.0;
    for (auto c : coordinates) {
        const double saved = point[c];
        point[c] = saved + epsilon;
        const double plus = fn(point).value;
        point[c] = saved - epsilon;
        const double minus = fn(point).value;
        point[c] = saved;
        const double numeric = (plus - minus) / (2.0 * epsilon);
        const double err = std::abs(analytic[c] - numeric) / std::max(1e-8, std::abs(analytic[c]) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward()
/// walks them in reverse, each node pushing its output gradient into its
/// inputs. The tape is rebuilt for every forward pass.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    Var leaf(Tensor value) { return push(std::move(value), nullptr); }

    Var record(Tensor value, Backward backward) { return push(std::move(value), std::move(backward)); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }

    /// Gradient buffer of a node; zero-filled if nothing has flowed into it.
    const Tensor& grad(Var v) {
        ensure_grad(v);
        return nodes_[v.id].grad;
    }

    Tensor& grad_mut(Var v) {
        ensure_grad(v);
        return nodes_[v.id].grad;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    void backward(Var output) {
        const auto& out = nodes_[output.id];
        if (out.value.size() != 1) throw NumericError("backward() needs a scalar output");
        grad_mut(output).values[0] = 1.0;
        for (std::size_t i = output.id + 1; i-- > 0;) {
            auto& node = nodes_[i];
            if (!node.backward || !node.has_grad) continue;
            // The callback may touch other nodes' grads; keep a stable copy of ours.
            const Tensor g = node.grad;
            node.backward(*this, g);
        }
    }

    // ---- standard primitives ------------------------------------------------

    Var add(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (!av.same_shape(bv)) throw NumericError("add: shape mismatch");
        Tensor out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += bv.values[i];
        return record(std::move(out), [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, g);
            t.accumulate(b, g);
        });
    }

    Var scale(Var a, double s) {
        Tensor out = value(a);
        for (auto& v : out.values) v *= s;
        return record(std::move(out), [a, s](Tape& t, const Tensor& g) {
            auto& ga = t.grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += s * g.values[i];
        });
    }

    /// (n x k) * (k x m)
    Var matmul(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (av.cols != bv.rows) throw NumericError("matmul: inner dimension mismatch");
        Tensor out(av.rows, bv.cols);
        for (std::size_t i = 0; i < av.rows; ++i)
            for (std::size_t k = 0; k < av.cols; ++k) {
                const double x = av(i, k);
                for (std::size_t j = 0; j < bv.cols; ++j) out(i, j) += x * bv(k, j);
            }
        return record(std::move(out), [a, b](Tape& t, const Tensor& g) {
            const Tensor av = t.value(a);
            const Tensor bv = t.value(b);
            auto& ga = t.grad_mut(a);
            auto& gb = t.grad_mut(b);
            for (std::size_t i = 0; i < av.rows; ++i)
                for (std::size_t k = 0; k < av.cols; ++k)
                    for (std::size_t j = 0; j < bv.cols; ++j) {
                        ga(i, k) += g(i, j) * bv(k, j);
                        gb(k, j) += av(i, k) * g(i, j);
                    }
        });
    }

    /// Full inner product of two same-shape tensors -> 1 x 1.
    Var dot(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (!av.same_shape(bv)) throw NumericError("dot: shape mismatch");
        const double s = multiea::dot(av.values, bv.values);
        return record(Tensor(1, 1, s), [a, b](Tape& t, const Tensor& g) {
            const double s = g.values[0];
            const Tensor av = t.value(a);
            const Tensor bv = t.value(b);
            auto& ga = t.grad_mut(a);
            auto& gb = t.grad_mut(b);
            for (std::size_t i = 0; i < av.size(); ++i) {
                ga.values[i] += s * bv.values[i];
                gb.values[i] += s * av.values[i];
            }
        });
    }

    Var sum(Var a) {
        double s = 0.0;
        for (double v : value(a).values) s += v;
        return record(Tensor(1, 1, s), [a](Tape& t, const Tensor& g) {
            auto& ga = t.grad_mut(a);
            for (auto& v : ga.values) v += g.values[0];
        });
    }

    Var elu(Var a) {
        Tensor out = multiea::elu(value(a));
        return record(std::move(out), [a](Tape& t, const Tensor& g) {
            const auto& x = t.value(a).values;
            auto& ga = t.grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += g.values[i] * elu_derivative(x[i]);
        });
    }

    /// Row-wise L2 normalization with the projection Jacobian (I - u u^T) / ||v||.
    Var normalize_rows(Var a) {
        const auto& x = value(a);
        Tensor out = multiea::normalize_rows(x);
        std::vector<double> norms(x.rows);
        for (std::size_t r = 0; r < x.rows; ++r) norms[r] = norm2(x.row(r));
        return record(std::move(out), [a, norms = std::move(norms), self = Var{nodes_.size()}](Tape& t,
                                                                                             const Tensor& g) {
            const auto& u = t.value(self);
            auto& ga = t.grad_mut(a);
            for (std::size_t r = 0; r < u.rows; ++r) {
                const auto ur = u.row(r);
                const auto gr = g.row(r);
                const double proj = multiea::dot(ur, gr);
                auto out = ga.row(r);
                for (std::size_t c = 0; c < u.cols; ++c) out[c] += (gr[c] - ur[c] * proj) / norms[r];
            }
        });
    }

    /// Flat segment softmax over a 1 x n (or n x 1) tensor.
    Var segment_softmax(Var a, const SegmentSpec& segments) {
        Tensor out = value(a);
        out.values = multiea::segment_softmax(value(a).values, segments);
        return record(std::move(out), [a, &segments, self = Var{nodes_.size()}](Tape& t, const Tensor& g) {
            const auto& y = t.value(self).values;
            auto& ga = t.grad_mut(a);
            for (std::size_t s = 0; s < segments.count(); ++s) {
                double inner = 0.0;
                for (auto i = segments.begin(s); i < segments.end(s); ++i) inner += y[i] * g.values[i];
                for (auto i = segments.begin(s); i < segments.end(s); ++i)
                    ga.values[i] += y[i] * (g.values[i] - inner);
            }
        });
    }

    /// Row gather: out[t] = x[index[t]].
    Var gather_rows(Var a, std::vector<std::size_t> index) {
        const auto& x = value(a);
        Tensor out(index.size(), x.cols);
        for (std::size_t t = 0; t < index.size(); ++t) {
            if (index[t] >= x.rows) throw NumericError("gather_rows: index out of range");
            std::copy(x.row(index[t]).begin(), x.row(index[t]).end(), out.row(t).begin());
        }
        return record(std::move(out), [a, index = std::move(index)](Tape& t, const Tensor& g) {
            auto& ga = t.grad_mut(a);
            for (std::size_t i = 0; i < index.size(); ++i) {
                auto dst = ga.row(index[i]);
                const auto src = g.row(i);
                for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
            }
        });
    }

    /// out[s] = sum over t in segment s of weights[t] * rows[t].
    Var segment_weighted_sum(Var weights, Var rows, const SegmentSpec& segments) {
        const auto& w = value(weights).values;
        const auto& x = value(rows);
        segments.validate(x.rows, false);
        if (w.size() != x.rows) throw NumericError("segment_weighted_sum: weight count mismatch");
        Tensor out(segments.count(), x.cols);
        for (std::size_t s = 0; s < segments.count(); ++s) {
            auto dst = out.row(s);
            for (auto t = segments.begin(s); t < segments.end(s); ++t) {
                const auto src = x.row(t);
                for (std::size_t c = 0; c < x.cols; ++c) dst[c] += w[t] * src[c];
            }
        }
        return record(std::move(out), [weights, rows, &segments](Tape& t, const Tensor& g) {
            const auto& w = t.value(weights).values;
            const auto& x = t.value(rows);
            auto& gw = t.grad_mut(weights);
            auto& gx = t.grad_mut(rows);
            for (std::size_t s = 0; s < segments.count(); ++s) {
                const auto gs = g.row(s);
                for (auto i = segments.begin(s); i < segments.end(s); ++i) {
                    gw.values[i] += multiea::dot(gs, x.row(i));
                    auto dst = gx.row(i);
                    for (std::size_t c = 0; c < x.cols; ++c) dst[c] += w[i] * gs[c];
                }
            }
        });
    }

    void accumulate(Var target, const Tensor& g) {
        auto& dst = grad_mut(target);
        if (!dst.same_shape(g)) throw NumericError("gradient shape mismatch");
        for (std::size_t i = 0; i < g.size(); ++i) dst.values[i] += g.values[i];
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        bool has_grad = false;
    };

    Var push(Tensor value, Backward backward) {
        nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward), false});
        return Var{nodes_.size() - 1};
    }

    void ensure_grad(Var v) {
        auto& node = nodes_[v.id];
        if (!node.has_grad) {
            node.grad = Tensor(node.value.rows, node.value.cols, 0.0);
            node.has_grad = true;
        }
    }

    std::vector<Node> nodes_;
};

} // namespace multiea
