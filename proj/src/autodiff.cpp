#include "atxf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atxf/kernels.hpp"

namespace atxf::ad {

// ---- Tape ------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    if (!value.all_finite()) throw NumericError("non-finite value in constant " + to_string(value.shape()));
    nodes_.push_back(Node{"constant", std::move(value), {}, {}, false});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Tensor<T> value) {
    if (!value.all_finite()) throw NumericError("non-finite value in parameter " + to_string(value.shape()));
    nodes_.push_back(Node{"parameter", std::move(value), {}, {}, true});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
    if (!value.all_finite())
        throw NumericError(std::string("non-finite output from ") + op + " " + to_string(value.shape()));
    bool needs = false;
    for (auto id : inputs) needs = needs || nodes_[id].requires_grad;
    if (!needs) backward = nullptr;
    nodes_.push_back(Node{op, std::move(value), std::move(inputs), std::move(backward), needs});
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
    if (grads_[id].size() == 0) grads_[id] = Tensor<T>(nodes_[id].value.shape());
    return grads_[id];
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (loss.tape() != this) throw ContractError("loss variable belongs to a different tape");
    const auto& lv = nodes_[loss.id()].value;
    if (lv.size() != 1) throw ContractError("backward requires a scalar loss, got shape " + to_string(lv.shape()));
    grads_.assign(nodes_.size(), Tensor<T>());
    backward_visits_ = 0;
    grads_[loss.id()] = Tensor<T>(lv.shape(), T(1));
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        auto& node = nodes_[id];
        if (!node.backward || grads_[id].size() == 0) continue;
        node.backward(*this, id);
        ++backward_visits_;
    }
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
    if (has_grad(v.id())) return grads_[v.id()];
    return Tensor<T>(nodes_[v.id()].value.shape());
}

// ---- helpers -----------------------------------------------------------------

namespace {

template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
    if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
    return *a.tape();
}

// For every flat index of `out`, the flat index into a tensor of shape `src`
// that broadcasts to it. Empty when src == out (identity mapping).
std::vector<std::size_t> broadcast_offsets(const Shape& src, const Shape& out) {
    if (src == out) return {};
    const std::size_t rank = out.size();
    Shape padded(rank, 1);
    std::copy(src.begin(), src.end(), padded.begin() + static_cast<std::ptrdiff_t>(rank - src.size()));
    const auto src_strides = strides_of(padded);
    std::vector<std::size_t> step(rank);
    for (std::size_t d = 0; d < rank; ++d) step[d] = padded[d] == 1 ? 0 : src_strides[d];

    const std::size_t total = numel(out);
    std::vector<std::size_t> offsets(total);
    std::vector<std::size_t> index(rank, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < total; ++i) {
        offsets[i] = off;
        for (std::size_t d = rank; d-- > 0;) {
            ++index[d];
            off += step[d];
            if (index[d] < out[d]) break;
            off -= step[d] * index[d];
            index[d] = 0;
        }
    }
    return offsets;
}

inline std::size_t map_index(const std::vector<std::size_t>& offsets, std::size_t i) {
    return offsets.empty() ? i : offsets[i];
}

template <typename T, typename F>
Tensor<T> broadcast_apply(const Tensor<T>& a, const Tensor<T>& b, const Shape& out_shape,
                          const std::vector<std::size_t>& oa, const std::vector<std::size_t>& ob, F f) {
    Tensor<T> out(out_shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[map_index(oa, i)], b[map_index(ob, i)]);
    return out;
}

}  // namespace

// ---- element-wise ------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    auto& tape = same_tape(a, b);
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    auto oa = broadcast_offsets(a.shape(), out_shape);
    auto ob = broadcast_offsets(b.shape(), out_shape);
    auto value = broadcast_apply(a.value(), b.value(), out_shape, oa, ob, [](T x, T y) { return x + y; });
    const auto ia = a.id(), ib = b.id();
    return tape.record("add", std::move(value), {ia, ib},
                       [ia, ib, oa = std::move(oa), ob = std::move(ob)](Tape<T>& t, std::size_t self) {
                           const auto& g = t.upstream(self);
                           if (t.requires_grad(ia)) {
                               auto& ga = t.grad_buffer(ia);
                               for (std::size_t i = 0; i < g.size(); ++i) ga[map_index(oa, i)] += g[i];
                           }
                           if (t.requires_grad(ib)) {
                               auto& gb = t.grad_buffer(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) gb[map_index(ob, i)] += g[i];
                           }
                       });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    auto& tape = same_tape(a, b);
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    auto oa = broadcast_offsets(a.shape(), out_shape);
    auto ob = broadcast_offsets(b.shape(), out_shape);
    auto value = broadcast_apply(a.value(), b.value(), out_shape, oa, ob, [](T x, T y) { return x - y; });
    const auto ia = a.id(), ib = b.id();
    return tape.record("sub", std::move(value), {ia, ib},
                       [ia, ib, oa = std::move(oa), ob = std::move(ob)](Tape<T>& t, std::size_t self) {
                           const auto& g = t.upstream(self);
                           if (t.requires_grad(ia)) {
                               auto& ga = t.grad_buffer(ia);
                               for (std::size_t i = 0; i < g.size(); ++i) ga[map_index(oa, i)] += g[i];
                           }
                           if (t.requires_grad(ib)) {
                               auto& gb = t.grad_buffer(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) gb[map_index(ob, i)] -= g[i];
                           }
                       });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    auto& tape = same_tape(a, b);
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    auto oa = broadcast_offsets(a.shape(), out_shape);
    auto ob = broadcast_offsets(b.shape(), out_shape);
    auto value = broadcast_apply(a.value(), b.value(), out_shape, oa, ob, [](T x, T y) { return x * y; });
    const auto ia = a.id(), ib = b.id();
    return tape.record("mul", std::move(value), {ia, ib},
                       [ia, ib, oa = std::move(oa), ob = std::move(ob)](Tape<T>& t, std::size_t self) {
                           const auto& g = t.upstream(self);
                           const auto& av = t.value(ia);
                           const auto& bv = t.value(ib);
                           if (t.requires_grad(ia)) {
                               auto& ga = t.grad_buffer(ia);
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   ga[map_index(oa, i)] += g[i] * bv[map_index(ob, i)];
                           }
                           if (t.requires_grad(ib)) {
                               auto& gb = t.grad_buffer(ib);
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   gb[map_index(ob, i)] += g[i] * av[map_index(oa, i)];
                           }
                       });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
    Tensor<T> value = a.value();
    for (auto& x : value.data()) x *= factor;
    const auto ia = a.id();
    return a.tape()->record("scale", std::move(value), {ia}, [ia, factor](Tape<T>& t, std::size_t self) {
        const auto& g = t.upstream(self);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
}

template <typename T>
Var<T> relu(Var<T> a) {
    Tensor<T> value = a.value();
    for (auto& x : value.data()) x = x > T(0) ? x : T(0);
    const auto ia = a.id();
    return a.tape()->record("relu", std::move(value), {ia}, [ia](Tape<T>& t, std::size_t self) {
        const auto& g = t.upstream(self);
        const auto& x = t.value(ia);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > T(0)) ga[i] += g[i];
    });
}

// ---- matmul --------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    auto& tape = same_tape(a, b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2])
        throw DimensionError("matmul shape mismatch " + to_string(sa) + " x " + to_string(sb));
    const std::size_t m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
    const Shape batch_a(sa.begin(), sa.end() - 2);
    const Shape batch_b(sb.begin(), sb.end() - 2);
    Shape batch;
    try {
        batch = broadcast_shapes(batch_a, batch_b);
    } catch (const DimensionError&) {
        throw DimensionError("matmul batch mismatch " + to_string(sa) + " x " + to_string(sb));
    }
    const auto& kt = kernels::active<T>();
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> out(out_shape);

    const auto ia = a.id(), ib = b.id();
    if (batch_b.empty()) {
        // Shared right operand: one gemm over all rows of a.
        const std::size_t rows = numel(batch_a) * m;
        kt.gemm_nn(rows, n, k, a.value().data().data(), b.value().data().data(), out.data().data());
        return tape.record("matmul", std::move(out), {ia, ib}, [ia, ib, rows, n, k](Tape<T>& t, std::size_t self) {
            const auto& kt = kernels::active<T>();
            const T* g = t.upstream(self).data().data();
            if (t.requires_grad(ia))
                kt.gemm_nt(rows, k, n, g, t.value(ib).data().data(), t.grad_buffer(ia).data().data());
            if (t.requires_grad(ib))
                kt.gemm_tn(k, n, rows, t.value(ia).data().data(), g, t.grad_buffer(ib).data().data());
        });
    }

    const std::size_t nb = numel(batch);
    auto oa = broadcast_offsets(batch_a, batch);
    auto ob = broadcast_offsets(batch_b, batch);
    const T* av = a.value().data().data();
    const T* bv = b.value().data().data();
    for (std::size_t i = 0; i < nb; ++i)
        kt.gemm_nn(m, n, k, av + map_index(oa, i) * m * k, bv + map_index(ob, i) * k * n, out.data().data() + i * m * n);
    return tape.record("matmul", std::move(out), {ia, ib},
                       [ia, ib, m, n, k, nb, oa = std::move(oa), ob = std::move(ob)](Tape<T>& t, std::size_t self) {
                           const auto& kt = kernels::active<T>();
                           const T* g = t.upstream(self).data().data();
                           const T* av = t.value(ia).data().data();
                           const T* bv = t.value(ib).data().data();
                           if (t.requires_grad(ia)) {
                               T* ga = t.grad_buffer(ia).data().data();
                               for (std::size_t i = 0; i < nb; ++i)
                                   kt.gemm_nt(m, k, n, g + i * m * n, bv + map_index(ob, i) * k * n,
                                              ga + map_index(oa, i) * m * k);
                           }
                           if (t.requires_grad(ib)) {
                               T* gb = t.grad_buffer(ib).data().data();
                               for (std::size_t i = 0; i < nb; ++i)
                                   kt.gemm_tn(k, n, m, av + map_index(oa, i) * m * k, g + i * m * n,
                                              gb + map_index(ob, i) * k * n);
                           }
                       });
}

// ---- softmax -------------------------------------------------------------------

template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis) {
    const Shape& s = a.shape();
    if (axis >= s.size()) throw DimensionError("softmax axis " + std::to_string(axis) + " for shape " + to_string(s));
    const auto& x = a.value();
    if (!x.all_finite()) throw NumericError("softmax input contains NaN or Inf");
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t len = s[axis];

    Tensor<T> y(s);
    if (inner == 1) {
        kernels::active<T>().softmax_rows(outer, len, x.data().data(), y.data().data());
    } else {
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T peak = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < len; ++j) peak = std::max(peak, x[base + j * inner]);
                T total = 0;
                for (std::size_t j = 0; j < len; ++j) {
                    y[base + j * inner] = std::exp(x[base + j * inner] - peak);
                    total += y[base + j * inner];
                }
                const T inv = T(1) / total;
                for (std::size_t j = 0; j < len; ++j) y[base + j * inner] *= inv;
            }
    }
    const auto ia = a.id();
    return a.tape()->record("softmax", std::move(y), {ia},
                            [ia, outer, inner, len](Tape<T>& t, std::size_t self) {
                                const auto& g = t.upstream(self);
                                const auto& y = t.value(self);
                                auto& ga = t.grad_buffer(ia);
                                for (std::size_t o = 0; o < outer; ++o)
                                    for (std::size_t in = 0; in < inner; ++in) {
                                        const std::size_t base = o * len * inner + in;
                                        T dot = 0;
                                        for (std::size_t j = 0; j < len; ++j)
                                            dot += g[base + j * inner] * y[base + j * inner];
                                        for (std::size_t j = 0; j < len; ++j) {
                                            const std::size_t idx = base + j * inner;
                                            ga[idx] += y[idx] * (g[idx] - dot);
                                        }
                                    }
                            });
}

// ---- layer norm -----------------------------------------------------------------

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T epsilon) {
    auto& tape = same_tape(x, gamma);
    same_tape(x, beta);
    const Shape& s = x.shape();
    const std::size_t width = s.back();
    if (gamma.shape() != Shape{width} || beta.shape() != Shape{width})
        throw DimensionError("layer_norm scale/shift " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                             " for input " + to_string(s));
    const std::size_t rows = x.value().size() / width;
    const auto& xv = x.value();
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    Tensor<T> out(s);
    Tensor<T> normed(s);
    std::vector<T> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data().data() + r * width;
        T mu = 0;
        for (std::size_t j = 0; j < width; ++j) mu += row[j];
        mu /= T(width);
        T var = 0;
        for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= T(width);
        rstd[r] = T(1) / std::sqrt(var + epsilon);
        for (std::size_t j = 0; j < width; ++j) {
            const T h = (row[j] - mu) * rstd[r];
            normed[r * width + j] = h;
            out[r * width + j] = gv[j] * h + bv[j];
        }
    }
    const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
    return tape.record("layer_norm", std::move(out), {ix, ig, ib},
                       [ix, ig, ib, rows, width, normed = std::move(normed), rstd = std::move(rstd)](
                           Tape<T>& t, std::size_t self) {
                           const auto& g = t.upstream(self);
                           const auto& gv = t.value(ig);
                           if (t.requires_grad(ig)) {
                               auto& gg = t.grad_buffer(ig);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < width; ++j)
                                       gg[j] += g[r * width + j] * normed[r * width + j];
                           }
                           if (t.requires_grad(ib)) {
                               auto& gb = t.grad_buffer(ib);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < width; ++j) gb[j] += g[r * width + j];
                           }
                           if (t.requires_grad(ix)) {
                               auto& gx = t.grad_buffer(ix);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   T sum_d = 0, sum_dh = 0;
                                   for (std::size_t j = 0; j < width; ++j) {
                                       const T d = g[r * width + j] * gv[j];
                                       sum_d += d;
                                       sum_dh += d * normed[r * width + j];
                                   }
                                   const T inv_w = T(1) / T(width);
                                   for (std::size_t j = 0; j < width; ++j) {
                                       const T d = g[r * width + j] * gv[j];
                                       gx[r * width + j] +=
                                           rstd[r] * (d - inv_w * sum_d - normed[r * width + j] * inv_w * sum_dh);
                                   }
                               }
                           }
                       });
}

// ---- embedding ---------------------------------------------------------------------

template <typename T>
Var<T> embedding(Var<T> table, const std::vector<std::int32_t>& ids, const Shape& ids_shape) {
    const Shape& ts = table.shape();
    if (ts.size() != 2) throw DimensionError("embedding table must be rank 2, got " + to_string(ts));
    if (numel(ids_shape) != ids.size())
        throw DimensionError("embedding ids length " + std::to_string(ids.size()) + " vs shape " + to_string(ids_shape));
    const std::size_t vocab = ts[0], width = ts[1];
    for (auto id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw EncodingError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(vocab));
    Shape out_shape = ids_shape;
    out_shape.push_back(width);
    Tensor<T> out(out_shape);
    const auto& tv = table.value();
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(tv.data().data() + static_cast<std::size_t>(ids[i]) * width, width,
                    out.data().data() + i * width);
    const auto it = table.id();
    return table.tape()->record("embedding", std::move(out), {it}, [it, ids, width](Tape<T>& t, std::size_t self) {
        const auto& g = t.upstream(self);
        auto& gt = t.grad_buffer(it);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            T* row = gt.data().data() + static_cast<std::size_t>(ids[i]) * width;
            const T* src = g.data().data() + i * width;
            for (std::size_t j = 0; j < width; ++j) row[j] += src[j];
        }
    });
}

// ---- masking / shape ------------------------------------------------------------------

template <typename T>
Var<T> masked_fill(Var<T> a, const Mask& mask, T fill) {
    if (numel(mask.shape) != mask.blocked.size())
        throw DimensionError("mask data does not match its shape " + to_string(mask.shape));
    const Shape out_shape = broadcast_shapes(a.shape(), mask.shape);
    if (out_shape != a.shape())
        throw DimensionError("mask " + to_string(mask.shape) + " does not broadcast to " + to_string(a.shape()));
    const auto om = broadcast_offsets(mask.shape, out_shape);
    Tensor<T> out = a.value();
    std::vector<std::uint8_t> blocked(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        blocked[i] = mask.blocked[map_index(om, i)];
        if (blocked[i]) out[i] = fill;
    }
    const auto ia = a.id();
    return a.tape()->record("masked_fill", std::move(out), {ia},
                            [ia, blocked = std::move(blocked)](Tape<T>& t, std::size_t self) {
                                const auto& g = t.upstream(self);
                                auto& ga = t.grad_buffer(ia);
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    if (!blocked[i]) ga[i] += g[i];
                            });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    auto value = a.value().reshaped(std::move(shape));
    const auto ia = a.id();
    return a.tape()->record("reshape", std::move(value), {ia}, [ia](Tape<T>& t, std::size_t self) {
        const auto& g = t.upstream(self);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

namespace {

// Flat source index for each flat output index of permute(src, axes).
std::vector<std::size_t> permutation_map(const Shape& src, const std::vector<std::size_t>& axes) {
    const std::size_t rank = src.size();
    const auto src_strides = strides_of(src);
    Shape out(rank);
    std::vector<std::size_t> step(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        out[d] = src[axes[d]];
        step[d] = src_strides[axes[d]];
    }
    const std::size_t total = numel(src);
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> index(rank, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < total; ++i) {
        map[i] = off;
        for (std::size_t d = rank; d-- > 0;) {
            ++index[d];
            off += step[d];
            if (index[d] < out[d]) break;
            off -= step[d] * index[d];
            index[d] = 0;
        }
    }
    return map;
}

}  // namespace

template <typename T>
Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes) {
    const Shape& s = a.shape();
    if (axes.size() != s.size()) throw DimensionError("permute axes rank mismatch for " + to_string(s));
    std::vector<bool> seen(s.size(), false);
    for (auto ax : axes) {
        if (ax >= s.size() || seen[ax]) throw DimensionError("invalid permutation for " + to_string(s));
        seen[ax] = true;
    }
    Shape out_shape(s.size());
    for (std::size_t d = 0; d < s.size(); ++d) out_shape[d] = s[axes[d]];
    auto map = permutation_map(s, axes);
    Tensor<T> out(out_shape);
    const auto& src = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[map[i]];
    const auto ia = a.id();
    return a.tape()->record("permute", std::move(out), {ia}, [ia, map = std::move(map)](Tape<T>& t, std::size_t self) {
        const auto& g = t.upstream(self);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[map[i]] += g[i];
    });
}

template <typename T>
Var<T> transpose(Var<T> a) {
    const std::size_t rank = a.shape().size();
    if (rank < 2) throw DimensionError("transpose needs rank >= 2, got " + to_string(a.shape()));
    std::vector<std::size_t> axes(rank);
    for (std::size_t d = 0; d < rank; ++d) axes[d] = d;
    std::swap(axes[rank - 1], axes[rank - 2]);
    return permute(a, axes);
}

// ---- reductions / loss ------------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
    T total = 0;
    for (auto x : a.value().data()) total += x;
    const auto ia = a.id();
    return a.tape()->record("sum", Tensor<T>::scalar(total), {ia}, [ia](Tape<T>& t, std::size_t self) {
        const T g = t.upstream(self)[0];
        auto& ga = t.grad_buffer(ia);
        for (auto& x : ga.data()) x += g;
    });
}

template <typename T>
Var<T> mean(Var<T> a) {
    return scale(sum(a), T(1) / T(a.value().size()));
}

template <typename T>
Var<T> sparse_cross_entropy(Var<T> logits, const std::vector<std::int32_t>& targets, std::int32_t pad_id) {
    const Shape& s = logits.shape();
    const std::size_t classes = s.back();
    const std::size_t rows = logits.value().size() / classes;
    if (targets.size() != rows)
        throw DimensionError("cross entropy: " + std::to_string(targets.size()) + " targets for logits " + to_string(s));
    const auto& x = logits.value();
    Tensor<T> probs(Shape{rows, classes});
    std::size_t counted = 0;
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto tgt = targets[r];
        if (tgt < 0 || static_cast<std::size_t>(tgt) >= classes)
            throw EncodingError("target id " + std::to_string(tgt) + " outside " + std::to_string(classes) + " classes");
        if (tgt == pad_id) continue;
        const T* row = x.data().data() + r * classes;
        T* p = probs.data().data() + r * classes;
        const T peak = *std::max_element(row, row + classes);
        T z = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            p[c] = std::exp(row[c] - peak);
            z += p[c];
        }
        for (std::size_t c = 0; c < classes; ++c) p[c] /= z;
        total += peak + std::log(z) - row[tgt];
        ++counted;
    }
    const T loss = counted ? total / T(counted) : T(0);
    const auto il = logits.id();
    return logits.tape()->record(
        "sparse_cross_entropy", Tensor<T>::scalar(loss), {il},
        [il, targets, pad_id, rows, classes, counted, probs = std::move(probs)](Tape<T>& t, std::size_t self) {
            if (counted == 0) return;
            const T g = t.upstream(self)[0] / T(counted);
            auto& gl = t.grad_buffer(il);
            for (std::size_t r = 0; r < rows; ++r) {
                if (targets[r] == pad_id) continue;
                for (std::size_t c = 0; c < classes; ++c) gl[r * classes + c] += g * probs[r * classes + c];
                gl[r * classes + static_cast<std::size_t>(targets[r])] -= g;
            }
        });
}

template <typename T>
Var<T> dropout(Var<T> a, T rate, std::mt19937_64& rng) {
    if (rate < T(0) || rate >= T(1)) throw ConfigError("dropout rate must be in [0, 1)");
    if (rate == T(0)) return a;
    const T keep_scale = T(1) / (T(1) - rate);
    std::vector<T> factor(a.value().size());
    // 53-bit uniform draw; std::uniform_real_distribution is not portable.
    for (auto& f : factor) f = (static_cast<double>(rng() >> 11) * 0x1.0p-53) < rate ? T(0) : keep_scale;
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
    const auto ia = a.id();
    return a.tape()->record("dropout", std::move(out), {ia}, [ia, factor = std::move(factor)](Tape<T>& t, std::size_t self) {
        const auto& g = t.upstream(self);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor[i];
    });
}

// ---- instantiations -------------------------------------------------------------------

#define ATXF_INSTANTIATE(T)                                                                       \
    template class Tape<T>;                                                                        \
    template Var<T> matmul(Var<T>, Var<T>);                                                        \
    template Var<T> add(Var<T>, Var<T>);                                                           \
    template Var<T> sub(Var<T>, Var<T>);                                                           \
    template Var<T> mul(Var<T>, Var<T>);                                                           \
    template Var<T> scale(Var<T>, T);                                                              \
    template Var<T> relu(Var<T>);                                                                  \
    template Var<T> softmax(Var<T>, std::size_t);                                                  \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                         \
    template Var<T> embedding(Var<T>, const std::vector<std::int32_t>&, const Shape&);             \
    template Var<T> masked_fill(Var<T>, const Mask&, T);                                           \
    template Var<T> reshape(Var<T>, Shape);                                                        \
    template Var<T> permute(Var<T>, const std::vector<std::size_t>&);                              \
    template Var<T> transpose(Var<T>);                                                             \
    template Var<T> sum(Var<T>);                                                                   \
    template Var<T> mean(Var<T>);                                                                  \
    template Var<T> sparse_cross_entropy(Var<T>, const std::vector<std::int32_t>&, std::int32_t); \
    template Var<T> dropout(Var<T>, T, std::mt19937_64&);

ATXF_INSTANTIATE(float)
ATXF_INSTANTIATE(double)

#undef ATXF_INSTANTIATE

}  // namespace atxf::ad
