#include "tnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tnn {

std::size_t Tape::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::out_of_range("tape: dangling node reference");
    return static_cast<std::size_t>(id);
}

NodeId Tape::push(const TapeNode& n, Jet2 value) {
    nodes_.push_back(n);
    vals_.push_back(value);
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(double c) {
    if (!std::isfinite(c)) throw std::invalid_argument("tape: non-finite constant");
    return push({.op = Op::Const, .c0 = c}, {c, 0.0, 0.0});
}

NodeId Tape::input(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("tape: non-finite input");
    return push({.op = Op::Input, .c0 = x}, {x, 1.0, 0.0});
}

NodeId Tape::input(double x, std::int32_t index) {
    if (!std::isfinite(x)) throw std::invalid_argument("tape: non-finite input");
    if (index < 0) throw std::invalid_argument("tape: negative input index");
    return push({.op = Op::Input, .param = index, .c0 = x}, {x, 1.0, 0.0});
}

NodeId Tape::param(std::int32_t slot) {
    if (slot < 0 || static_cast<std::size_t>(slot) >= params_.size())
        throw std::out_of_range("tape: parameter slot out of range");
    return push({.op = Op::Param, .param = slot}, {params_[slot], 0.0, 0.0});
}

NodeId Tape::add(NodeId a, NodeId b) {
    Jet2 r = vals_[check(a)] + vals_[check(b)];
    return push({.op = Op::Add, .a = a, .b = b}, r);
}

NodeId Tape::sub(NodeId a, NodeId b) {
    Jet2 r = vals_[check(a)] - vals_[check(b)];
    return push({.op = Op::Sub, .a = a, .b = b}, r);
}

NodeId Tape::mul(NodeId a, NodeId b) {
    Jet2 r = vals_[check(a)] * vals_[check(b)];
    return push({.op = Op::Mul, .a = a, .b = b}, r);
}

NodeId Tape::neg(NodeId a) { return push({.op = Op::Neg, .a = a}, -vals_[check(a)]); }

NodeId Tape::scale(NodeId a, double s) {
    return push({.op = Op::Scale, .a = a, .c0 = s}, s * vals_[check(a)]);
}

NodeId Tape::shift(NodeId a, double c) {
    Jet2 r = vals_[check(a)];
    r.v += c;
    return push({.op = Op::Shift, .a = a, .c0 = c}, r);
}

NodeId Tape::activate(Activation act, NodeId a) {
    const Jet2 x = vals_[check(a)];
    const ActDerivs d = activation_derivs(act, x.v);
    Jet2 r{d.g, d.g1 * x.d1, d.g2 * x.d1 * x.d1 + d.g1 * x.d2};
    // param remembers the activation kind so a replay can recompute the
    // derivative cache at other points.
    return push({.op = Op::Act,
                 .a = a,
                 .param = static_cast<std::int32_t>(act),
                 .c0 = d.g1,
                 .c1 = d.g2,
                 .c2 = d.g3},
                r);
}

NodeId Tape::slot_v(NodeId a) { return push({.op = Op::SlotV, .a = a}, {vals_[check(a)].v, 0, 0}); }
NodeId Tape::slot_d1(NodeId a) { return push({.op = Op::SlotD1, .a = a}, {vals_[check(a)].d1, 0, 0}); }
NodeId Tape::slot_d2(NodeId a) { return push({.op = Op::SlotD2, .a = a}, {vals_[check(a)].d2, 0, 0}); }

NodeId Tape::affine_range(NodeId first, std::int32_t count, std::int32_t param_base) {
    if (count <= 0) throw std::invalid_argument("affine_range: empty input range");
    check(first);
    check(first + count - 1);
    if (param_base < 0 || static_cast<std::size_t>(param_base) + count + 1 > params_.size())
        throw std::out_of_range("affine_range: weight block out of range");
    const double* w = params_.data() + param_base;
    const Jet2* in = vals_.data() + first;
    double av = 0.0, a1 = 0.0, a2 = 0.0;
    for (std::int32_t k = 0; k < count; ++k) {
        av += w[k] * in[k].v;
        a1 += w[k] * in[k].d1;
        a2 += w[k] * in[k].d2;
    }
    av += w[count];  // bias
    return push({.op = Op::AffineRange, .a = first, .b = count, .param = param_base}, {av, a1, a2});
}

NodeId Tape::sum_range(NodeId first, std::int32_t count) {
    if (count <= 0) throw std::invalid_argument("sum_range: empty input range");
    check(first);
    check(first + count - 1);
    const Jet2* in = vals_.data() + first;
    Jet2 r{0, 0, 0};
    for (std::int32_t k = 0; k < count; ++k) r = r + in[k];
    return push({.op = Op::SumRange, .a = first, .b = count}, r);
}

NodeId Tape::dot_pool(std::span<const NodeId> operands, std::int32_t param_base) {
    if (operands.empty()) throw std::invalid_argument("dot_pool: no operands");
    const auto n = static_cast<std::int32_t>(operands.size());
    if (param_base < 0 || static_cast<std::size_t>(param_base) + n > params_.size())
        throw std::out_of_range("dot_pool: weight block out of range");
    const auto off = static_cast<NodeId>(pool_.size());
    Jet2 r{0, 0, 0};
    for (std::int32_t k = 0; k < n; ++k) {
        const Jet2& x = vals_[check(operands[k])];
        pool_.push_back(operands[k]);
        r = r + params_[param_base + k] * x;
    }
    return push({.op = Op::DotPool, .a = off, .b = n, .param = param_base}, r);
}

NodeId Tape::sum_pool(std::span<const NodeId> operands) {
    if (operands.empty()) throw std::invalid_argument("sum_pool: no operands");
    const auto off = static_cast<NodeId>(pool_.size());
    Jet2 r{0, 0, 0};
    for (NodeId id : operands) {
        pool_.push_back(id);
        r = r + vals_[check(id)];
    }
    return push({.op = Op::SumPool, .a = off, .b = static_cast<std::int32_t>(operands.size())}, r);
}

// Reverse rules. With out = F(x) acting slot-wise on jets, the adjoint of an
// operand slot accumulates sum_s abar_s * d(out_s)/d(x_slot). For the unary
// chain out = (g(v), g' d1, g'' d1^2 + g' d2) this needs g', g'', g''':
//   xbar.v  += abar.v g' + abar.d1 g'' d1 + abar.d2 (g''' d1^2 + g'' d2)
//   xbar.d1 += abar.d1 g' + abar.d2 2 g'' d1
//   xbar.d2 += abar.d2 g'
// and for the Taylor product c = a*b:
//   abar.v  += cbar.v b.v + cbar.d1 b.d1 + cbar.d2 b.d2
//   abar.d1 += cbar.d1 b.v + cbar.d2 2 b.d1
//   abar.d2 += cbar.d2 b.v                      (and symmetrically for b).
std::size_t Tape::reverse(NodeId root, double seed, GradientBuffer& grad) const {
    const std::size_t r = check(root);
    if (grad.size() != params_.size())
        throw std::invalid_argument("reverse: gradient buffer size mismatch");
    adj_.assign(r + 1, Jet2{0, 0, 0});
    adj_[r].v = seed;
    std::size_t visited = 0;
    for (std::int64_t i = static_cast<std::int64_t>(r); i >= 0; --i) {
        ++visited;
        const Jet2 ab = adj_[i];
        if (ab.v == 0.0 && ab.d1 == 0.0 && ab.d2 == 0.0) continue;
        const TapeNode& n = nodes_[i];
        switch (n.op) {
            case Op::Const:
            case Op::Input:
                break;
            case Op::Param:
                grad[n.param] += ab.v;
                break;
            case Op::Add: {
                Jet2& pa = adj_[n.a];
                Jet2& pb = adj_[n.b];
                pa.v += ab.v; pa.d1 += ab.d1; pa.d2 += ab.d2;
                pb.v += ab.v; pb.d1 += ab.d1; pb.d2 += ab.d2;
                break;
            }
            case Op::Sub: {
                Jet2& pa = adj_[n.a];
                Jet2& pb = adj_[n.b];
                pa.v += ab.v; pa.d1 += ab.d1; pa.d2 += ab.d2;
                pb.v -= ab.v; pb.d1 -= ab.d1; pb.d2 -= ab.d2;
                break;
            }
            case Op::Mul: {
                const Jet2 av = vals_[n.a], bv = vals_[n.b];
                Jet2& pa = adj_[n.a];
                Jet2& pb = adj_[n.b];
                pa.v += ab.v * bv.v + ab.d1 * bv.d1 + ab.d2 * bv.d2;
                pa.d1 += ab.d1 * bv.v + ab.d2 * 2.0 * bv.d1;
                pa.d2 += ab.d2 * bv.v;
                pb.v += ab.v * av.v + ab.d1 * av.d1 + ab.d2 * av.d2;
                pb.d1 += ab.d1 * av.v + ab.d2 * 2.0 * av.d1;
                pb.d2 += ab.d2 * av.v;
                break;
            }
            case Op::Neg: {
                Jet2& pa = adj_[n.a];
                pa.v -= ab.v; pa.d1 -= ab.d1; pa.d2 -= ab.d2;
                break;
            }
            case Op::Scale: {
                Jet2& pa = adj_[n.a];
                pa.v += n.c0 * ab.v; pa.d1 += n.c0 * ab.d1; pa.d2 += n.c0 * ab.d2;
                break;
            }
            case Op::Shift: {
                Jet2& pa = adj_[n.a];
                pa.v += ab.v; pa.d1 += ab.d1; pa.d2 += ab.d2;
                break;
            }
            case Op::Act: {
                const Jet2 x = vals_[n.a];
                const double g1 = n.c0, g2 = n.c1, g3 = n.c2;
                Jet2& pa = adj_[n.a];
                pa.v += ab.v * g1 + ab.d1 * g2 * x.d1 + ab.d2 * (g3 * x.d1 * x.d1 + g2 * x.d2);
                pa.d1 += ab.d1 * g1 + ab.d2 * 2.0 * g2 * x.d1;
                pa.d2 += ab.d2 * g1;
                break;
            }
            case Op::SlotV:
                adj_[n.a].v += ab.v;
                break;
            case Op::SlotD1:
                adj_[n.a].d1 += ab.v;
                break;
            case Op::SlotD2:
                adj_[n.a].d2 += ab.v;
                break;
            case Op::AffineRange: {
                const double* w = params_.data() + n.param;
                const Jet2* in = vals_.data() + n.a;
                Jet2* padj = adj_.data() + n.a;
                double* g = grad.data() + n.param;
                for (std::int32_t k = 0; k < n.b; ++k) {
                    padj[k].v += w[k] * ab.v;
                    padj[k].d1 += w[k] * ab.d1;
                    padj[k].d2 += w[k] * ab.d2;
                    g[k] += ab.v * in[k].v + ab.d1 * in[k].d1 + ab.d2 * in[k].d2;
                }
                g[n.b] += ab.v;  // bias only feeds the value slot
                break;
            }
            case Op::SumRange: {
                Jet2* padj = adj_.data() + n.a;
                for (std::int32_t k = 0; k < n.b; ++k) {
                    padj[k].v += ab.v; padj[k].d1 += ab.d1; padj[k].d2 += ab.d2;
                }
                break;
            }
            case Op::DotPool: {
                const double* w = params_.data() + n.param;
                double* g = grad.data() + n.param;
                for (std::int32_t k = 0; k < n.b; ++k) {
                    const NodeId id = pool_[n.a + k];
                    const Jet2& x = vals_[id];
                    Jet2& px = adj_[id];
                    px.v += w[k] * ab.v;
                    px.d1 += w[k] * ab.d1;
                    px.d2 += w[k] * ab.d2;
                    g[k] += ab.v * x.v + ab.d1 * x.d1 + ab.d2 * x.d2;
                }
                break;
            }
            case Op::SumPool: {
                for (std::int32_t k = 0; k < n.b; ++k) {
                    Jet2& px = adj_[pool_[n.a + k]];
                    px.v += ab.v; px.d1 += ab.d1; px.d2 += ab.d2;
                }
                break;
            }
        }
    }
    return visited;
}

TapeBatch::TapeBatch(const Tape& tape, NodeId root, std::int32_t dims) : dims_(dims) {
    const auto all = tape.nodes();
    if (root < 0 || static_cast<std::size_t>(root) >= all.size())
        throw std::out_of_range("tape batch: root out of range");
    if (dims <= 0) throw std::invalid_argument("tape batch: non-positive dims");
    root_ = static_cast<std::size_t>(root);
    nodes_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(root_ + 1));
    const auto pool = tape.pool_ids();
    pool_.assign(pool.begin(), pool.end());
    params_ = tape.bound_params();
    for (const TapeNode& n : nodes_) {
        if (n.op == Op::Input && (n.param < 0 || n.param >= dims))
            throw std::invalid_argument("tape batch: input node missing a coordinate index");
        if (n.op == Op::Act && n.param < 0)
            throw std::invalid_argument("tape batch: activation node missing its kind");
    }
    const std::size_t slots = (root_ + 1) * kChunk;
    v_.resize(slots);
    d1_.resize(slots);
    d2_.resize(slots);
    g1_.resize(slots);
    g2_.resize(slots);
    g3_.resize(slots);
    av_.resize(slots);
    ad1_.resize(slots);
    ad2_.resize(slots);
}

// The per-point arithmetic below repeats the expressions of the single-point
// constructors verbatim so each chunk lane reproduces a fresh build of the
// same graph bit for bit; only the graph construction is skipped.
void TapeBatch::forward(std::span<const double> pts, std::size_t n) {
    if (n == 0 || n > kChunk) throw std::invalid_argument("tape batch: bad chunk size");
    const auto ud = static_cast<std::size_t>(dims_);
    if (pts.size() < n * ud) throw std::invalid_argument("tape batch: point buffer too short");
    n_ = n;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const TapeNode& nd = nodes_[i];
        double* rv = v_.data() + i * kChunk;
        double* r1 = d1_.data() + i * kChunk;
        double* r2 = d2_.data() + i * kChunk;
        const double* xv = nd.a >= 0 ? v_.data() + static_cast<std::size_t>(nd.a) * kChunk : nullptr;
        const double* x1 = nd.a >= 0 ? d1_.data() + static_cast<std::size_t>(nd.a) * kChunk : nullptr;
        const double* x2 = nd.a >= 0 ? d2_.data() + static_cast<std::size_t>(nd.a) * kChunk : nullptr;
        switch (nd.op) {
            case Op::Const:
                for (std::size_t c = 0; c < n; ++c) { rv[c] = nd.c0; r1[c] = 0.0; r2[c] = 0.0; }
                break;
            case Op::Input:
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = pts[c * ud + static_cast<std::size_t>(nd.param)];
                    r1[c] = 1.0;
                    r2[c] = 0.0;
                }
                break;
            case Op::Param: {
                const double pv = params_[static_cast<std::size_t>(nd.param)];
                for (std::size_t c = 0; c < n; ++c) { rv[c] = pv; r1[c] = 0.0; r2[c] = 0.0; }
                break;
            }
            case Op::Add: {
                const double* yv = v_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                const double* y1 = d1_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                const double* y2 = d2_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = xv[c] + yv[c];
                    r1[c] = x1[c] + y1[c];
                    r2[c] = x2[c] + y2[c];
                }
                break;
            }
            case Op::Sub: {
                const double* yv = v_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                const double* y1 = d1_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                const double* y2 = d2_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = xv[c] - yv[c];
                    r1[c] = x1[c] - y1[c];
                    r2[c] = x2[c] - y2[c];
                }
                break;
            }
            case Op::Mul: {
                const double* yv = v_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                const double* y1 = d1_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                const double* y2 = d2_.data() + static_cast<std::size_t>(nd.b) * kChunk;
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = xv[c] * yv[c];
                    r1[c] = x1[c] * yv[c] + xv[c] * y1[c];
                    r2[c] = x2[c] * yv[c] + 2.0 * x1[c] * y1[c] + xv[c] * y2[c];
                }
                break;
            }
            case Op::Neg:
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = -xv[c];
                    r1[c] = -x1[c];
                    r2[c] = -x2[c];
                }
                break;
            case Op::Scale:
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = nd.c0 * xv[c];
                    r1[c] = nd.c0 * x1[c];
                    r2[c] = nd.c0 * x2[c];
                }
                break;
            case Op::Shift:
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = xv[c] + nd.c0;
                    r1[c] = x1[c];
                    r2[c] = x2[c];
                }
                break;
            case Op::Act: {
                const auto act = static_cast<Activation>(nd.param);
                double* s1 = g1_.data() + i * kChunk;
                double* s2 = g2_.data() + i * kChunk;
                double* s3 = g3_.data() + i * kChunk;
                for (std::size_t c = 0; c < n; ++c) {
                    const ActDerivs d = activation_derivs(act, xv[c]);
                    rv[c] = d.g;
                    r1[c] = d.g1 * x1[c];
                    r2[c] = d.g2 * x1[c] * x1[c] + d.g1 * x2[c];
                    s1[c] = d.g1;
                    s2[c] = d.g2;
                    s3[c] = d.g3;
                }
                break;
            }
            case Op::SlotV:
                for (std::size_t c = 0; c < n; ++c) { rv[c] = xv[c]; r1[c] = 0.0; r2[c] = 0.0; }
                break;
            case Op::SlotD1:
                for (std::size_t c = 0; c < n; ++c) { rv[c] = x1[c]; r1[c] = 0.0; r2[c] = 0.0; }
                break;
            case Op::SlotD2:
                for (std::size_t c = 0; c < n; ++c) { rv[c] = x2[c]; r1[c] = 0.0; r2[c] = 0.0; }
                break;
            case Op::AffineRange: {
                const double* w = params_.data() + static_cast<std::size_t>(nd.param);
                double accv[kChunk] = {0.0}, acc1[kChunk] = {0.0}, acc2[kChunk] = {0.0};
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const double wk = w[k];
                    const std::size_t o = (static_cast<std::size_t>(nd.a) + static_cast<std::size_t>(k)) * kChunk;
                    const double* iv = v_.data() + o;
                    const double* i1 = d1_.data() + o;
                    const double* i2 = d2_.data() + o;
                    for (std::size_t c = 0; c < n; ++c) {
                        accv[c] += wk * iv[c];
                        acc1[c] += wk * i1[c];
                        acc2[c] += wk * i2[c];
                    }
                }
                const double bias = w[nd.b];
                for (std::size_t c = 0; c < n; ++c) {
                    rv[c] = accv[c] + bias;
                    r1[c] = acc1[c];
                    r2[c] = acc2[c];
                }
                break;
            }
            case Op::SumRange: {
                double accv[kChunk] = {0.0}, acc1[kChunk] = {0.0}, acc2[kChunk] = {0.0};
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const std::size_t o = (static_cast<std::size_t>(nd.a) + static_cast<std::size_t>(k)) * kChunk;
                    const double* iv = v_.data() + o;
                    const double* i1 = d1_.data() + o;
                    const double* i2 = d2_.data() + o;
                    for (std::size_t c = 0; c < n; ++c) {
                        accv[c] += iv[c];
                        acc1[c] += i1[c];
                        acc2[c] += i2[c];
                    }
                }
                for (std::size_t c = 0; c < n; ++c) { rv[c] = accv[c]; r1[c] = acc1[c]; r2[c] = acc2[c]; }
                break;
            }
            case Op::DotPool: {
                const double* w = params_.data() + static_cast<std::size_t>(nd.param);
                double accv[kChunk] = {0.0}, acc1[kChunk] = {0.0}, acc2[kChunk] = {0.0};
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const double wk = w[k];
                    const std::size_t o = static_cast<std::size_t>(pool_[static_cast<std::size_t>(nd.a + k)]) * kChunk;
                    const double* iv = v_.data() + o;
                    const double* i1 = d1_.data() + o;
                    const double* i2 = d2_.data() + o;
                    for (std::size_t c = 0; c < n; ++c) {
                        accv[c] += wk * iv[c];
                        acc1[c] += wk * i1[c];
                        acc2[c] += wk * i2[c];
                    }
                }
                for (std::size_t c = 0; c < n; ++c) { rv[c] = accv[c]; r1[c] = acc1[c]; r2[c] = acc2[c]; }
                break;
            }
            case Op::SumPool: {
                double accv[kChunk] = {0.0}, acc1[kChunk] = {0.0}, acc2[kChunk] = {0.0};
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const std::size_t o = static_cast<std::size_t>(pool_[static_cast<std::size_t>(nd.a + k)]) * kChunk;
                    const double* iv = v_.data() + o;
                    const double* i1 = d1_.data() + o;
                    const double* i2 = d2_.data() + o;
                    for (std::size_t c = 0; c < n; ++c) {
                        accv[c] += iv[c];
                        acc1[c] += i1[c];
                        acc2[c] += i2[c];
                    }
                }
                for (std::size_t c = 0; c < n; ++c) { rv[c] = accv[c]; r1[c] = acc1[c]; r2[c] = acc2[c]; }
                break;
            }
        }
    }
}

Jet2 TapeBatch::jet(NodeId id, std::size_t c) const {
    if (id < 0 || static_cast<std::size_t>(id) > root_ || c >= n_)
        throw std::out_of_range("tape batch: jet query out of range");
    const std::size_t s = static_cast<std::size_t>(id) * kChunk + c;
    return {v_[s], d1_[s], d2_[s]};
}

void TapeBatch::reverse(std::span<const double> seeds, std::size_t n, GradientBuffer& grad) {
    if (n != n_) throw std::invalid_argument("tape batch: reverse chunk size mismatch");
    if (seeds.size() < n) throw std::invalid_argument("tape batch: seed buffer too short");
    if (grad.size() != params_.size())
        throw std::invalid_argument("tape batch: gradient buffer size mismatch");
    std::fill(av_.begin(), av_.end(), 0.0);
    std::fill(ad1_.begin(), ad1_.end(), 0.0);
    std::fill(ad2_.begin(), ad2_.end(), 0.0);
    for (std::size_t c = 0; c < n; ++c) av_[root_ * kChunk + c] = seeds[c];
    for (std::int64_t i = static_cast<std::int64_t>(root_); i >= 0; --i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        const double* abv = av_.data() + ui * kChunk;
        const double* ab1 = ad1_.data() + ui * kChunk;
        const double* ab2 = ad2_.data() + ui * kChunk;
        bool live = false;
        for (std::size_t c = 0; c < n; ++c)
            if (abv[c] != 0.0 || ab1[c] != 0.0 || ab2[c] != 0.0) { live = true; break; }
        if (!live) continue;
        const TapeNode& nd = nodes_[i];
        const std::size_t oa = nd.a >= 0 ? static_cast<std::size_t>(nd.a) * kChunk : 0;
        switch (nd.op) {
            case Op::Const:
            case Op::Input:
                break;
            case Op::Param: {
                double g = 0.0;
                for (std::size_t c = 0; c < n; ++c) g += abv[c];
                grad[static_cast<std::size_t>(nd.param)] += g;
                break;
            }
            case Op::Add: {
                const std::size_t ob = static_cast<std::size_t>(nd.b) * kChunk;
                for (std::size_t c = 0; c < n; ++c) {
                    av_[oa + c] += abv[c]; ad1_[oa + c] += ab1[c]; ad2_[oa + c] += ab2[c];
                    av_[ob + c] += abv[c]; ad1_[ob + c] += ab1[c]; ad2_[ob + c] += ab2[c];
                }
                break;
            }
            case Op::Sub: {
                const std::size_t ob = static_cast<std::size_t>(nd.b) * kChunk;
                for (std::size_t c = 0; c < n; ++c) {
                    av_[oa + c] += abv[c]; ad1_[oa + c] += ab1[c]; ad2_[oa + c] += ab2[c];
                    av_[ob + c] -= abv[c]; ad1_[ob + c] -= ab1[c]; ad2_[ob + c] -= ab2[c];
                }
                break;
            }
            case Op::Mul: {
                const std::size_t ob = static_cast<std::size_t>(nd.b) * kChunk;
                const double* avv = v_.data() + oa;
                const double* av1 = d1_.data() + oa;
                const double* av2 = d2_.data() + oa;
                const double* bvv = v_.data() + ob;
                const double* bv1 = d1_.data() + ob;
                const double* bv2 = d2_.data() + ob;
                for (std::size_t c = 0; c < n; ++c) {
                    av_[oa + c] += abv[c] * bvv[c] + ab1[c] * bv1[c] + ab2[c] * bv2[c];
                    ad1_[oa + c] += ab1[c] * bvv[c] + ab2[c] * 2.0 * bv1[c];
                    ad2_[oa + c] += ab2[c] * bvv[c];
                    av_[ob + c] += abv[c] * avv[c] + ab1[c] * av1[c] + ab2[c] * av2[c];
                    ad1_[ob + c] += ab1[c] * avv[c] + ab2[c] * 2.0 * av1[c];
                    ad2_[ob + c] += ab2[c] * avv[c];
                }
                break;
            }
            case Op::Neg:
                for (std::size_t c = 0; c < n; ++c) {
                    av_[oa + c] -= abv[c]; ad1_[oa + c] -= ab1[c]; ad2_[oa + c] -= ab2[c];
                }
                break;
            case Op::Scale:
                for (std::size_t c = 0; c < n; ++c) {
                    av_[oa + c] += nd.c0 * abv[c];
                    ad1_[oa + c] += nd.c0 * ab1[c];
                    ad2_[oa + c] += nd.c0 * ab2[c];
                }
                break;
            case Op::Shift:
                for (std::size_t c = 0; c < n; ++c) {
                    av_[oa + c] += abv[c]; ad1_[oa + c] += ab1[c]; ad2_[oa + c] += ab2[c];
                }
                break;
            case Op::Act: {
                const double* x1 = d1_.data() + oa;
                const double* x2 = d2_.data() + oa;
                const double* s1 = g1_.data() + ui * kChunk;
                const double* s2 = g2_.data() + ui * kChunk;
                const double* s3 = g3_.data() + ui * kChunk;
                for (std::size_t c = 0; c < n; ++c) {
                    av_[oa + c] += abv[c] * s1[c] + ab1[c] * s2[c] * x1[c] +
                                   ab2[c] * (s3[c] * x1[c] * x1[c] + s2[c] * x2[c]);
                    ad1_[oa + c] += ab1[c] * s1[c] + ab2[c] * 2.0 * s2[c] * x1[c];
                    ad2_[oa + c] += ab2[c] * s1[c];
                }
                break;
            }
            case Op::SlotV:
                for (std::size_t c = 0; c < n; ++c) av_[oa + c] += abv[c];
                break;
            case Op::SlotD1:
                for (std::size_t c = 0; c < n; ++c) ad1_[oa + c] += abv[c];
                break;
            case Op::SlotD2:
                for (std::size_t c = 0; c < n; ++c) ad2_[oa + c] += abv[c];
                break;
            case Op::AffineRange: {
                const double* w = params_.data() + static_cast<std::size_t>(nd.param);
                double* g = grad.data() + static_cast<std::size_t>(nd.param);
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const double wk = w[k];
                    const std::size_t o = oa + static_cast<std::size_t>(k) * kChunk;
                    const double* iv = v_.data() + o;
                    const double* i1 = d1_.data() + o;
                    const double* i2 = d2_.data() + o;
                    double gk = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                        av_[o + c] += wk * abv[c];
                        ad1_[o + c] += wk * ab1[c];
                        ad2_[o + c] += wk * ab2[c];
                        gk += abv[c] * iv[c] + ab1[c] * i1[c] + ab2[c] * i2[c];
                    }
                    g[k] += gk;
                }
                double gb = 0.0;
                for (std::size_t c = 0; c < n; ++c) gb += abv[c];
                g[nd.b] += gb;  // bias only feeds the value slot
                break;
            }
            case Op::SumRange: {
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const std::size_t o = oa + static_cast<std::size_t>(k) * kChunk;
                    for (std::size_t c = 0; c < n; ++c) {
                        av_[o + c] += abv[c]; ad1_[o + c] += ab1[c]; ad2_[o + c] += ab2[c];
                    }
                }
                break;
            }
            case Op::DotPool: {
                const double* w = params_.data() + static_cast<std::size_t>(nd.param);
                double* g = grad.data() + static_cast<std::size_t>(nd.param);
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const double wk = w[k];
                    const std::size_t o = static_cast<std::size_t>(pool_[static_cast<std::size_t>(nd.a + k)]) * kChunk;
                    const double* iv = v_.data() + o;
                    const double* i1 = d1_.data() + o;
                    const double* i2 = d2_.data() + o;
                    double gk = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                        av_[o + c] += wk * abv[c];
                        ad1_[o + c] += wk * ab1[c];
                        ad2_[o + c] += wk * ab2[c];
                        gk += abv[c] * iv[c] + ab1[c] * i1[c] + ab2[c] * i2[c];
                    }
                    g[k] += gk;
                }
                break;
            }
            case Op::SumPool: {
                for (std::int32_t k = 0; k < nd.b; ++k) {
                    const std::size_t o = static_cast<std::size_t>(pool_[static_cast<std::size_t>(nd.a + k)]) * kChunk;
                    for (std::size_t c = 0; c < n; ++c) {
                        av_[o + c] += abv[c]; ad1_[o + c] += ab1[c]; ad2_[o + c] += ab2[c];
                    }
                }
                break;
            }
        }
    }
}

double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> params,
                         std::span<const double> analytic_grad,
                         double step,
                         double scale_floor) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
    if (params.size() != analytic_grad.size())
        throw std::invalid_argument("finite_diff_check: size mismatch");
    std::vector<double> p(params.begin(), params.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + step;
        const double fp = f(p);
        p[i] = saved - step;
        const double fm = f(p);
        p[i] = saved;
        const double fd = (fp - fm) / (2.0 * step);
        const double ad = analytic_grad[i];
        const double denom = std::max({std::abs(fd), std::abs(ad), scale_floor});
        worst = std::max(worst, std::abs(fd - ad) / denom);
    }
    return worst;
}

}  // namespace tnn
