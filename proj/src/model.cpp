#include "tnn/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tnn/io.hpp"
#include "tnn/rng.hpp"

namespace tnn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double activation_value(Activation a, double v) {
    switch (a) {
        case Activation::Tanh: return std::tanh(v);
        case Activation::Sin: return std::sin(v);
        case Activation::Cos: return std::cos(v);
        case Activation::TrigBlend: return 0.5 * (std::sin(v) + std::cos(v));
    }
    throw std::logic_error("unknown activation");
}

}  // namespace

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "sin") return Activation::Sin;
    if (name == "cos") return Activation::Cos;
    if (name == "trigblend") return Activation::TrigBlend;
    throw std::invalid_argument("unknown activation: " + name);
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Sin: return "sin";
        case Activation::Cos: return "cos";
        case Activation::TrigBlend: return "trigblend";
    }
    return "?";
}

double FeatureSpec::sigma_for(int dim) const {
    if (sigma.empty()) return 10.0;
    if (sigma.size() == 1) return sigma[0];
    if (dim < 0 || static_cast<std::size_t>(dim) >= sigma.size())
        throw std::out_of_range("feature sigma: dimension out of range");
    return sigma[static_cast<std::size_t>(dim)];
}

void TnnModel::build_layout() {
    const int d = cfg_.dims;
    if (d < 1) throw std::invalid_argument("model: dims must be >= 1");
    if (cfg_.combiner == Combiner::Cp) {
        if (cfg_.rank < 1) throw std::invalid_argument("model: CP rank must be >= 1");
        ranks_.clear();
    } else {
        if (static_cast<int>(cfg_.tt_ranks.size()) != d - 1)
            throw std::invalid_argument("model: TT needs dims-1 interior ranks");
        ranks_.assign(1, 1);
        for (int r : cfg_.tt_ranks) {
            if (r < 1) throw std::invalid_argument("model: TT ranks must be >= 1");
            ranks_.push_back(r);
        }
        ranks_.push_back(1);
    }
    for (int h : cfg_.hidden)
        if (h < 1) throw std::invalid_argument("model: hidden widths must be >= 1");

    layout_.assign(d, SubnetLayout{});
    std::size_t off = 0;
    for (int i = 0; i < d; ++i) {
        SubnetLayout& sn = layout_[i];
        sn.feature_width = freqs_[i].empty() ? 1 : 2 * static_cast<int>(freqs_[i].size());
        sn.channels = cfg_.combiner == Combiner::Cp ? cfg_.rank : ranks_[i] * ranks_[i + 1];
        int in = sn.feature_width;
        for (int h : cfg_.hidden) {
            sn.layers.push_back({in, h, off});
            off += static_cast<std::size_t>(h) * (in + 1);
            in = h;
        }
        sn.layers.push_back({in, sn.channels, off});
        off += static_cast<std::size_t>(sn.channels) * (in + 1);
    }
    w_offset_ = off;
    if (cfg_.combiner == Combiner::Cp) off += static_cast<std::size_t>(cfg_.rank);
    params_.assign(off, 0.0);
}

TnnModel TnnModel::init(const ModelConfig& cfg) {
    TnnModel m;
    m.cfg_ = cfg;
    const int d = cfg.dims;
    m.freqs_.assign(d, {});
    switch (cfg.feature.mode) {
        case FeatureMode::None:
            break;
        case FeatureMode::Random: {
            if (cfg.feature.m < 1) throw std::invalid_argument("model: feature m must be >= 1");
            for (int i = 0; i < d; ++i) {
                auto eng = make_engine(derive_seed(cfg.seed, seed_stream::kFeature, i));
                std::normal_distribution<double> g(0.0, cfg.feature.sigma_for(i));
                m.freqs_[i].resize(cfg.feature.m);
                for (double& b : m.freqs_[i]) b = g(eng);
            }
            break;
        }
        case FeatureMode::Adapted: {
            if (static_cast<int>(cfg.feature.adapted.size()) != d)
                throw std::invalid_argument("model: adapted feature sets must cover every dimension");
            for (int i = 0; i < d; ++i) {
                if (cfg.feature.adapted[i].empty())
                    throw std::invalid_argument("model: adapted feature set is empty");
                int prev = 0;  // lists are strictly increasing positive integers; DC
                               // is the sub-network bias's job
                for (int k : cfg.feature.adapted[i]) {
                    if (k <= prev)
                        throw std::invalid_argument(
                            "model: adapted frequencies must be strictly increasing and >= 1");
                    prev = k;
                    m.freqs_[i].push_back(static_cast<double>(k));
                }
            }
            break;
        }
    }
    m.build_layout();

    // Glorot normal on weights, bias_init_std on biases, ones on the CP
    // output weights (the trainable version of the all-ones combiner).
    for (int i = 0; i < d; ++i) {
        auto eng = make_engine(derive_seed(cfg.seed, seed_stream::kInit, i));
        for (const LayerLayout& L : m.layout_[i].layers) {
            std::normal_distribution<double> g(0.0, std::sqrt(2.0 / (L.in + L.out)));
            std::normal_distribution<double> gb(0.0, cfg.bias_init_std);
            for (int row = 0; row < L.out; ++row) {
                double* w = m.params_.data() + L.offset + static_cast<std::size_t>(row) * (L.in + 1);
                for (int k = 0; k < L.in; ++k) w[k] = g(eng);
                w[L.in] = cfg.bias_init_std > 0.0 ? gb(eng) : 0.0;
            }
        }
    }
    if (cfg.combiner == Combiner::Cp)
        for (int a = 0; a < cfg.rank; ++a) m.params_[m.w_offset_ + a] = 1.0;
    return m;
}

TnnModel TnnModel::rebuild_with_frequencies(const ModelConfig& base,
                                            const std::vector<std::vector<int>>& freqs,
                                            std::uint64_t seed) {
    ModelConfig cfg = base;
    cfg.feature.mode = FeatureMode::Adapted;
    cfg.feature.adapted = freqs;
    cfg.seed = seed;
    return init(cfg);
}

std::span<const double> TnnModel::cp_weights() const {
    if (cfg_.combiner != Combiner::Cp) throw std::logic_error("cp_weights: not a CP model");
    return {params_.data() + w_offset_, static_cast<std::size_t>(cfg_.rank)};
}

void TnnModel::eval_channels(int dim, double x, std::span<Jet2> out) const {
    const SubnetLayout& sn = layout_[static_cast<std::size_t>(dim)];
    if (static_cast<int>(out.size()) != sn.channels)
        throw std::invalid_argument("eval_channels: output span size mismatch");
    thread_local std::vector<Jet2> buf_a, buf_b;
    buf_a.resize(static_cast<std::size_t>(sn.feature_width));
    const auto& fs = freqs_[static_cast<std::size_t>(dim)];
    if (fs.empty()) {
        buf_a[0] = jet_lift(x, true);
    } else {
        const std::size_t f = fs.size();
        for (std::size_t j = 0; j < f; ++j) {
            const double w = kTwoPi * fs[j];
            const Jet2 theta{w * x, w, 0.0};
            buf_a[j] = jet_activate(Activation::Cos, theta);
            buf_a[f + j] = jet_activate(Activation::Sin, theta);
        }
    }
    std::vector<Jet2>* cur = &buf_a;
    std::vector<Jet2>* nxt = &buf_b;
    for (std::size_t li = 0; li < sn.layers.size(); ++li) {
        const LayerLayout& L = sn.layers[li];
        nxt->resize(static_cast<std::size_t>(L.out));
        const bool act = li + 1 < sn.layers.size() || cfg_.activate_output;
        for (int row = 0; row < L.out; ++row) {
            const double* w = params_.data() + L.offset + static_cast<std::size_t>(row) * (L.in + 1);
            Jet2 acc{w[L.in], 0.0, 0.0};
            for (int k = 0; k < L.in; ++k) acc = acc + w[k] * (*cur)[static_cast<std::size_t>(k)];
            (*nxt)[static_cast<std::size_t>(row)] = act ? jet_activate(cfg_.activation, acc) : acc;
        }
        std::swap(cur, nxt);
    }
    for (int c = 0; c < sn.channels; ++c) out[static_cast<std::size_t>(c)] = (*cur)[static_cast<std::size_t>(c)];
}

void TnnModel::eval_channels_value(int dim, double x, std::span<double> out) const {
    const SubnetLayout& sn = layout_[static_cast<std::size_t>(dim)];
    if (static_cast<int>(out.size()) != sn.channels)
        throw std::invalid_argument("eval_channels_value: output span size mismatch");
    thread_local std::vector<double> buf_a, buf_b;
    buf_a.resize(static_cast<std::size_t>(sn.feature_width));
    const auto& fs = freqs_[static_cast<std::size_t>(dim)];
    if (fs.empty()) {
        buf_a[0] = x;
    } else {
        const std::size_t f = fs.size();
        for (std::size_t j = 0; j < f; ++j) {
            const double th = kTwoPi * fs[j] * x;
            buf_a[j] = std::cos(th);
            buf_a[f + j] = std::sin(th);
        }
    }
    std::vector<double>* cur = &buf_a;
    std::vector<double>* nxt = &buf_b;
    for (std::size_t li = 0; li < sn.layers.size(); ++li) {
        const LayerLayout& L = sn.layers[li];
        nxt->resize(static_cast<std::size_t>(L.out));
        const bool act = li + 1 < sn.layers.size() || cfg_.activate_output;
        for (int row = 0; row < L.out; ++row) {
            const double* w = params_.data() + L.offset + static_cast<std::size_t>(row) * (L.in + 1);
            double acc = w[L.in];
            for (int k = 0; k < L.in; ++k) acc += w[k] * (*cur)[static_cast<std::size_t>(k)];
            (*nxt)[static_cast<std::size_t>(row)] = act ? activation_value(cfg_.activation, acc) : acc;
        }
        std::swap(cur, nxt);
    }
    for (int c = 0; c < sn.channels; ++c) out[static_cast<std::size_t>(c)] = (*cur)[static_cast<std::size_t>(c)];
}

ModelEval cp_combine(const std::vector<std::vector<Jet2>>& channels,
                     std::span<const double> w, bool want_derivs) {
    const std::size_t d = channels.size();
    const std::size_t r = w.size();
    if (d == 0 || r == 0) throw std::invalid_argument("cp_combine: empty input");
    for (const auto& ch : channels)
        if (ch.size() != r) throw std::invalid_argument("cp_combine: channel count mismatch");
    ModelEval ev;
    if (want_derivs) {
        ev.du.assign(d, 0.0);
        ev.d2u.assign(d, 0.0);
    }
    thread_local std::vector<double> pre, suf;
    pre.resize(d + 1);
    suf.resize(d + 1);
    for (std::size_t a = 0; a < r; ++a) {
        pre[0] = 1.0;
        for (std::size_t i = 0; i < d; ++i) pre[i + 1] = pre[i] * channels[i][a].v;
        ev.u += w[a] * pre[d];
        if (!want_derivs) continue;
        suf[d] = 1.0;
        for (std::size_t i = d; i-- > 0;) suf[i] = channels[i][a].v * suf[i + 1];
        for (std::size_t k = 0; k < d; ++k) {
            const double e = pre[k] * suf[k + 1];
            ev.du[k] += w[a] * channels[k][a].d1 * e;
            ev.d2u[k] += w[a] * channels[k][a].d2 * e;
        }
    }
    return ev;
}

ModelEval tt_combine(const std::vector<std::vector<Jet2>>& cores,
                     std::span<const int> ranks, bool want_derivs) {
    const std::size_t d = cores.size();
    if (d == 0) throw std::invalid_argument("tt_combine: empty input");
    if (ranks.size() != d + 1 || ranks[0] != 1 || ranks[d] != 1)
        throw std::invalid_argument("tt_combine: rank chain must be 1, r_1, ..., r_{d-1}, 1");
    for (std::size_t i = 0; i < d; ++i)
        if (cores[i].size() != static_cast<std::size_t>(ranks[i]) * ranks[i + 1])
            throw std::invalid_argument("tt_combine: core size mismatch");

    // Value-slot prefix rows L[i] (1 x r_i) and suffix columns R[i] (r_i x 1).
    std::vector<std::vector<double>> L(d + 1), R(d + 1);
    L[0] = {1.0};
    for (std::size_t i = 0; i < d; ++i) {
        L[i + 1].assign(static_cast<std::size_t>(ranks[i + 1]), 0.0);
        for (int g = 0; g < ranks[i]; ++g)
            for (int b = 0; b < ranks[i + 1]; ++b)
                L[i + 1][b] += L[i][g] * cores[i][static_cast<std::size_t>(g) * ranks[i + 1] + b].v;
    }
    R[d] = {1.0};
    for (std::size_t i = d; i-- > 0;) {
        R[i].assign(static_cast<std::size_t>(ranks[i]), 0.0);
        for (int g = 0; g < ranks[i]; ++g)
            for (int b = 0; b < ranks[i + 1]; ++b)
                R[i][g] += cores[i][static_cast<std::size_t>(g) * ranks[i + 1] + b].v * R[i + 1][b];
    }
    ModelEval ev;
    ev.u = L[d][0];
    if (!want_derivs) return ev;
    ev.du.assign(d, 0.0);
    ev.d2u.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        double s1 = 0.0, s2 = 0.0;
        for (int g = 0; g < ranks[k]; ++g)
            for (int b = 0; b < ranks[k + 1]; ++b) {
                const Jet2& c = cores[k][static_cast<std::size_t>(g) * ranks[k + 1] + b];
                const double lr = L[k][g] * R[k + 1][b];
                s1 += lr * c.d1;
                s2 += lr * c.d2;
            }
        ev.du[k] = s1;
        ev.d2u[k] = s2;
    }
    return ev;
}

ModelEval TnnModel::eval(std::span<const double> point, bool want_derivs) const {
    if (static_cast<int>(point.size()) != cfg_.dims)
        throw std::invalid_argument("eval: point dimension mismatch");
    std::vector<std::vector<Jet2>> ch(static_cast<std::size_t>(cfg_.dims));
    for (int i = 0; i < cfg_.dims; ++i) {
        ch[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(channels(i)));
        eval_channels(i, point[static_cast<std::size_t>(i)], ch[static_cast<std::size_t>(i)]);
    }
    if (cfg_.combiner == Combiner::Cp) return cp_combine(ch, cp_weights(), want_derivs);
    return tt_combine(ch, ranks_, want_derivs);
}

double TnnModel::value(std::span<const double> point) const {
    if (static_cast<int>(point.size()) != cfg_.dims)
        throw std::invalid_argument("value: point dimension mismatch");
    const int d = cfg_.dims;
    thread_local std::vector<std::vector<double>> ch;
    ch.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        ch[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(channels(i)));
        eval_channels_value(i, point[static_cast<std::size_t>(i)], ch[static_cast<std::size_t>(i)]);
    }
    if (cfg_.combiner == Combiner::Cp) {
        const auto w = cp_weights();
        double u = 0.0;
        for (std::size_t a = 0; a < w.size(); ++a) {
            double p = w[a];
            for (int i = 0; i < d; ++i) p *= ch[static_cast<std::size_t>(i)][a];
            u += p;
        }
        return u;
    }
    std::vector<double> row = {1.0};
    for (int i = 0; i < d; ++i) {
        std::vector<double> nxt(static_cast<std::size_t>(ranks_[i + 1]), 0.0);
        for (int g = 0; g < ranks_[i]; ++g)
            for (int b = 0; b < ranks_[i + 1]; ++b)
                nxt[b] += row[g] * ch[static_cast<std::size_t>(i)][static_cast<std::size_t>(g) * ranks_[i + 1] + b];
        row = std::move(nxt);
    }
    return row[0];
}

std::vector<double> TnnModel::eval_batch(std::span<const double> pts, std::size_t n) const {
    if (pts.size() != n * static_cast<std::size_t>(cfg_.dims))
        throw std::invalid_argument("eval_batch: size mismatch");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = value(pts.subspan(i * static_cast<std::size_t>(cfg_.dims), static_cast<std::size_t>(cfg_.dims)));
    return out;
}

namespace {

struct Range {
    NodeId first = -1;
    std::int32_t count = 0;
};

}  // namespace

TapeEval TnnModel::forward_tape(Tape& tape, std::span<const double> point, bool want_derivs) const {
    if (static_cast<int>(point.size()) != cfg_.dims)
        throw std::invalid_argument("forward_tape: point dimension mismatch");
    const int d = cfg_.dims;
    std::vector<Range> ch(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        const SubnetLayout& sn = layout_[static_cast<std::size_t>(i)];
        const NodeId xin = tape.input(point[static_cast<std::size_t>(i)], i);
        Range cur;
        const auto& fs = freqs_[static_cast<std::size_t>(i)];
        if (fs.empty()) {
            cur = {xin, 1};
        } else {
            const auto f = static_cast<std::int32_t>(fs.size());
            NodeId th0 = -1;
            for (std::int32_t j = 0; j < f; ++j) {
                const NodeId t = tape.scale(xin, kTwoPi * fs[static_cast<std::size_t>(j)]);
                if (j == 0) th0 = t;
            }
            NodeId c0 = -1;
            for (std::int32_t j = 0; j < f; ++j) {
                const NodeId c = tape.activate(Activation::Cos, th0 + j);
                if (j == 0) c0 = c;
            }
            for (std::int32_t j = 0; j < f; ++j) tape.activate(Activation::Sin, th0 + j);
            cur = {c0, 2 * f};  // cos block immediately followed by sin block
        }
        for (std::size_t li = 0; li < sn.layers.size(); ++li) {
            const LayerLayout& L = sn.layers[li];
            const bool act = li + 1 < sn.layers.size() || cfg_.activate_output;
            NodeId r0 = -1;
            for (int row = 0; row < L.out; ++row) {
                const NodeId r = tape.affine_range(
                    cur.first, cur.count,
                    static_cast<std::int32_t>(L.offset + static_cast<std::size_t>(row) * (L.in + 1)));
                if (row == 0) r0 = r;
            }
            if (act) {
                NodeId a0 = -1;
                for (int row = 0; row < L.out; ++row) {
                    const NodeId a = tape.activate(cfg_.activation, r0 + row);
                    if (row == 0) a0 = a;
                }
                cur = {a0, L.out};
            } else {
                cur = {r0, L.out};
            }
        }
        ch[static_cast<std::size_t>(i)] = cur;
    }

    thread_local std::vector<NodeId> sv, sd1, sd2, terms;
    TapeEval ev;
    if (cfg_.combiner == Combiner::Cp) {
        const int r = cfg_.rank;
        sv.resize(static_cast<std::size_t>(d) * r);
        sd1.resize(static_cast<std::size_t>(d) * r);
        sd2.resize(static_cast<std::size_t>(d) * r);
        for (int i = 0; i < d; ++i)
            for (int a = 0; a < r; ++a) {
                sv[static_cast<std::size_t>(i) * r + a] = tape.slot_v(ch[static_cast<std::size_t>(i)].first + a);
                if (want_derivs) {
                    sd1[static_cast<std::size_t>(i) * r + a] = tape.slot_d1(ch[static_cast<std::size_t>(i)].first + a);
                    sd2[static_cast<std::size_t>(i) * r + a] = tape.slot_d2(ch[static_cast<std::size_t>(i)].first + a);
                }
            }
        const auto wbase = static_cast<std::int32_t>(w_offset_);
        // Per-channel prefix/suffix value products give every "product of the
        // other dimensions" without divisions.
        thread_local std::vector<NodeId> pre, suf, prod, tdu, td2u;
        pre.resize(static_cast<std::size_t>(d) + 1);
        suf.resize(static_cast<std::size_t>(d) + 1);
        prod.resize(static_cast<std::size_t>(r));
        if (want_derivs) {
            tdu.resize(static_cast<std::size_t>(d) * r);
            td2u.resize(static_cast<std::size_t>(d) * r);
        }
        for (int a = 0; a < r; ++a) {
            pre[0] = -1;
            for (int i = 0; i < d; ++i) {
                const NodeId vi = sv[static_cast<std::size_t>(i) * r + a];
                pre[i + 1] = i == 0 ? vi : tape.mul(pre[i], vi);
            }
            prod[static_cast<std::size_t>(a)] = pre[d];
            if (!want_derivs) continue;
            suf[d] = -1;
            for (int i = d; i-- > 0;) {
                const NodeId vi = sv[static_cast<std::size_t>(i) * r + a];
                suf[i] = i == d - 1 ? vi : tape.mul(vi, suf[i + 1]);
            }
            for (int k = 0; k < d; ++k) {
                NodeId e = -1;
                if (k == 0)
                    e = d > 1 ? suf[1] : -1;
                else if (k == d - 1)
                    e = pre[d - 1];
                else
                    e = tape.mul(pre[k], suf[k + 1]);
                const NodeId t1 = sd1[static_cast<std::size_t>(k) * r + a];
                const NodeId t2 = sd2[static_cast<std::size_t>(k) * r + a];
                tdu[static_cast<std::size_t>(k) * r + a] = e < 0 ? t1 : tape.mul(t1, e);
                td2u[static_cast<std::size_t>(k) * r + a] = e < 0 ? t2 : tape.mul(t2, e);
            }
        }
        ev.u = tape.dot_pool(prod, wbase);
        if (want_derivs) {
            ev.du.resize(static_cast<std::size_t>(d));
            ev.d2u.resize(static_cast<std::size_t>(d));
            for (int k = 0; k < d; ++k) {
                ev.du[static_cast<std::size_t>(k)] =
                    tape.dot_pool(std::span(tdu).subspan(static_cast<std::size_t>(k) * r, r), wbase);
                ev.d2u[static_cast<std::size_t>(k)] =
                    tape.dot_pool(std::span(td2u).subspan(static_cast<std::size_t>(k) * r, r), wbase);
            }
        }
        return ev;
    }

    // TT: value-slot prefix rows / suffix columns, then one bilinear form per
    // dimension with the d1/d2 slots substituted into that core.
    const std::vector<int>& rk = ranks_;
    auto core_slot_v = [&](int i, int g, int b) {
        return tape.slot_v(ch[static_cast<std::size_t>(i)].first + g * rk[i + 1] + b);
    };
    std::vector<std::vector<NodeId>> L(static_cast<std::size_t>(d) + 1), R(static_cast<std::size_t>(d) + 1);
    std::vector<std::vector<NodeId>> svtt(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        svtt[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(rk[i]) * rk[i + 1]);
        for (int g = 0; g < rk[i]; ++g)
            for (int b = 0; b < rk[i + 1]; ++b)
                svtt[static_cast<std::size_t>(i)][static_cast<std::size_t>(g) * rk[i + 1] + b] = core_slot_v(i, g, b);
    }
    L[0] = {};
    for (int i = 0; i < d; ++i) {
        L[i + 1].assign(static_cast<std::size_t>(rk[i + 1]), -1);
        for (int b = 0; b < rk[i + 1]; ++b) {
            if (i == 0) {
                L[1][b] = svtt[0][static_cast<std::size_t>(b)];
                continue;
            }
            terms.clear();
            for (int g = 0; g < rk[i]; ++g)
                terms.push_back(tape.mul(L[i][g], svtt[static_cast<std::size_t>(i)][static_cast<std::size_t>(g) * rk[i + 1] + b]));
            L[i + 1][b] = terms.size() == 1 ? terms[0] : tape.sum_pool(terms);
        }
    }
    R[static_cast<std::size_t>(d)] = {};
    for (int i = d; i-- > 0;) {
        R[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(rk[i]), -1);
        for (int g = 0; g < rk[i]; ++g) {
            if (i == d - 1) {
                R[static_cast<std::size_t>(i)][g] = svtt[static_cast<std::size_t>(i)][static_cast<std::size_t>(g)];
                continue;
            }
            terms.clear();
            for (int b = 0; b < rk[i + 1]; ++b)
                terms.push_back(tape.mul(svtt[static_cast<std::size_t>(i)][static_cast<std::size_t>(g) * rk[i + 1] + b],
                                         R[static_cast<std::size_t>(i) + 1][b]));
            R[static_cast<std::size_t>(i)][g] = terms.size() == 1 ? terms[0] : tape.sum_pool(terms);
        }
    }
    ev.u = L[static_cast<std::size_t>(d)][0];
    if (!want_derivs) return ev;
    ev.du.resize(static_cast<std::size_t>(d));
    ev.d2u.resize(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        auto bilinear = [&](auto slot_fn) {
            terms.clear();
            for (int g = 0; g < rk[k]; ++g)
                for (int b = 0; b < rk[k + 1]; ++b) {
                    NodeId t = slot_fn(ch[static_cast<std::size_t>(k)].first + g * rk[k + 1] + b);
                    if (k > 0) t = tape.mul(L[k][g], t);
                    if (k < d - 1) t = tape.mul(t, R[static_cast<std::size_t>(k) + 1][b]);
                    terms.push_back(t);
                }
            return terms.size() == 1 ? terms[0] : tape.sum_pool(terms);
        };
        ev.du[static_cast<std::size_t>(k)] = bilinear([&](NodeId id) { return tape.slot_d1(id); });
        ev.d2u[static_cast<std::size_t>(k)] = bilinear([&](NodeId id) { return tape.slot_d2(id); });
    }
    return ev;
}

nlohmann::json TnnModel::to_json() const {
    nlohmann::json j;
    j["format"] = "tnn-model-1";
    j["combiner"] = cfg_.combiner == Combiner::Cp ? "cp" : "tt";
    j["dims"] = cfg_.dims;
    j["rank"] = cfg_.rank;
    j["tt_ranks"] = cfg_.tt_ranks;
    j["hidden"] = cfg_.hidden;
    j["activation"] = to_string(cfg_.activation);
    j["activate_output"] = cfg_.activate_output;
    j["bias_init_std"] = cfg_.bias_init_std;
    j["seed"] = cfg_.seed;
    nlohmann::json f;
    f["mode"] = cfg_.feature.mode == FeatureMode::None
                    ? "none"
                    : (cfg_.feature.mode == FeatureMode::Random ? "random" : "adapted");
    f["m"] = cfg_.feature.m;
    f["sigma"] = cfg_.feature.sigma;
    f["adapted"] = cfg_.feature.adapted;
    j["feature"] = f;
    j["freqs"] = freqs_;
    j["params"] = params_;
    return j;
}

TnnModel TnnModel::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "tnn-model-1")
        throw std::invalid_argument("model checkpoint: unknown format");
    TnnModel m;
    m.cfg_.combiner = j.at("combiner").get<std::string>() == "cp" ? Combiner::Cp : Combiner::Tt;
    m.cfg_.dims = j.at("dims").get<int>();
    m.cfg_.rank = j.at("rank").get<int>();
    m.cfg_.tt_ranks = j.at("tt_ranks").get<std::vector<int>>();
    m.cfg_.hidden = j.at("hidden").get<std::vector<int>>();
    m.cfg_.activation = activation_from_string(j.at("activation").get<std::string>());
    m.cfg_.activate_output = j.at("activate_output").get<bool>();
    m.cfg_.bias_init_std = j.at("bias_init_std").get<double>();
    m.cfg_.seed = j.at("seed").get<std::uint64_t>();
    const auto& f = j.at("feature");
    const std::string mode = f.at("mode").get<std::string>();
    m.cfg_.feature.mode = mode == "none" ? FeatureMode::None
                                         : (mode == "random" ? FeatureMode::Random : FeatureMode::Adapted);
    m.cfg_.feature.m = f.at("m").get<int>();
    m.cfg_.feature.sigma = f.at("sigma").get<std::vector<double>>();
    m.cfg_.feature.adapted = f.at("adapted").get<std::vector<std::vector<int>>>();
    m.freqs_ = j.at("freqs").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(m.freqs_.size()) != m.cfg_.dims)
        throw std::invalid_argument("model checkpoint: frequency table size mismatch");
    m.build_layout();
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != m.params_.size())
        throw std::invalid_argument("model checkpoint: parameter count mismatch");
    m.params_ = std::move(p);
    return m;
}

void TnnModel::save(const std::string& path) const { write_file_atomic(path, to_json().dump()); }

TnnModel TnnModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

}  // namespace tnn
