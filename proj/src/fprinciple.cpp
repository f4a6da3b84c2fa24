#include "tnn/fprinciple.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tnn/rng.hpp"
#include "tnn/tape.hpp"

namespace tnn {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTau = 2.0 * std::numbers::pi;
}

double log_sinh(double z) {
    if (!(z > 0.0)) throw std::invalid_argument("log_sinh: needs z > 0");
    return z + std::log1p(-std::exp(-2.0 * z)) - std::log(2.0);
}

double coth_positive(double z) {
    if (!(z > 0.0)) throw std::invalid_argument("coth_positive: needs z > 0");
    return 1.0 + 2.0 / std::expm1(2.0 * z);
}

void ShallowTnnParams::validate() const {
    const std::size_t r = a.size();
    if (wx.size() != r || wy.size() != r || bx.size() != r || by.size() != r)
        throw std::invalid_argument("ShallowTnnParams: ragged parameter lists");
    for (std::size_t j = 0; j < r; ++j) {
        if (!std::isfinite(a[j]) || !std::isfinite(wx[j]) || !std::isfinite(wy[j]) ||
            !std::isfinite(bx[j]) || !std::isfinite(by[j]))
            throw std::invalid_argument("ShallowTnnParams: non-finite parameter");
        if (wx[j] == 0.0 || wy[j] == 0.0)
            throw std::invalid_argument("ShallowTnnParams: zero weight");
    }
}

std::complex<double> unit_spectral_transform(double a, double wx, double wy, double bx,
                                             double by, double kx, double ky) {
    if (kx == 0.0 || ky == 0.0)
        throw std::invalid_argument("unit_spectral_transform: zero frequency");
    if (wx == 0.0 || wy == 0.0)
        throw std::invalid_argument("unit_spectral_transform: zero weight");
    const double phase = kx * bx / wx + ky * by / wy;
    // Per factor the transform is odd in w: |w| outside, signed w inside sinh.
    const double dx = std::abs(wx) * std::sinh(kPi * kx / (2.0 * wx));
    const double dy = std::abs(wy) * std::sinh(kPi * ky / (2.0 * wy));
    const double mag = -kPi * kPi * a / (dx * dy);  // collapses to 0 on sinh overflow
    return std::polar(1.0, phase) * mag;
}

std::complex<double> spectral_transform(const ShallowTnnParams& p, double kx, double ky) {
    p.validate();
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < p.rank(); ++j)
        acc += unit_spectral_transform(p.a[j], p.wx[j], p.wy[j], p.bx[j], p.by[j], kx, ky);
    return acc;
}

SpectralError spectral_error(const ShallowTnnParams& p, std::complex<double> target,
                             double kx, double ky) {
    p.validate();
    SpectralError e;
    e.units.reserve(p.rank());
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < p.rank(); ++j) {
        e.units.push_back(
            unit_spectral_transform(p.a[j], p.wx[j], p.wy[j], p.bx[j], p.by[j], kx, ky));
        acc += e.units.back();
    }
    e.value = acc - target;
    e.modulus = std::abs(e.value);
    e.phase = std::arg(e.value);
    return e;
}

namespace {

// d(log unit)/dw at fixed k: -ikb/w^2 - 1/w + (pi k / (2w^2)) coth(pi k / (2w)).
std::complex<double> weight_log_derivative(double w, double b, double k) {
    const double z = kPi * k / (2.0 * w);
    const double coth = (z > 0 ? 1.0 : -1.0) * coth_positive(std::abs(z));
    return {-1.0 / w + (kPi * k / (2.0 * w * w)) * coth, -k * b / (w * w)};
}

}  // namespace

SpectralGradients spectral_loss_gradients(const ShallowTnnParams& p,
                                          std::complex<double> target, double kx,
                                          double ky) {
    const SpectralError err = spectral_error(p, target, kx, ky);
    const std::complex<double> dbar = std::conj(err.value);
    const std::size_t r = p.rank();
    SpectralGradients g;
    g.a.resize(r);
    g.wx.resize(r);
    g.wy.resize(r);
    g.bx.resize(r);
    g.by.resize(r);
    for (std::size_t j = 0; j < r; ++j) {
        const std::complex<double> unit_of_a =
            unit_spectral_transform(1.0, p.wx[j], p.wy[j], p.bx[j], p.by[j], kx, ky);
        const std::complex<double> gj = p.a[j] * unit_of_a;
        g.a[j] = 2.0 * std::real(dbar * unit_of_a);
        g.wx[j] = 2.0 * std::real(dbar * gj * weight_log_derivative(p.wx[j], p.bx[j], kx));
        g.wy[j] = 2.0 * std::real(dbar * gj * weight_log_derivative(p.wy[j], p.by[j], ky));
        g.bx[j] = 2.0 * std::real(dbar * gj * std::complex<double>(0.0, kx / p.wx[j]));
        g.by[j] = 2.0 * std::real(dbar * gj * std::complex<double>(0.0, ky / p.wy[j]));
    }
    return g;
}

std::array<double, 5> log_gradient_magnitudes(const ShallowTnnParams& p, std::size_t j,
                                              std::complex<double> target, double kx,
                                              double ky) {
    const SpectralError err = spectral_error(p, target, kx, ky);
    if (j >= p.rank()) throw std::invalid_argument("log_gradient_magnitudes: unit out of range");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    if (err.modulus == 0.0) return {kNegInf, kNegInf, kNegInf, kNegInf, kNegInf};

    const double wx = p.wx[j], wy = p.wy[j], bx = p.bx[j], by = p.by[j], a = p.a[j];
    // Unit transform (a = 1) in log space; |w sinh(pi k/(2w))| = |w| sinh(pi|k|/(2|w|)).
    const double log_gunit =
        2.0 * std::log(kPi) - std::log(std::abs(wx)) -
        log_sinh(kPi * std::abs(kx) / (2.0 * std::abs(wx))) - std::log(std::abs(wy)) -
        log_sinh(kPi * std::abs(ky) / (2.0 * std::abs(wy)));
    // The denominator carries sign(k/w) per factor; the numerator is -1 for unit a.
    const double den_sign = (kx / wx > 0 ? 1.0 : -1.0) * (ky / wy > 0 ? 1.0 : -1.0);
    const double phase = kx * bx / wx + ky * by / wy;
    const double arg_gunit = phase + (den_sign > 0.0 ? kPi : 0.0);
    const double log_a = a == 0.0 ? kNegInf : std::log(std::abs(a));
    const double arg_a = a < 0.0 ? kPi : 0.0;

    const std::complex<double> z[4] = {
        weight_log_derivative(wx, bx, kx),
        weight_log_derivative(wy, by, ky),
        {0.0, kx / wx},
        {0.0, ky / wy},
    };
    // dL/dp = 2 Re(conj(D) G Z); logs throughout, phase alignment kept explicit.
    const auto assemble = [&](double log_g, double arg_g, double log_z, double arg_z) {
        const double c = std::abs(std::cos(-err.phase + arg_g + arg_z));
        return std::log(2.0) + std::log(err.modulus) + log_g + log_z +
               (c == 0.0 ? kNegInf : std::log(c));
    };
    std::array<double, 5> out{};
    out[0] = assemble(log_gunit, arg_gunit, 0.0, 0.0);  // dG/da is the unit transform
    for (int l = 0; l < 4; ++l)
        out[static_cast<std::size_t>(l) + 1] =
            assemble(log_gunit + log_a, arg_gunit + arg_a,
                     std::log(std::abs(z[l])), std::arg(z[l]));
    return out;
}

double theorem1_measure_estimate(const Theorem1Config& cfg, double delta, std::size_t n,
                                 std::uint64_t seed) {
    if (!(cfg.k1x > 0.0) || !(cfg.k1y > 0.0) || !(cfg.k2x > cfg.k1x) || !(cfg.k2y > cfg.k1y))
        throw std::invalid_argument("theorem1: needs k2 > k1 > 0 component-wise");
    if (cfg.bx == 0.0 || cfg.by == 0.0 || cfg.a == 0.0)
        throw std::invalid_argument("theorem1: a, bx, by must be nonzero");
    if (std::abs(cfg.target1) < 1e-12)
        throw std::invalid_argument(
            "theorem1: |F[f](k1)| must be bounded away from 0 so |D(k1)| stays bounded below");
    if (!std::isfinite(std::abs(cfg.target1)) || !std::isfinite(std::abs(cfg.target2)))
        throw std::invalid_argument("theorem1: target spectrum must be finite");
    if (!(delta > 0.0) || n == 0)
        throw std::invalid_argument("theorem1: needs delta > 0 and n >= 1");

    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ShallowTnnParams p;
    p.a = {cfg.a};
    p.bx = {cfg.bx};
    p.by = {cfg.by};
    p.wx = {1.0};
    p.wy = {1.0};
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        p.wx[0] = delta * (1.0 - u01(eng));  // (0, delta]
        p.wy[0] = delta * (1.0 - u01(eng));
        const auto g1 = log_gradient_magnitudes(p, 0, cfg.target1, cfg.k1x, cfg.k1y);
        const auto g2 = log_gradient_magnitudes(p, 0, cfg.target2, cfg.k2x, cfg.k2y);
        bool all = true;
        for (int l = 0; l < 5; ++l)
            if (!(g1[static_cast<std::size_t>(l)] >= g2[static_cast<std::size_t>(l)])) {
                all = false;
                break;
            }
        hits += all ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

Spectrum1D axis_spectrum(const TnnModel& model, int axis, int n, double domain) {
    if (model.combiner() != Combiner::Cp)
        throw std::invalid_argument("axis_spectrum: CP models only");
    if (axis < 0 || axis >= model.dims())
        throw std::invalid_argument("axis_spectrum: axis out of range");
    const int r = model.channels(axis);
    const auto w = model.cp_weights();
    // Channel means of every other dimension over the same grid.
    std::vector<double> reduced(static_cast<std::size_t>(r), 1.0);
    std::vector<double> ch(static_cast<std::size_t>(r));
    for (int i = 0; i < model.dims(); ++i) {
        if (i == axis) continue;
        std::vector<double> mean(static_cast<std::size_t>(r), 0.0);
        for (int t = 0; t < n; ++t) {
            model.eval_channels_value(i, domain * t / n, ch);
            for (int al = 0; al < r; ++al)
                mean[static_cast<std::size_t>(al)] += ch[static_cast<std::size_t>(al)];
        }
        for (int al = 0; al < r; ++al)
            reduced[static_cast<std::size_t>(al)] *= mean[static_cast<std::size_t>(al)] / n;
    }
    std::vector<double> samples(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        model.eval_channels_value(axis, domain * t / n, ch);
        double s = 0.0;
        for (int al = 0; al < r; ++al)
            s += w[static_cast<std::size_t>(al)] * ch[static_cast<std::size_t>(al)] *
                 reduced[static_cast<std::size_t>(al)];
        samples[static_cast<std::size_t>(t)] = s;
    }
    return dft_uniform(samples);
}

ToyFitResult toy_fit(const ToyFitConfig& cfg) {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 2;
    mc.rank = cfg.rank;
    mc.hidden = {};
    mc.activation = Activation::Tanh;
    mc.activate_output = true;
    mc.bias_init_std = cfg.bias_init_std;
    mc.feature.mode = FeatureMode::None;
    mc.seed = cfg.seed;
    TnnModel model = TnnModel::init(mc);
    {
        auto params = model.params();
        for (int i = 0; i < 2; ++i) {
            const LayerLayout& L = model.subnet(i).layers.front();
            for (int row = 0; row < L.out; ++row)
                for (int k = 0; k <= L.in; ++k)
                    params[L.offset + static_cast<std::size_t>(row) * (L.in + 1) +
                           static_cast<std::size_t>(k)] *= cfg.init_scale;
        }
        // Start the outer weights at 1/rank instead of 1 so the initial
        // network is small and every frequency error begins near 1.
        for (int al = 0; al < mc.rank; ++al)
            params[model.cp_weight_offset() + static_cast<std::size_t>(al)] =
                1.0 / mc.rank;
    }

    ToyFitResult out;
    out.ks = cfg.ks;
    out.threshold = cfg.threshold;

    // Axis-restricted target (its mean over the other variable is zero), on
    // the same grid and with the same pipeline as the network spectra.
    std::vector<double> ft(static_cast<std::size_t>(cfg.dft_n));
    for (int t = 0; t < cfg.dft_n; ++t) {
        double s = 0.0;
        for (int k : cfg.ks) s += std::sin(k * kTau * t / cfg.dft_n);
        ft[static_cast<std::size_t>(t)] = s;
    }
    const Spectrum1D fhat = dft_uniform(ft);
    for (int k : cfg.ks)
        if (k < 1 || k > cfg.dft_n / 2 || fhat.magnitude[static_cast<std::size_t>(k)] == 0.0)
            throw std::invalid_argument("toy_fit: target frequency outside spectrum range");

    const auto target_xy = [&](double x, double y) {
        double s = 0.0;
        for (int k : cfg.ks) s += std::sin(k * x) + std::sin(k * y);
        return s;
    };

    AdamState adam;
    adam.reset(model.param_count());
    GradientBuffer grad;
    Tape tape(model.params());

    const auto epoch_loss = [&](std::int64_t e, bool with_grad) {
        auto eng = make_engine(derive_seed(cfg.seed, seed_stream::kInterior,
                                           static_cast<std::uint64_t>(e)));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (with_grad) grad.assign(model.param_count(), 0.0);
        const double inv = 1.0 / static_cast<double>(cfg.batch);
        double mse = 0.0;
        for (std::size_t i = 0; i < cfg.batch; ++i) {
            const double p[2] = {kTau * u01(eng), kTau * u01(eng)};
            tape.reset(model.params());
            const TapeEval te = model.forward_tape(tape, {p, 2}, false);
            const NodeId rn = tape.shift(te.u, -target_xy(p[0], p[1]));
            const double rv = tape.val(rn).v;
            mse += rv * rv * inv;
            if (with_grad) tape.reverse(rn, 2.0 * rv * inv, grad);
        }
        return mse;
    };

    const auto snapshot = [&](std::int64_t epoch, double mse) {
        ToySnapshot s;
        s.epoch = epoch;
        s.mse = mse;
        for (int axis = 0; axis < 2; ++axis) {
            const Spectrum1D uhat = axis_spectrum(model, axis, cfg.dft_n, kTau);
            auto& dst = axis == 0 ? s.delta_x : s.delta_y;
            dst.reserve(cfg.ks.size());
            for (int k : cfg.ks) {
                const auto kk = static_cast<std::size_t>(k);
                dst.push_back(std::abs(uhat.coeff[kk] - fhat.coeff[kk]) / fhat.magnitude[kk]);
            }
        }
        out.snapshots.push_back(std::move(s));
    };

    for (std::int64_t e = 0; e < cfg.epochs; ++e) {
        const double mse = epoch_loss(e, true);
        if (!std::isfinite(mse)) {
            snapshot(e, mse);
            break;
        }
        if (cfg.record_every > 0 && e % cfg.record_every == 0) snapshot(e, mse);
        adam.update(model.params(), grad, cfg.sched.at(adam.step));
    }
    snapshot(cfg.epochs, epoch_loss(cfg.epochs, false));

    out.first_below_x.assign(cfg.ks.size(), -1);
    out.first_below_y.assign(cfg.ks.size(), -1);
    for (const ToySnapshot& s : out.snapshots)
        for (std::size_t q = 0; q < cfg.ks.size(); ++q) {
            if (out.first_below_x[q] < 0 && s.delta_x[q] < cfg.threshold)
                out.first_below_x[q] = s.epoch;
            if (out.first_below_y[q] < 0 && s.delta_y[q] < cfg.threshold)
                out.first_below_y[q] = s.epoch;
        }
    out.model = std::move(model);
    return out;
}

}  // namespace tnn
