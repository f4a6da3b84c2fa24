#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "tnn/fprinciple.hpp"

using namespace tnn;
using cd = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTau = 2.0 * std::numbers::pi;

ShallowTnnParams random_params(std::size_t r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    ShallowTnnParams p;
    for (std::size_t j = 0; j < r; ++j) {
        p.a.push_back(u(rng));
        double w;
        do { w = u(rng); } while (std::abs(w) < 0.5);
        p.wx.push_back(w);
        do { w = u(rng); } while (std::abs(w) < 0.5);
        p.wy.push_back(w);
        p.bx.push_back(u(rng));
        p.by.push_back(u(rng));
    }
    return p;
}

double spectral_loss(const ShallowTnnParams& p, cd target, double kx, double ky) {
    const SpectralError e = spectral_error(p, target, kx, ky);
    return e.modulus * e.modulus;
}

double central_diff(std::vector<double>& slot, std::size_t j, double h,
                    const std::function<double()>& f) {
    const double keep = slot[j];
    slot[j] = keep + h;
    const double hi = f();
    slot[j] = keep - h;
    const double lo = f();
    slot[j] = keep;
    return (hi - lo) / (2.0 * h);
}

}  // namespace

TEST_CASE("overflow-safe hyperbolic helpers") {
    for (double z : {1e-3, 0.1, 1.0, 5.0, 20.0}) {
        CHECK(log_sinh(z) == doctest::Approx(std::log(std::sinh(z))).epsilon(1e-12));
        CHECK(coth_positive(z) == doctest::Approx(1.0 / std::tanh(z)).epsilon(1e-12));
    }
    CHECK(log_sinh(800.0) == doctest::Approx(800.0 - std::log(2.0)).epsilon(1e-14));
    CHECK(coth_positive(800.0) == 1.0);
}

TEST_CASE("transform vanishes with the amplitudes") {
    ShallowTnnParams p = random_params(3, 2);
    p.a = {0.0, 0.0, 0.0};
    CHECK(spectral_transform(p, 1.3, -0.8) == cd(0.0, 0.0));
}

TEST_CASE("transform of a real signal is conjugate-symmetric") {
    const ShallowTnnParams p = random_params(4, 3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> k(0.4, 3.0);
    for (int trial = 0; trial < 25; ++trial) {
        const double kx = k(rng), ky = k(rng);
        const cd plus = spectral_transform(p, kx, ky);
        const cd minus = spectral_transform(p, -kx, -ky);
        CHECK(std::abs(minus - std::conj(plus)) < 1e-12 * (1.0 + std::abs(plus)));
        CHECK(std::abs(std::abs(minus) - std::abs(plus)) < 1e-12 * (1.0 + std::abs(plus)));
    }
}

TEST_CASE("log-space evaluation agrees with the textbook formula") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.5, 2.5);
    std::uniform_real_distribution<double> b(-2.0, 2.0);
    for (int trial = 0; trial < 30; ++trial) {
        const double a = b(rng), wx = u(rng), wy = u(rng), bx = b(rng), by = b(rng);
        const double kx = u(rng), ky = u(rng);
        const cd naive = -kPi * kPi * a *
                         std::exp(cd(0.0, kx * bx / wx + ky * by / wy)) /
                         (wx * std::sinh(kPi * kx / (2.0 * wx)) * wy *
                          std::sinh(kPi * ky / (2.0 * wy)));
        const cd got = unit_spectral_transform(a, wx, wy, bx, by, kx, ky);
        CHECK(std::abs(got - naive) < 1e-12 * std::abs(naive));
    }
    // tiny weights push sinh beyond double range; the unit's limit is 0
    CHECK(unit_spectral_transform(1.0, 0.002, 1.0, 0.3, 0.3, 2.0, 1.0) == cd(0.0, 0.0));
}

TEST_CASE("transform rejects degenerate input") {
    ShallowTnnParams p = random_params(2, 9);
    CHECK_THROWS(static_cast<void>(spectral_transform(p, 0.0, 1.0)));
    CHECK_THROWS(static_cast<void>(spectral_transform(p, 1.0, 0.0)));
    p.wx[1] = 0.0;
    CHECK_THROWS(static_cast<void>(spectral_transform(p, 1.0, 1.0)));
    ShallowTnnParams ragged = random_params(2, 11);
    ragged.by.pop_back();
    CHECK_THROWS(ragged.validate());
}

TEST_CASE("polar decomposition reproduces the error value") {
    const ShallowTnnParams p = random_params(3, 13);
    const cd target(0.4, -1.1);
    const SpectralError e = spectral_error(p, target, 1.2, 0.9);
    CHECK(e.units.size() == 3);
    const cd rebuilt = e.modulus * std::exp(cd(0.0, e.phase));
    CHECK(std::abs(rebuilt - e.value) < 1e-12 * (1.0 + e.modulus));
    cd sum = -target;
    for (cd u : e.units) sum += u;
    CHECK(std::abs(sum - e.value) < 1e-12 * (1.0 + e.modulus));
}

TEST_CASE("gradients vanish when the spectral error does") {
    const ShallowTnnParams p = random_params(2, 17);
    const cd target = spectral_transform(p, 1.1, 0.8);  // D = 0 by construction
    const SpectralGradients g = spectral_loss_gradients(p, target, 1.1, 0.8);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(g.a[j] == 0.0);
        CHECK(g.wx[j] == 0.0);
        CHECK(g.wy[j] == 0.0);
        CHECK(g.bx[j] == 0.0);
        CHECK(g.by[j] == 0.0);
    }
}

TEST_CASE("amplitude gradient dies at the orthogonal phase") {
    ShallowTnnParams p;
    p.a = {0.8};
    p.wx = {1.1};
    p.wy = {0.9};
    p.bx = {0.4};
    p.by = {-0.3};
    const cd unit = spectral_transform(p, 1.0, 1.0);
    const cd target = unit - cd(0.0, 1.0) * unit;  // D = i * unit: 90 degrees off
    const SpectralGradients g = spectral_loss_gradients(p, target, 1.0, 1.0);
    CHECK(std::abs(g.a[0]) < 1e-12 * (1.0 + std::norm(unit)));
    CHECK(std::abs(g.bx[0]) > 1e-6);  // the quarter-turn family stays alive
}

TEST_CASE("closed-form gradients match finite differences") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> k(0.5, 2.0);
    std::uniform_real_distribution<double> t(-2.0, 2.0);
    double worst = 0.0;
    for (int trial = 0; trial < 12; ++trial) {
        ShallowTnnParams p = random_params(1 + trial % 3, 100 + static_cast<std::uint64_t>(trial));
        const double kx = k(rng), ky = k(rng);
        const cd target(t(rng), t(rng));
        const SpectralGradients g = spectral_loss_gradients(p, target, kx, ky);
        auto loss = [&] { return spectral_loss(p, target, kx, ky); };
        for (std::size_t j = 0; j < p.rank(); ++j) {
            std::vector<double>* slots[5] = {&p.a, &p.wx, &p.wy, &p.bx, &p.by};
            const double got[5] = {g.a[j], g.wx[j], g.wy[j], g.bx[j], g.by[j]};
            for (int l = 0; l < 5; ++l) {
                const double ref = central_diff(*slots[l], j, 1e-5, loss);
                worst = std::max(worst, std::abs(got[l] - ref) / std::max(1.0, std::abs(ref)));
            }
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("bias gradient carries the squared amplitude factor") {
    ShallowTnnParams p;
    p.a = {0.6};
    p.wx = {1.4};
    p.wy = {-1.1};
    p.bx = {0.7};
    p.by = {0.2};
    const cd target(0.0, 0.0);  // L = |F[Upsilon]|^2 scales as a^2
    const SpectralGradients g1 = spectral_loss_gradients(p, target, 1.3, 0.7);
    p.a[0] *= 3.0;
    const SpectralGradients g9 = spectral_loss_gradients(p, target, 1.3, 0.7);
    CHECK(g9.bx[0] == doctest::Approx(9.0 * g1.bx[0]).epsilon(1e-12));
    CHECK(g9.by[0] == doctest::Approx(9.0 * g1.by[0]).epsilon(1e-12));
    CHECK(g9.a[0] == doctest::Approx(3.0 * g1.a[0]).epsilon(1e-12));
}

TEST_CASE("log gradient magnitudes agree with the direct values") {
    const ShallowTnnParams p = random_params(2, 23);
    const cd target(0.3, 0.9);
    const SpectralGradients g = spectral_loss_gradients(p, target, 1.2, 1.5);
    for (std::size_t j = 0; j < 2; ++j) {
        const auto lg = log_gradient_magnitudes(p, j, target, 1.2, 1.5);
        const double direct[5] = {g.a[j], g.wx[j], g.wy[j], g.bx[j], g.by[j]};
        for (int l = 0; l < 5; ++l)
            CHECK(lg[static_cast<std::size_t>(l)] ==
                  doctest::Approx(std::log(std::abs(direct[l]))).epsilon(1e-9));
    }
}

TEST_CASE("small-weight dominance estimate") {
    Theorem1Config cfg;
    const double coarse = theorem1_measure_estimate(cfg, 0.2, 4000, 7);
    const double fine = theorem1_measure_estimate(cfg, 0.01, 4000, 7);
    CHECK(coarse >= 0.0);
    CHECK(coarse <= 1.0);
    CHECK(fine >= coarse);
    CHECK(theorem1_measure_estimate(cfg, 0.05, 4000, 7) ==
          theorem1_measure_estimate(cfg, 0.05, 4000, 7));

    Theorem1Config bad = cfg;
    bad.k2x = 0.5;  // violates k2 > k1
    CHECK_THROWS(static_cast<void>(theorem1_measure_estimate(bad, 0.1, 10, 7)));
    bad = cfg;
    bad.target1 = 0.0;  // |D(k1)| no longer bounded below
    CHECK_THROWS(static_cast<void>(theorem1_measure_estimate(bad, 0.1, 10, 7)));
    CHECK_THROWS(static_cast<void>(theorem1_measure_estimate(cfg, 0.0, 10, 7)));
}

TEST_CASE("axis target spectrum peaks at the planted wavenumbers") {
    const int n = 256;
    std::vector<double> f(n);
    for (int t = 0; t < n; ++t) {
        double s = 0.0;
        for (int k : {2, 4, 6}) s += std::sin(k * kTau * t / n);
        f[static_cast<std::size_t>(t)] = s;
    }
    const Spectrum1D s = dft_uniform(f);
    CHECK(top_m_frequencies(s, 3) == std::vector<int>{2, 4, 6});
    for (int k : {2, 4, 6})
        CHECK(s.magnitude[static_cast<std::size_t>(k)] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("axis spectrum equals its direct recomputation") {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 2;
    mc.rank = 3;
    mc.hidden = {4};
    mc.activation = Activation::Tanh;
    mc.feature.mode = FeatureMode::None;
    mc.bias_init_std = 0.4;
    mc.seed = 29;
    const TnnModel m = TnnModel::init(mc);
    const int n = 64;
    const Spectrum1D got = axis_spectrum(m, 0, n, kTau);

    std::vector<double> ch(3), mean(3, 0.0), samples(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        m.eval_channels_value(1, kTau * t / n, ch);
        for (int al = 0; al < 3; ++al) mean[static_cast<std::size_t>(al)] += ch[static_cast<std::size_t>(al)];
    }
    for (double& v : mean) v /= n;
    const auto w = m.cp_weights();
    for (int t = 0; t < n; ++t) {
        m.eval_channels_value(0, kTau * t / n, ch);
        double s = 0.0;
        for (int al = 0; al < 3; ++al)
            s += w[static_cast<std::size_t>(al)] * ch[static_cast<std::size_t>(al)] * mean[static_cast<std::size_t>(al)];
        samples[static_cast<std::size_t>(t)] = s;
    }
    const Spectrum1D ref = dft_uniform(samples);
    for (std::size_t k = 0; k < got.magnitude.size(); ++k)
        CHECK(got.magnitude[k] == doctest::Approx(ref.magnitude[k]).epsilon(1e-12));

    CHECK_THROWS(static_cast<void>(axis_spectrum(m, 2, n, kTau)));
}

TEST_CASE("axis spectrum is invariant under channel relabeling") {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 2;
    mc.rank = 3;
    mc.hidden = {};
    mc.feature.mode = FeatureMode::Adapted;
    mc.feature.adapted = {{1, 2}, {1, 3}};
    mc.seed = 31;
    TnnModel m = TnnModel::init(mc);
    const Spectrum1D before = axis_spectrum(m, 0, 64, kTau);

    auto ps = m.params();
    for (int dim = 0; dim < 2; ++dim) {
        const LayerLayout& L = m.subnet(dim).layers.back();
        const std::size_t row = static_cast<std::size_t>(L.in) + 1;
        for (std::size_t k = 0; k < row; ++k)
            std::swap(ps[L.offset + k], ps[L.offset + row + k]);  // rows 0 and 1
    }
    std::swap(ps[m.cp_weight_offset()], ps[m.cp_weight_offset() + 1]);
    const Spectrum1D after = axis_spectrum(m, 0, 64, kTau);
    for (std::size_t k = 0; k < before.magnitude.size(); ++k)
        CHECK(after.magnitude[k] ==
              doctest::Approx(before.magnitude[k]).epsilon(1e-12));
}

TEST_CASE("toy fit bookkeeping on a miniature run") {
    ToyFitConfig cfg;
    cfg.rank = 32;
    cfg.epochs = 25;
    cfg.batch = 64;
    cfg.record_every = 10;
    cfg.dft_n = 64;
    cfg.ks = {1, 2};
    cfg.seed = 3;
    const ToyFitResult r = toy_fit(cfg);
    REQUIRE(r.snapshots.size() == 4);  // epochs 0, 10, 20 and the final state
    CHECK(r.snapshots.front().epoch == 0);
    CHECK(r.snapshots.back().epoch == 25);
    for (const ToySnapshot& s : r.snapshots) {
        CHECK(s.delta_x.size() == 2);
        CHECK(s.delta_y.size() == 2);
        CHECK(std::isfinite(s.mse));
    }
    for (double d : r.snapshots.front().delta_x) CHECK(std::abs(d - 1.0) < 0.5);
    for (double d : r.snapshots.front().delta_y) CHECK(std::abs(d - 1.0) < 0.5);

    // first_below_* mirrors the snapshot table exactly
    for (int axis = 0; axis < 2; ++axis) {
        const auto& fb = axis == 0 ? r.first_below_x : r.first_below_y;
        REQUIRE(fb.size() == 2);
        for (std::size_t q = 0; q < 2; ++q) {
            std::int64_t want = -1;
            for (const ToySnapshot& s : r.snapshots) {
                const double d = axis == 0 ? s.delta_x[q] : s.delta_y[q];
                if (d < r.threshold) {
                    want = s.epoch;
                    break;
                }
            }
            CHECK(fb[q] == want);
        }
    }
    CHECK(r.model.has_value());
    CHECK(r.model->dims() == 2);

    const ToyFitResult again = toy_fit(cfg);
    REQUIRE(again.snapshots.size() == r.snapshots.size());
    for (std::size_t i = 0; i < r.snapshots.size(); ++i) {
        CHECK(again.snapshots[i].mse == r.snapshots[i].mse);
        CHECK(again.snapshots[i].delta_x == r.snapshots[i].delta_x);
    }

    ToyFitConfig bad = cfg;
    bad.ks = {40};  // beyond the Nyquist bin of dft_n = 64
    CHECK_THROWS(static_cast<void>(toy_fit(bad)));
}
