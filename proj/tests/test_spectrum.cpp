#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "tnn/spectrum.hpp"

using namespace tnn;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// O(N^2) reference transform with the same normalization.
std::vector<std::complex<double>> naive_dft(std::span<const double> f) {
    const std::size_t n = f.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            acc += f[j] * std::exp(std::complex<double>(0.0, -kTau * k * j / n));
        out[k] = acc / static_cast<double>(n);
    }
    return out;
}

std::vector<double> tone(int n, int k, double amp) {
    std::vector<double> f(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        f[static_cast<std::size_t>(i)] = amp * std::sin(kTau * k * i / static_cast<double>(n));
    return f;
}

}  // namespace

TEST_CASE("constant signal concentrates in the DC bin") {
    std::vector<double> f(32, 1.0);
    const Spectrum1D s = dft_uniform(f);
    CHECK(s.magnitude[0] == doctest::Approx(1.0));
    for (std::size_t k = 1; k < s.magnitude.size(); ++k) CHECK(s.magnitude[k] < 1e-12);
}

TEST_CASE("unit tone lands half its amplitude in its bin") {
    const Spectrum1D s = dft_uniform(tone(16, 3, 1.0));
    CHECK(s.magnitude[3] == doctest::Approx(0.5).epsilon(1e-12));
    for (std::size_t k = 0; k < s.magnitude.size(); ++k)
        if (k != 3) CHECK(s.magnitude[k] < 1e-12);
}

TEST_CASE("fft matches the naive transform on random input") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int n : {8, 64, 512, 4096}) {
        std::vector<double> f(static_cast<std::size_t>(n));
        for (double& x : f) x = u(rng);
        const Spectrum1D s = dft_uniform(f);
        const auto ref = naive_dft(f);
        double worst = 0.0;
        for (std::size_t k = 0; k < s.coeff.size(); ++k)
            worst = std::max(worst, std::abs(s.coeff[k] - ref[k]));
        CHECK(worst < 1e-9);
    }
    std::vector<double> bad(12, 0.0);
    CHECK_THROWS(dft_uniform(bad));  // not a power of two
}

TEST_CASE("parseval identity") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> f(256);
    for (double& x : f) x = u(rng);
    const Spectrum1D s = dft_uniform(f);
    // bins 1..n/2-1 represent a conjugate pair each
    double lhs = std::norm(s.coeff[0]) + std::norm(s.coeff.back());
    for (std::size_t k = 1; k + 1 < s.coeff.size(); ++k) lhs += 2.0 * std::norm(s.coeff[k]);
    double rhs = 0.0;
    for (double x : f) rhs += x * x;
    rhs /= static_cast<double>(f.size());
    CHECK(std::abs(lhs - rhs) / rhs < 1e-9);
}

TEST_CASE("component spectra recover planted tones") {
    // force subnet 0 of a tiny model to output cos(2 pi 7 x): adapted feature
    // {7}, channel layer reads the cos channel with weight 1
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 1;
    mc.rank = 1;
    mc.hidden = {};
    mc.feature.mode = FeatureMode::Adapted;
    mc.feature.adapted = {{7}};
    TnnModel m = TnnModel::init(mc);
    // single layer: 2 feature inputs -> 1 channel; weights (cos, sin), bias
    auto ps = m.params();
    ps[0] = 1.0;
    ps[1] = 0.0;
    ps[2] = 0.0;
    const Spectrum1D s = component_spectrum(m, 0, 0, 64);
    int peak = 0;
    for (std::size_t k = 1; k < s.magnitude.size(); ++k)
        if (s.magnitude[k] > s.magnitude[static_cast<std::size_t>(peak)])
            peak = static_cast<int>(k);
    CHECK(peak == 7);
    CHECK(s.magnitude[7] == doctest::Approx(0.5).epsilon(1e-12));

    // zero channel layer: all-zero spectrum
    ps[0] = ps[1] = ps[2] = 0.0;
    const Spectrum1D z = component_spectrum(m, 0, 0, 64);
    for (double v : z.magnitude) CHECK(v == 0.0);

    CHECK_THROWS(component_spectrum(m, 0, 3, 64));  // channel out of range
}

TEST_CASE("spectra cost accounting is channels times grid") {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 3;
    mc.rank = 5;
    mc.hidden = {4};
    mc.feature.mode = FeatureMode::None;
    mc.activation = Activation::Tanh;
    const TnnModel m = TnnModel::init(mc);
    std::size_t total = 0;
    for (int d = 0; d < 3; ++d) {
        const DimensionSpectra ds = dimension_spectra(m, d, 128);
        CHECK(ds.samples_evaluated == 5 * 128);
        CHECK(ds.per_channel.size() == 5);
        total += ds.samples_evaluated;
    }
    CHECK(total == 3 * 5 * 128);  // d * r * N component evaluations in all
}

TEST_CASE("top bins: ordering, tie-break, and DC exclusion") {
    Spectrum1D s;
    s.n = 512;
    s.magnitude.assign(257, 0.01);
    s.magnitude[0] = 9.0;  // DC must never be selected
    s.magnitude[10] = 1.0;
    s.magnitude[160] = 0.8;
    CHECK(top_m_frequencies(s, 2) == std::vector<int>{10, 160});

    Spectrum1D t;
    t.n = 32;
    t.magnitude.assign(17, 0.0);
    t.magnitude[5] = 0.7;
    t.magnitude[7] = 0.7;
    CHECK(top_m_frequencies(t, 1) == std::vector<int>{5});  // tie toward smaller k

    CHECK_THROWS(top_m_frequencies(t, 0));
}

TEST_CASE("two-tone component keeps both bins despite leakage") {
    std::vector<double> f(1024);
    for (int i = 0; i < 1024; ++i) {
        const double x = i / 1024.0;
        f[static_cast<std::size_t>(i)] = std::sin(kTau * 10 * x) + 0.1 * std::sin(kTau * 160 * x);
    }
    const Spectrum1D s = dft_uniform(f);
    CHECK(top_m_frequencies(s, 2) == std::vector<int>{10, 160});
}

TEST_CASE("top bins are invariant under positive scaling") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> f(256);
    for (double& x : f) x = u(rng);
    const Spectrum1D a = dft_uniform(f);
    for (double& x : f) x *= 37.5;
    const Spectrum1D b = dft_uniform(f);
    CHECK(top_m_frequencies(a, 6) == top_m_frequencies(b, 6));
}

TEST_CASE("plant and recover exact sets") {
    // sums of <= M integer tones, amplitude ratios >= 2, frequencies <= N/8
    std::mt19937_64 rng(31);
    const int n = 256;
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + trial % 3;
        std::vector<int> ks;
        std::uniform_int_distribution<int> pick(1, n / 8);
        while (static_cast<int>(ks.size()) < m) {
            const int k = pick(rng);
            bool dup = false;
            for (int e : ks) dup = dup || e == k;
            if (!dup) ks.push_back(k);
        }
        std::vector<double> f(static_cast<std::size_t>(n), 0.0);
        double amp = 1.0;
        for (int k : ks) {
            for (int i = 0; i < n; ++i)
                f[static_cast<std::size_t>(i)] += amp * std::sin(kTau * k * i / double(n));
            amp *= 0.5;
        }
        std::vector<int> want = ks;
        std::sort(want.begin(), want.end());
        CHECK(top_m_frequencies(dft_uniform(f), m) == want);
    }
}

TEST_CASE("per-dimension unions") {
    std::vector<double> imp(9, 0.0);
    CHECK(union_dimension_frequencies({{1, 3}, {3, 5}}, imp, 100) == std::vector<int>{1, 3, 5});
    CHECK(union_dimension_frequencies({{2}, {6}, {4}}, imp, 100) == std::vector<int>{2, 4, 6});
    CHECK_THROWS(union_dimension_frequencies({{1}}, imp, 0));

    // truncation keeps the globally strongest bins by aggregate importance
    std::vector<double> agg = {0.0, 0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.6, 0.4};
    const auto kept = union_dimension_frequencies({{1, 2, 3, 4}, {5, 6, 7, 8}}, agg, 4);
    CHECK(kept == std::vector<int>{1, 3, 5, 7});
}

TEST_CASE("averaged amplitudes") {
    Spectrum1D s;
    s.n = 8;
    s.magnitude = {1.0, 0.5, 0.25, 0.125, 0.0625};
    Spectrum1D z;
    z.n = 8;
    z.magnitude.assign(5, 0.0);
    const Spectrum1D same = average_amplitude({s, s, s});
    for (std::size_t k = 0; k < s.magnitude.size(); ++k)
        CHECK(same.magnitude[k] == s.magnitude[k]);  // r identical -> any single one
    const Spectrum1D half = average_amplitude({s, z});
    for (std::size_t k = 0; k < s.magnitude.size(); ++k)
        CHECK(half.magnitude[k] == doctest::Approx(0.5 * s.magnitude[k]));

    // against explicit recomputation on a random model
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 2;
    mc.rank = 3;
    mc.hidden = {5};
    mc.feature.mode = FeatureMode::None;
    mc.activation = Activation::Tanh;
    mc.bias_init_std = 0.2;
    mc.seed = 4;
    const TnnModel m = TnnModel::init(mc);
    const DimensionSpectra ds = dimension_spectra(m, 1, 64);
    for (std::size_t k = 0; k < ds.average.magnitude.size(); ++k) {
        double acc = 0.0;
        for (const auto& ch : ds.per_channel) acc += ch.magnitude[k];
        CHECK(ds.average.magnitude[k] == doctest::Approx(acc / 3.0).epsilon(1e-14));
    }
}

TEST_CASE("frequency set equality") {
    FrequencySets a{0, {{1, 3}, {2}}};
    FrequencySets b{1, {{1, 3}, {2}}};
    CHECK(freqsets_equal(a, b));  // iteration tag is not part of the identity
    FrequencySets c{0, {{1, 3}, {2, 4}}};
    CHECK_FALSE(freqsets_equal(a, c));
    FrequencySets d{0, {{1, 3}}};
    CHECK_THROWS(freqsets_equal(a, d));

    // order-normalized construction: unions of permuted inputs agree
    std::vector<double> imp(8, 0.0);
    const auto u1 = union_dimension_frequencies({{5, 1}, {3}}, imp, 10);
    const auto u2 = union_dimension_frequencies({{3}, {1, 5}}, imp, 10);
    CHECK(u1 == u2);
}

TEST_CASE("frequency sets round-trip through json") {
    FrequencySets a{2, {{1, 5, 9}, {2}, {4, 7}}};
    const FrequencySets b = freqsets_from_json(freqsets_to_json(a));
    CHECK(b.iteration == 2);
    CHECK(freqsets_equal(a, b));
}

TEST_CASE("product containment: single factor per dimension") {
    BandFactor f1{{3}, {1.0}, {true}};
    BandFactor f2{{5}, {0.5}, {false}};
    const ContainmentReport rep = product_frequency_containment({{f1, f2}}, 64, 1e-9);
    CHECK(rep.contained);
    CHECK(rep.observed[0] == std::vector<int>{3});
    CHECK(rep.observed[1] == std::vector<int>{5});
}

TEST_CASE("product containment: the rank-2 two-scale function") {
    // u = sin(2pi x1) sin(2pi x2) + sin(2pi 10 x1) sin(2pi 10 x2)
    //     + 0.1 sin(2pi 10 x1) sin(2pi x2)
    BandFactor lo{{1}, {1.0}, {true}};
    BandFactor hi{{10}, {1.0}, {true}};
    BandFactor hi_small{{10}, {0.1}, {true}};
    const ContainmentReport rep =
        product_frequency_containment({{lo, lo}, {hi, hi}, {hi_small, lo}}, 64, 1e-9);
    CHECK(rep.contained);
    for (int d = 0; d < 2; ++d) {
        bool has1 = false, has10 = false;
        for (int k : rep.observed[static_cast<std::size_t>(d)]) {
            has1 = has1 || k == 1;
            has10 = has10 || k == 10;
        }
        CHECK(has1);
        CHECK(has10);  // the cross terms put (1,10) and (10,1) into the product
    }
}

TEST_CASE("product containment: random integer supports, d=3 r=3") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> pick(1, 6);
    std::uniform_real_distribution<double> amp(0.3, 1.0);
    std::vector<std::vector<BandFactor>> factors;
    for (int alpha = 0; alpha < 3; ++alpha) {
        std::vector<BandFactor> row;
        for (int d = 0; d < 3; ++d) {
            BandFactor f;
            f.freqs = {pick(rng)};
            f.amps = {amp(rng)};
            f.use_sin = {alpha % 2 == 0};
            row.push_back(f);
        }
        factors.push_back(row);
    }
    CHECK(product_frequency_containment(factors, 32, 1e-9).contained);
}
