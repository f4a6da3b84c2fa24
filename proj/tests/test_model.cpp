#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "tnn/model.hpp"

using namespace tnn;

namespace {

ModelConfig small_cp() {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 3;
    mc.rank = 4;
    mc.hidden = {6, 5};
    mc.activation = Activation::Tanh;
    mc.bias_init_std = 0.3;
    mc.feature.mode = FeatureMode::None;
    mc.seed = 42;
    return mc;
}

}  // namespace

TEST_CASE("same seed twice gives bit-identical models") {
    const TnnModel a = TnnModel::init(small_cp());
    const TnnModel b = TnnModel::init(small_cp());
    REQUIRE(a.param_count() == b.param_count());
    for (std::size_t i = 0; i < a.param_count(); ++i) CHECK(a.params()[i] == b.params()[i]);
    for (int d = 0; d < 3; ++d) {
        REQUIRE(a.feature_freqs(d).size() == b.feature_freqs(d).size());
        for (std::size_t j = 0; j < a.feature_freqs(d).size(); ++j)
            CHECK(a.feature_freqs(d)[j] == b.feature_freqs(d)[j]);
    }
}

TEST_CASE("parameter count matches the hand-counted layout") {
    // d sub-networks, each: input 1 -> hidden widths -> channel layer, with
    // out*(in+1) parameters per affine layer, plus the CP output weights.
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 6;
    mc.rank = 100;
    mc.hidden = {100, 100, 100};
    mc.activation = Activation::Tanh;
    mc.feature.mode = FeatureMode::None;
    const TnnModel m = TnnModel::init(mc);
    const std::size_t per_subnet = 100 * (1 + 1)       // input -> first hidden
                                   + 100 * (100 + 1)   // hidden -> hidden
                                   + 100 * (100 + 1)   // hidden -> hidden
                                   + 100 * (100 + 1);  // hidden -> channels
    CHECK(m.param_count() == 6 * per_subnet + 100);

    // with a random feature layer the input width becomes 2m = 100
    mc.feature.mode = FeatureMode::Random;
    mc.feature.m = 50;
    mc.feature.sigma = {10.0};
    const TnnModel f = TnnModel::init(mc);
    const std::size_t per_ff = 100 * (100 + 1) * 4;
    CHECK(f.param_count() == 6 * per_ff + 100);
    for (int d = 0; d < 6; ++d) CHECK(f.feature_freqs(d).size() == 50);  // m draws per dim
}

TEST_CASE("random feature draws follow the configured spread") {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 2;
    mc.rank = 2;
    mc.hidden = {4};
    mc.feature.mode = FeatureMode::Random;
    mc.feature.m = 4000;
    mc.feature.sigma = {10.0};
    mc.seed = 9;
    const TnnModel m = TnnModel::init(mc);
    double ss = 0.0;
    for (double b : m.feature_freqs(0)) ss += b * b;
    const double sd = std::sqrt(ss / 4000.0);
    CHECK(sd == doctest::Approx(10.0).epsilon(0.05));  // sample sd of N(0, 10^2)
}

TEST_CASE("feature channels at x = 0 and x = 0.25") {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 1;
    mc.rank = 1;
    mc.hidden = {2};
    mc.activation = Activation::Tanh;
    mc.feature.mode = FeatureMode::Adapted;
    mc.feature.adapted = {{1, 3}};
    const TnnModel m = TnnModel::init(mc);
    // cos(2 pi b x) jets then sin(2 pi b x) jets; probe through the tape graph
    std::vector<double> params(m.params().begin(), m.params().end());
    Tape tape(m.params());
    std::vector<double> p0 = {0.0};
    m.forward_tape(tape, p0, false);
    // feature nodes: input, 2 scale, then 2 cos, 2 sin activations
    CHECK(tape.val(3).v == doctest::Approx(1.0));   // cos(0)
    CHECK(tape.val(4).v == doctest::Approx(1.0));
    CHECK(tape.val(5).v == doctest::Approx(0.0));   // sin(0)
    CHECK(tape.val(6).v == doctest::Approx(0.0));

    Tape t2(m.params());
    std::vector<double> p1 = {0.25};
    m.forward_tape(t2, p1, false);
    CHECK(t2.val(3).v == doctest::Approx(0.0).epsilon(1e-12));  // cos(pi/2), b = 1
    CHECK(t2.val(5).v == doctest::Approx(1.0));                 // sin(pi/2)
}

TEST_CASE("feature second derivatives satisfy the harmonic identity") {
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 1;
    mc.rank = 1;
    mc.hidden = {2};
    mc.feature.mode = FeatureMode::Adapted;
    mc.feature.adapted = {{2, 7}};
    const TnnModel m = TnnModel::init(mc);
    Tape tape(m.params());
    std::vector<double> p = {0.37};
    m.forward_tape(tape, p, true);
    for (int j = 0; j < 2; ++j) {
        const double b = m.feature_freqs(0)[static_cast<std::size_t>(j)];
        const double w = 2.0 * std::numbers::pi * b;
        const Jet2 cosj = tape.val(3 + j);
        const Jet2 sinj = tape.val(5 + j);
        CHECK(std::abs(cosj.d2 + w * w * cosj.v) < 1e-9 * w * w);
        CHECK(std::abs(sinj.d2 + w * w * sinj.v) < 1e-9 * w * w);
    }
}

TEST_CASE("zero final layer gives all-zero jets") {
    ModelConfig mc = small_cp();
    mc.dims = 2;
    TnnModel m = TnnModel::init(mc);
    // zero the channel layer (last layer of subnet 0) and the jets vanish
    const SubnetLayout& lay = m.subnet(0);
    const LayerLayout& last = lay.layers.back();
    for (std::size_t k = 0; k < static_cast<std::size_t>(last.out) * (last.in + 1); ++k)
        m.params()[last.offset + k] = 0.0;
    std::vector<Jet2> out(static_cast<std::size_t>(lay.channels));
    m.eval_channels(0, 0.61, out);
    for (const Jet2& j : out) {
        CHECK(j.v == 0.0);
        CHECK(j.d1 == 0.0);
        CHECK(j.d2 == 0.0);
    }
}

TEST_CASE("subnet evaluation is pure") {
    const TnnModel m = TnnModel::init(small_cp());
    std::vector<Jet2> a(static_cast<std::size_t>(m.channels(1)));
    std::vector<Jet2> b(a.size());
    m.eval_channels(1, 0.41, a);
    m.eval_channels(1, 0.41, b);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].v == b[i].v);
        CHECK(a[i].d1 == b[i].d1);
        CHECK(a[i].d2 == b[i].d2);
    }
}

TEST_CASE("width-1 subnet matches a hand-computed chain") {
    // 1 -> 1 -> 1 tanh net: f(x) = w2 * tanh(w1 x + b1) + b2
    ModelConfig mc;
    mc.combiner = Combiner::Cp;
    mc.dims = 1;
    mc.rank = 1;
    mc.hidden = {1};
    mc.activation = Activation::Tanh;
    mc.feature.mode = FeatureMode::None;
    TnnModel m = TnnModel::init(mc);
    REQUIRE(m.param_count() == 5);  // (w1,b1), (w2,b2), W
    auto ps = m.params();
    ps[0] = 1.3;   // w1
    ps[1] = -0.2;  // b1
    ps[2] = 0.7;   // w2
    ps[3] = 0.05;  // b2
    const double x = 0.44;
    std::vector<Jet2> out(1);
    m.eval_channels(0, x, out);
    const double t = std::tanh(1.3 * x - 0.2);
    const double s = 1.0 - t * t;
    CHECK(out[0].v == doctest::Approx(0.7 * t + 0.05).epsilon(1e-14));
    CHECK(out[0].d1 == doctest::Approx(0.7 * s * 1.3).epsilon(1e-12));
    CHECK(out[0].d2 == doctest::Approx(0.7 * (-2.0 * t * s) * 1.3 * 1.3).epsilon(1e-12));
}

TEST_CASE("cp_combine closed forms") {
    {
        // r = 1, W = 1, factor values (2, 3, 4), derivatives 0
        std::vector<std::vector<Jet2>> ch = {{{2, 0, 0}}, {{3, 0, 0}}, {{4, 0, 0}}};
        std::vector<double> w = {1.0};
        const ModelEval e = cp_combine(ch, w);
        CHECK(e.u == 24.0);
        for (double v : e.du) CHECK(v == 0.0);
        for (double v : e.d2u) CHECK(v == 0.0);
    }
    {
        // d = 2, f1 = x (jet (x0,1,0)), f2 = 1: u = x0, du = (1, 0)
        const double x0 = 0.33;
        std::vector<std::vector<Jet2>> ch = {{{x0, 1, 0}}, {{1, 0, 0}}};
        std::vector<double> w = {1.0};
        const ModelEval e = cp_combine(ch, w);
        CHECK(e.u == doctest::Approx(x0));
        CHECK(e.du[0] == 1.0);
        CHECK(e.du[1] == 0.0);
        CHECK(e.d2u[0] == 0.0);
    }
}

TEST_CASE("tt_combine closed forms") {
    // all cores 1x1 with value 2, d = 3: u = 8
    std::vector<std::vector<Jet2>> cores = {{{2, 0, 0}}, {{2, 0, 0}}, {{2, 0, 0}}};
    std::vector<int> ranks = {1, 1, 1, 1};
    const ModelEval e = tt_combine(cores, ranks);
    CHECK(e.u == 8.0);
    for (double v : e.du) CHECK(v == 0.0);
}

TEST_CASE("model derivatives match finite differences (CP and TT, d <= 4, r <= 8)") {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        ModelConfig mc;
        mc.dims = 2 + trial % 3;
        mc.hidden = {5};
        mc.activation = trial % 2 ? Activation::TrigBlend : Activation::Tanh;
        mc.bias_init_std = 0.4;
        mc.seed = 100 + static_cast<std::uint64_t>(trial);
        // keep frequencies low: the FD oracle's truncation error grows as b^4
        if (trial % 3 == 0) {
            mc.feature.mode = FeatureMode::Adapted;
            mc.feature.adapted.assign(static_cast<std::size_t>(mc.dims), {1, 2});
        } else {
            mc.feature.mode = FeatureMode::None;
        }
        if (trial < 3) {
            mc.combiner = Combiner::Cp;
            mc.rank = 3 + trial;
        } else {
            mc.combiner = Combiner::Tt;
            mc.tt_ranks.assign(static_cast<std::size_t>(mc.dims - 1), 2 + trial % 2);
        }
        const TnnModel m = TnnModel::init(mc);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        std::vector<double> p(static_cast<std::size_t>(mc.dims));
        for (double& x : p) x = u(rng);
        const ModelEval e = m.eval(p, true);
        const double h = 1e-4;
        for (int k = 0; k < mc.dims; ++k) {
            std::vector<double> pp = p, pm = p;
            pp[static_cast<std::size_t>(k)] += h;
            pm[static_cast<std::size_t>(k)] -= h;
            const double fp = m.value(pp), fm = m.value(pm), f0 = m.value(p);
            const double fd1 = (fp - fm) / (2.0 * h);
            const double fd2 = (fp - 2.0 * f0 + fm) / (h * h);
            worst = std::max(worst,
                             std::abs(e.du[static_cast<std::size_t>(k)] - fd1) /
                                 std::max(1.0, std::abs(fd1)));
            worst = std::max(worst,
                             std::abs(e.d2u[static_cast<std::size_t>(k)] - fd2) /
                                 std::max(1.0, std::abs(fd2)));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("two-dimensional CP and TT agree when built from the same factors") {
    // same-seed CP(rank r) and TT(r1 = r): for d = 2 the contraction
    // sum_a A1[a] A2[a] is exactly the CP sum with unit weights.
    ModelConfig cp;
    cp.combiner = Combiner::Cp;
    cp.dims = 2;
    cp.rank = 4;
    cp.hidden = {6};
    cp.activation = Activation::Tanh;
    cp.bias_init_std = 0.4;
    cp.seed = 77;
    TnnModel a = TnnModel::init(cp);
    ModelConfig tt = cp;
    tt.combiner = Combiner::Tt;
    tt.tt_ranks = {4};
    TnnModel b = TnnModel::init(tt);
    REQUIRE(a.param_count() == b.param_count() + 4);  // CP carries the W vector
    // transplant the CP subnet parameters and set W to ones
    for (std::size_t i = 0; i + 4 < a.param_count(); ++i) a.params()[i] = b.params()[i];
    for (std::size_t i = a.param_count() - 4; i < a.param_count(); ++i) a.params()[i] = 1.0;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p = {u(rng), u(rng)};
        const ModelEval ea = a.eval(p, true);
        const ModelEval eb = b.eval(p, true);
        worst = std::max(worst, std::abs(ea.u - eb.u));
        for (int k = 0; k < 2; ++k) {
            worst = std::max(worst, std::abs(ea.du[static_cast<std::size_t>(k)] -
                                             eb.du[static_cast<std::size_t>(k)]));
            worst = std::max(worst, std::abs(ea.d2u[static_cast<std::size_t>(k)] -
                                             eb.d2u[static_cast<std::size_t>(k)]));
        }
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("batch evaluation equals the single-point loop") {
    const TnnModel m = TnnModel::init(small_cp());
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 9;
    std::vector<double> pts(n * 3);
    for (double& x : pts) x = u(rng);
    const std::vector<double> batch = m.eval_batch(pts, n);
    REQUIRE(batch.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> p(pts.data() + i * 3, 3);
        CHECK(batch[i] == m.value(p));
    }
    // permuted batch gives permuted results
    std::vector<double> rev(pts.rbegin(), pts.rend());
    std::vector<double> revp(n * 3);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 3; ++k) revp[i * 3 + k] = pts[(n - 1 - i) * 3 + k];
    const std::vector<double> back = m.eval_batch(revp, n);
    for (std::size_t i = 0; i < n; ++i) CHECK(back[i] == batch[n - 1 - i]);
    const std::vector<double> none;
    CHECK(m.eval_batch(none, 0).empty());
}

TEST_CASE("rebuild_with_frequencies") {
    ModelConfig base;
    base.combiner = Combiner::Cp;
    base.dims = 2;
    base.rank = 3;
    base.hidden = {5};
    base.activation = Activation::TrigBlend;
    const TnnModel m = TnnModel::rebuild_with_frequencies(base, {{1, 3}, {2}}, 11);
    CHECK(m.feature_freqs(0).size() == 2);  // widths 2|B| = 4 and 2
    CHECK(m.feature_freqs(1).size() == 1);
    CHECK(m.subnet(0).feature_width == 4);
    CHECK(m.subnet(1).feature_width == 2);

    const TnnModel n = TnnModel::rebuild_with_frequencies(base, {{1, 3}, {2}}, 11);
    for (std::size_t i = 0; i < m.param_count(); ++i) CHECK(m.params()[i] == n.params()[i]);

    CHECK_THROWS(TnnModel::rebuild_with_frequencies(base, {{1, 3}, {}}, 11));
    CHECK_THROWS(TnnModel::rebuild_with_frequencies(base, {{0, 1}, {2}}, 11));  // DC excluded
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelConfig mc = small_cp();
    mc.feature.mode = FeatureMode::Random;
    mc.feature.m = 5;
    mc.feature.sigma = {2.0};
    const TnnModel m = TnnModel::init(mc);
    const TnnModel r = TnnModel::from_json(m.to_json());
    REQUIRE(r.param_count() == m.param_count());
    for (std::size_t i = 0; i < m.param_count(); ++i) CHECK(r.params()[i] == m.params()[i]);
    for (int d = 0; d < m.dims(); ++d) {
        REQUIRE(r.feature_freqs(d).size() == m.feature_freqs(d).size());
        for (std::size_t j = 0; j < m.feature_freqs(d).size(); ++j)
            CHECK(r.feature_freqs(d)[j] == m.feature_freqs(d)[j]);
    }
    std::vector<double> p = {0.3, 0.6, 0.9};
    CHECK(r.value(p) == m.value(p));
}

TEST_CASE("invalid configurations are rejected") {
    ModelConfig mc = small_cp();
    mc.rank = 0;
    CHECK_THROWS(TnnModel::init(mc));
    ModelConfig tt = small_cp();
    tt.combiner = Combiner::Tt;
    tt.tt_ranks = {2};  // needs dims - 1 entries
    CHECK_THROWS(TnnModel::init(tt));
}
