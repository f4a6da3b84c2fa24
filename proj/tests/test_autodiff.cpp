#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "tnn/tape.hpp"

using namespace tnn;

namespace {

// Second-order central differences of a scalar map, for checking jet slots.
struct Fd2 {
    double d1, d2;
};
template <typename F>
Fd2 central(F&& f, double x, double h) {
    const double fp = f(x + h), fm = f(x - h), f0 = f(x);
    return {(fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)};
}

}  // namespace

TEST_CASE("lifting rules") {
    const Jet2 a = jet_lift(3.0, true);
    CHECK(a.v == 3.0);
    CHECK(a.d1 == 1.0);
    CHECK(a.d2 == 0.0);
    const Jet2 c = jet_lift(3.0, false);
    CHECK(c.v == 3.0);
    CHECK(c.d1 == 0.0);
    CHECK(c.d2 == 0.0);
    CHECK_THROWS_AS(jet_lift(std::nan(""), true), std::invalid_argument);

    // identity chain: multiply by lifted 1, add lifted 0
    const Jet2 one = jet_lift(1.0, false), zero = jet_lift(0.0, false);
    const Jet2 r = a * one + zero;
    CHECK(r.v == a.v);
    CHECK(r.d1 == a.d1);
    CHECK(r.d2 == a.d2);
}

TEST_CASE("activation jets at zero") {
    const Jet2 x{0.0, 1.0, 0.0};
    const Jet2 t = jet_activate(Activation::Tanh, x);
    CHECK(t.v == doctest::Approx(0.0));
    CHECK(t.d1 == doctest::Approx(1.0));
    CHECK(t.d2 == doctest::Approx(0.0));
    const Jet2 b = jet_activate(Activation::TrigBlend, x);
    CHECK(b.v == doctest::Approx(0.5));
    CHECK(b.d1 == doctest::Approx(0.5));
    CHECK(b.d2 == doctest::Approx(-0.5));
}

TEST_CASE("activation jets vs central differences of tanh(affine)") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const double w = u(rng), b = u(rng), x0 = u(rng);
        auto f = [&](double x) { return std::tanh(w * x + b); };
        const Jet2 j = jet_activate(Activation::Tanh, w * jet_lift(x0, true) + jet_lift(b, false));
        const Fd2 fd = central(f, x0, 1e-4);
        worst = std::max(worst, std::abs(j.d1 - fd.d1) / std::max(1.0, std::abs(fd.d1)));
        worst = std::max(worst, std::abs(j.d2 - fd.d2) / std::max(1.0, std::abs(fd.d2)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("random affine chains, depth <= 4, width <= 8") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Activation acts[] = {Activation::Tanh, Activation::Sin, Activation::Cos,
                               Activation::TrigBlend};
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        const int depth = 1 + trial % 4;
        const int width = 2 + trial % 7;
        std::vector<std::vector<double>> ws(static_cast<std::size_t>(depth));
        std::vector<double> bs(static_cast<std::size_t>(depth));
        for (auto& layer : ws) {
            layer.resize(static_cast<std::size_t>(width));
            for (double& w : layer) w = u(rng);
        }
        for (double& b : bs) b = u(rng);
        const Activation act = acts[trial % 4];
        const double norm = 1.0 / width;  // keep magnitudes tame so the FD oracle stays sharp
        // scalar-in scalar-out chain: widen, contract, repeat
        auto eval = [&](double x) {
            double v = x;
            for (int l = 0; l < depth; ++l) {
                double acc = bs[static_cast<std::size_t>(l)];
                for (double w : ws[static_cast<std::size_t>(l)])
                    acc += norm * activation_derivs(act, w * v).g;
                v = acc;
            }
            return v;
        };
        auto jet_eval = [&](double x) {
            Jet2 v = jet_lift(x, true);
            for (int l = 0; l < depth; ++l) {
                Jet2 acc = jet_lift(bs[static_cast<std::size_t>(l)], false);
                for (double w : ws[static_cast<std::size_t>(l)])
                    acc = acc + norm * jet_activate(act, w * v);
                v = acc;
            }
            return v;
        };
        const double x0 = u(rng);
        const Jet2 j = jet_eval(x0);
        const Fd2 fd1 = central(eval, x0, 1e-4);
        const Fd2 fd2 = central(eval, x0, 1e-3);
        worst = std::max(worst, std::abs(j.d1 - fd1.d1) / std::max(1.0, std::abs(fd1.d1)));
        worst = std::max(worst, std::abs(j.d2 - fd2.d2) / std::max(1.0, std::abs(fd2.d2)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("tape affine rows") {
    std::vector<double> params = {1.0, 0.0, 2.5, -0.5, 0.25, 0.75};
    Tape tape(params);
    const NodeId x = tape.input(0.8);

    // one-input row, weight 1 bias 0: unchanged
    const NodeId id1 = tape.affine_range(x, 1, 0);
    CHECK(tape.val(id1).v == tape.val(x).v);
    CHECK(tape.val(id1).d1 == tape.val(x).d1);
    CHECK(tape.val(id1).d2 == tape.val(x).d2);

    // zero weight, bias only: (b, 0, 0)
    std::vector<double> p2 = {0.0, 1.75};
    Tape t2(p2);
    const NodeId y = t2.input(0.3);
    const NodeId id2 = t2.affine_range(y, 1, 0);
    CHECK(t2.val(id2).v == 1.75);
    CHECK(t2.val(id2).d1 == 0.0);
    CHECK(t2.val(id2).d2 == 0.0);

    CHECK_THROWS(tape.affine_range(x, 9, 0));  // weight block out of range
}

TEST_CASE("reverse sweep: trivial parameter losses") {
    std::vector<double> params = {3.0, 4.0};
    {
        Tape tape(params);
        const NodeId p = tape.param(0);
        GradientBuffer g;
        g.assign(2, 0.0);
        tape.reverse(p, 1.0, g);
        CHECK(g[0] == 1.0);
        CHECK(g[1] == 0.0);
    }
    {
        Tape tape(params);
        const NodeId p = tape.param(0);
        const NodeId loss = tape.mul(p, p);  // p^2 at p=3
        GradientBuffer g;
        g.assign(2, 0.0);
        const std::size_t visited = tape.reverse(loss, 1.0, g);
        CHECK(g[0] == doctest::Approx(6.0));
        CHECK(visited == static_cast<std::size_t>(loss) + 1);  // single linear pass
    }
}

TEST_CASE("reverse sweep matches finite differences through derivative slots") {
    // residual-style loss on a width-4 chain: r = d2(act(affine(x))) summed,
    // so parameter gradients flow through the d1/d2 lanes.
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    std::vector<double> params(12);
    for (double& p : params) p = u(rng);
    const double x0 = 0.37;
    auto loss_at = [&](std::span<const double> ps) {
        Tape tape(ps);
        const NodeId x = tape.input(x0);
        std::vector<NodeId> hidden;
        for (int j = 0; j < 4; ++j) {
            const NodeId row = tape.affine_range(x, 1, 2 * j);
            hidden.push_back(tape.activate(Activation::Tanh, row));
        }
        const NodeId out = tape.dot_pool(hidden, 8);  // no bias slot needed at the end
        const NodeId r = tape.slot_d2(out);
        const NodeId sq = tape.mul(r, r);
        return tape.val(sq).v;
    };
    Tape tape(params);
    const NodeId x = tape.input(x0);
    std::vector<NodeId> hidden;
    for (int j = 0; j < 4; ++j)
        hidden.push_back(tape.activate(Activation::Tanh, tape.affine_range(x, 1, 2 * j)));
    const NodeId out = tape.dot_pool(hidden, 8);
    const NodeId r = tape.slot_d2(out);
    const NodeId sq = tape.mul(r, r);
    GradientBuffer g;
    g.assign(params.size(), 0.0);
    tape.reverse(sq, 1.0, g);
    const double err = finite_diff_check(loss_at, params, g, 1e-5);
    CHECK(err < 1e-5);
}

TEST_CASE("finite_diff_check edge cases") {
    std::vector<double> params = {1.2, -0.7, 0.4};
    // quadratic form: central differences are exact up to rounding
    auto quad = [](std::span<const double> p) {
        return 2.0 * p[0] * p[0] + p[0] * p[1] - 3.0 * p[2] * p[2];
    };
    std::vector<double> g = {4.0 * params[0] + params[1], params[0], -6.0 * params[2]};
    CHECK(finite_diff_check(quad, params, g) < 1e-9);

    auto zero = [](std::span<const double>) { return 0.0; };
    std::vector<double> gz = {0.0, 0.0, 0.0};
    CHECK(finite_diff_check(zero, params, gz) == 0.0);

    CHECK_THROWS_AS(finite_diff_check(zero, params, gz, -1.0), std::invalid_argument);
}

TEST_CASE("dangling node reference rejected") {
    std::vector<double> params = {1.0};
    Tape tape(params);
    GradientBuffer g;
    g.assign(1, 0.0);
    CHECK_THROWS_AS(tape.reverse(5, 1.0, g), std::out_of_range);
    CHECK_THROWS_AS(tape.val(-1), std::out_of_range);
}

TEST_CASE("chunk replay reproduces per-point tapes bitwise") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> params(7);
    for (double& p : params) p = u(rng);

    auto build = [&](Tape& tape, double x0, double x1) {
        const NodeId a = tape.input(x0, 0);
        const NodeId b = tape.input(x1, 1);
        const NodeId row = tape.affine_range(a, 1, 0);
        const NodeId act = tape.activate(Activation::TrigBlend, row);
        const NodeId mix = tape.mul(act, tape.activate(Activation::Tanh, tape.affine_range(b, 1, 2)));
        std::vector<NodeId> pooled = {mix, act};
        const NodeId dot = tape.dot_pool(pooled, 4);
        return tape.shift(tape.add(tape.slot_d2(dot), tape.slot_v(dot)), 0.25);
    };

    Tape rec(params);
    const NodeId root = build(rec, 0.1, 0.9);
    TapeBatch batch(rec, root, 2);

    const std::size_t n = 5;  // deliberately smaller than the chunk width
    std::vector<double> pts;
    for (std::size_t i = 0; i < n; ++i) {
        pts.push_back(u(rng));
        pts.push_back(u(rng));
    }
    batch.forward(pts, n);
    std::vector<double> seeds(n);
    for (std::size_t i = 0; i < n; ++i) seeds[i] = u(rng);
    GradientBuffer gb;
    gb.assign(params.size(), 0.0);
    batch.reverse(seeds, n, gb);

    GradientBuffer gp;
    gp.assign(params.size(), 0.0);
    Tape tape(params);
    for (std::size_t i = 0; i < n; ++i) {
        tape.reset(params);
        const NodeId r = build(tape, pts[2 * i], pts[2 * i + 1]);
        CHECK(batch.value(i) == tape.val(r).v);
        const Jet2 jr = batch.jet(r, i);
        CHECK(jr.d1 == tape.val(r).d1);
        CHECK(jr.d2 == tape.val(r).d2);
        tape.reverse(r, seeds[i], gp);
    }
    for (std::size_t j = 0; j < params.size(); ++j)
        CHECK(gb[j] == doctest::Approx(gp[j]).epsilon(1e-12));
}

TEST_CASE("chunk replay validates its inputs") {
    std::vector<double> params = {0.5, 0.1};
    Tape tape(params);
    const NodeId x = tape.input(0.2);  // recorded without a coordinate index
    const NodeId r = tape.affine_range(x, 1, 0);
    CHECK_THROWS_AS(TapeBatch(tape, r, 1), std::invalid_argument);

    Tape ok(params);
    const NodeId y = ok.input(0.2, 0);
    const NodeId r2 = ok.affine_range(y, 1, 0);
    TapeBatch batch(ok, r2, 1);
    std::vector<double> pts = {0.3};
    CHECK_THROWS_AS(batch.forward(pts, 2), std::invalid_argument);  // buffer too short
    batch.forward(pts, 1);
    GradientBuffer g;
    g.assign(2, 0.0);
    std::vector<double> seeds = {1.0, 1.0};
    CHECK_THROWS_AS(batch.reverse(seeds, 2, g), std::invalid_argument);
}
