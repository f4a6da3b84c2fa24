#include "tnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "tnn/rng.hpp"

namespace tnn {

double LrSchedule::at(std::int64_t step) const {
    if (step < 0) throw std::invalid_argument("LrSchedule: negative step");
    return base * std::pow(decay, static_cast<double>(step / every));
}

double lr_at(std::int64_t step) { return LrSchedule{}.at(step); }

void AdamState::reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
}

void AdamState::update(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != m.size() || grad.size() != m.size())
        throw std::invalid_argument("AdamState: size mismatch");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g)) throw std::runtime_error("AdamState: non-finite gradient");
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

double gate_weight(double t, const GateState& g) {
    return (1.0 - std::tanh(g.slope * (t - g.mu))) / 2.0;
}

double update_mu(GateState& g, double interior_loss) {
    if (interior_loss < 0.0) throw std::invalid_argument("update_mu: negative loss");
    const double inc = g.advance * std::exp(-g.decay * interior_loss);
    g.mu += inc;
    return inc;
}

namespace {

// True when every node coefficient of the interior/boundary graphs is
// point-independent, so one recorded graph serves the whole batch. The time
// embeddings bake t into Scale/Shift coefficients and fall outside this.
bool replayable(const ProblemSpec& prob) {
    return prob.kind == ProblemKind::Poisson || prob.kind == ProblemKind::Helmholtz ||
           prob.kind == ProblemKind::FitFunction;
}

// Right-hand side the interior operator is matched against at p.
double interior_target(const ProblemSpec& prob, std::span<const double> p) {
    return prob.kind == ProblemKind::FitFunction ? prob.exact.value(p) : prob.source(p);
}

// Differential operator applied to the model (plain value for fits), without
// the point's right-hand side. Only for replayable kinds.
NodeId interior_operator_node(const ProblemSpec& prob, const TnnModel& model, Tape& tape,
                              std::span<const double> p) {
    const int sd = prob.spatial_dims;
    switch (prob.kind) {
        case ProblemKind::Poisson:
        case ProblemKind::Helmholtz: {
            const TapeEval n = model.forward_tape(tape, p, true);
            NodeId s = n.d2u[0];
            for (int k = 1; k < sd; ++k) s = tape.add(s, n.d2u[static_cast<std::size_t>(k)]);
            NodeId r = tape.neg(s);
            if (prob.kind == ProblemKind::Helmholtz)
                r = tape.add(r, tape.scale(n.u, prob.lambda * prob.lambda));
            return r;
        }
        case ProblemKind::FitFunction:
            return model.forward_tape(tape, p, false).u;
        default:
            throw std::logic_error("interior_operator_node: kind rebuilds per point");
    }
}

// PDE residual of the embedded solution u = h + t N (u = N without a time
// axis) as a tape node, for one interior point.
NodeId interior_residual_node(const ProblemSpec& prob, const TnnModel& model, Tape& tape,
                              std::span<const double> p) {
    const int sd = prob.spatial_dims;
    switch (prob.kind) {
        case ProblemKind::Poisson:
        case ProblemKind::Helmholtz:
            return tape.shift(interior_operator_node(prob, model, tape, p),
                              -interior_target(prob, p));
        case ProblemKind::Heat: {
            const TapeEval n = model.forward_tape(tape, p, true);
            const double t = p[static_cast<std::size_t>(sd)];
            const auto x = p.first(static_cast<std::size_t>(sd));
            // u_t - sum c_k u_xkxk with u_t = N + t N_t, u_xkxk = h_k'' + t N_xkxk
            const NodeId ut = tape.add(n.u, tape.scale(n.du[static_cast<std::size_t>(sd)], t));
            NodeId acc = -1;
            double h2 = 0.0;
            for (int k = 0; k < sd; ++k) {
                const double c = prob.diffusivity[static_cast<std::size_t>(k)];
                h2 += c * prob.initial_d2(x, k);
                const NodeId term = tape.scale(n.d2u[static_cast<std::size_t>(k)], c * t);
                acc = k == 0 ? term : tape.add(acc, term);
            }
            return tape.shift(tape.sub(ut, acc), -h2);
        }
        case ProblemKind::Wave: {
            const TapeEval n = model.forward_tape(tape, p, true);
            const double t = p[static_cast<std::size_t>(sd)];
            const auto x = p.first(static_cast<std::size_t>(sd));
            // u_tt - c^2 sum u_xkxk with u_tt = 2 N_t + t N_tt
            const NodeId utt = tape.add(tape.scale(n.du[static_cast<std::size_t>(sd)], 2.0),
                                        tape.scale(n.d2u[static_cast<std::size_t>(sd)], t));
            NodeId acc = -1;
            double h2 = 0.0;
            for (int k = 0; k < sd; ++k) {
                h2 += prob.wave_c2 * prob.initial_d2(x, k);
                const NodeId term =
                    tape.scale(n.d2u[static_cast<std::size_t>(k)], prob.wave_c2 * t);
                acc = k == 0 ? term : tape.add(acc, term);
            }
            return tape.shift(tape.sub(utt, acc), -h2);
        }
        case ProblemKind::FitFunction:
            return tape.shift(interior_operator_node(prob, model, tape, p),
                              -interior_target(prob, p));
    }
    throw std::logic_error("interior_residual_node: bad kind");
}

NodeId boundary_residual_node(const ProblemSpec& prob, const TnnModel& model, Tape& tape,
                              std::span<const double> p) {
    const TapeEval n = model.forward_tape(tape, p, false);
    NodeId u = n.u;
    if (prob.has_time()) {
        const double t = p[static_cast<std::size_t>(prob.spatial_dims)];
        u = tape.shift(tape.scale(n.u, t),
                       prob.initial(p.first(static_cast<std::size_t>(prob.spatial_dims))));
    }
    return tape.shift(u, -prob.dirichlet(p));
}

}  // namespace

LossBreakdown assemble_loss(const ProblemSpec& prob, const TnnModel& model,
                            const Batches& b, const GateState* gate, GradientBuffer& grad,
                            LossPath path) {
    const bool fit = prob.kind == ProblemKind::FitFunction;
    const bool wave = prob.kind == ProblemKind::Wave;
    const bool replay = path != LossPath::Rebuild && replayable(prob);
    if (b.interior.n == 0) throw std::invalid_argument("assemble_loss: empty interior batch");
    if (!fit && prob.lambda_b != 0.0 && b.boundary.n == 0)
        throw std::invalid_argument("assemble_loss: empty boundary batch");
    if (wave && prob.omega_ut != 0.0 && b.initial.n == 0)
        throw std::invalid_argument("assemble_loss: empty initial batch");

    grad.assign(model.param_count(), 0.0);
    LossBreakdown out;
    Tape tape(model.params());

    const double inv_r = 1.0 / static_cast<double>(b.interior.n);
    if (replay) {
        const NodeId r = interior_operator_node(prob, model, tape, b.interior.point(0));
        TapeBatch batch(tape, r, prob.input_dims());
        const auto ud = static_cast<std::size_t>(b.interior.dims);
        double seeds[TapeBatch::kChunk];
        for (std::size_t base = 0; base < b.interior.n; base += TapeBatch::kChunk) {
            const std::size_t nc = std::min(TapeBatch::kChunk, b.interior.n - base);
            batch.forward(std::span(b.interior.pts).subspan(base * ud, nc * ud), nc);
            for (std::size_t c = 0; c < nc; ++c) {
                const double rv = batch.value(c) - interior_target(prob, b.interior.point(base + c));
                if (!std::isfinite(rv)) {
                    out.finite = false;
                    out.total = rv;
                    return out;
                }
                out.interior += rv * rv * inv_r;
                seeds[c] = 2.0 * rv * inv_r;
            }
            batch.reverse(std::span<const double>(seeds, nc), nc, grad);
        }
    } else {
        for (std::size_t i = 0; i < b.interior.n; ++i) {
            const auto p = b.interior.point(i);
            tape.reset(model.params());
            const NodeId r = interior_residual_node(prob, model, tape, p);
            const double rv = tape.val(r).v;
            if (!std::isfinite(rv)) {
                out.finite = false;
                out.total = rv;
                return out;
            }
            const double w =
                (wave && gate) ? gate_weight(p[static_cast<std::size_t>(prob.spatial_dims)], *gate)
                               : 1.0;
            out.interior += w * rv * rv * inv_r;
            tape.reverse(r, 2.0 * w * rv * inv_r, grad);
        }
    }

    if (!fit && prob.lambda_b != 0.0) {
        const double inv_b = 1.0 / static_cast<double>(b.boundary.n);
        if (replay) {
            tape.reset(model.params());
            const NodeId r = model.forward_tape(tape, b.boundary.point(0), false).u;
            TapeBatch batch(tape, r, prob.input_dims());
            const auto ud = static_cast<std::size_t>(b.boundary.dims);
            double seeds[TapeBatch::kChunk];
            for (std::size_t base = 0; base < b.boundary.n; base += TapeBatch::kChunk) {
                const std::size_t nc = std::min(TapeBatch::kChunk, b.boundary.n - base);
                batch.forward(std::span(b.boundary.pts).subspan(base * ud, nc * ud), nc);
                for (std::size_t c = 0; c < nc; ++c) {
                    const double rv = batch.value(c) - prob.dirichlet(b.boundary.point(base + c));
                    if (!std::isfinite(rv)) {
                        out.finite = false;
                        out.total = rv;
                        return out;
                    }
                    out.boundary += rv * rv * inv_b;
                    seeds[c] = 2.0 * prob.lambda_b * rv * inv_b;
                }
                batch.reverse(std::span<const double>(seeds, nc), nc, grad);
            }
        } else {
            for (std::size_t i = 0; i < b.boundary.n; ++i) {
                const auto p = b.boundary.point(i);
                tape.reset(model.params());
                const NodeId r = boundary_residual_node(prob, model, tape, p);
                const double rv = tape.val(r).v;
                if (!std::isfinite(rv)) {
                    out.finite = false;
                    out.total = rv;
                    return out;
                }
                out.boundary += rv * rv * inv_b;
                tape.reverse(r, 2.0 * prob.lambda_b * rv * inv_b, grad);
            }
        }
    }

    if (wave && prob.omega_ut != 0.0) {
        const double inv_0 = 1.0 / static_cast<double>(b.initial.n);
        for (std::size_t i = 0; i < b.initial.n; ++i) {
            const auto p = b.initial.point(i);
            tape.reset(model.params());
            // The embedding reduces u_t(x, 0) to N(x, 0).
            const TapeEval n = model.forward_tape(tape, p, false);
            const double rv = tape.val(n.u).v;
            if (!std::isfinite(rv)) {
                out.finite = false;
                out.total = rv;
                return out;
            }
            out.initial_velocity += rv * rv * inv_0;
            tape.reverse(n.u, 2.0 * prob.omega_ut * rv * inv_0, grad);
        }
    }

    out.total = out.interior + prob.lambda_b * out.boundary +
                prob.omega_ut * out.initial_velocity;
    out.finite = std::isfinite(out.total);
    return out;
}

TrainResult train(const ProblemSpec& prob, TnnModel& model, const TrainConfig& cfg,
                  const EpochCallback& cb) {
    TrainResult out;
    if (cfg.epochs <= 0) return out;
    const bool wave = prob.kind == ProblemKind::Wave;
    const bool fit = prob.kind == ProblemKind::FitFunction;
    AdamState adam;
    adam.reset(model.param_count());
    GateState gate;
    GradientBuffer grad;
    Batches b;
    out.records.reserve(static_cast<std::size_t>(cfg.epochs));
    for (std::int64_t e = 0; e < cfg.epochs; ++e) {
        if (e == 0 || cfg.resample_every_epoch) {
            const std::uint64_t idx = cfg.resample_every_epoch ? static_cast<std::uint64_t>(e) : 0;
            b.interior = sample_interior(prob, prob.n_interior,
                                         derive_seed(cfg.seed, seed_stream::kInterior, idx));
            if (!fit && prob.lambda_b != 0.0)
                b.boundary = sample_boundary(prob, prob.n_boundary_per_face,
                                             derive_seed(cfg.seed, seed_stream::kBoundary, idx));
            if (wave && prob.omega_ut != 0.0)
                b.initial = sample_initial(prob, prob.n_initial,
                                           derive_seed(cfg.seed, seed_stream::kInitial, idx));
        }
        const double lr = cfg.sched.at(adam.step);
        const LossBreakdown lb = assemble_loss(prob, model, b, wave ? &gate : nullptr, grad);
        out.records.push_back({e, lr, lb, wave ? gate.mu : 0.0});
        if (cb) cb(out.records.back());
        if (!lb.finite) {
            out.aborted = true;  // parameters keep the last finite state
            break;
        }
        adam.update(model.params(), grad, lr);
        if (wave) update_mu(gate, lb.interior);
        ++out.epochs_run;
    }
    return out;
}

double relative_l2(const ProblemSpec& prob,
                   const std::function<double(std::span<const double>)>& u,
                   std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("relative_l2: n must be positive");
    const SampleBatch pts = sample_interior(prob, n, seed);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pts.n; ++i) {
        const auto p = pts.point(i);
        const double e = prob.exact.value(p);
        const double d = u(p) - e;
        num += d * d;
        den += e * e;
    }
    if (den == 0.0) throw std::invalid_argument("relative_l2: exact solution vanishes on sample");
    return std::sqrt(num / den);
}

double relative_l2(const ProblemSpec& prob, const TnnModel& model, std::size_t n,
                   std::uint64_t seed) {
    return relative_l2(
        prob, [&](std::span<const double> p) { return model_u_value(prob, model, p); }, n, seed);
}

std::vector<double> pointwise_error_grid(const ProblemSpec& prob, const TnnModel& model,
                                         std::uint64_t seed) {
    const SampleBatch pts =
        sample_interior(prob, 1600, derive_seed(seed, seed_stream::kGrid, 0));
    std::vector<double> grid(1600);
    for (std::size_t i = 0; i < pts.n; ++i) {
        const auto p = pts.point(i);
        grid[i] = std::abs(model_u_value(prob, model, p) - prob.exact.value(p));
    }
    return grid;
}

namespace {

double mean_jaccard(const std::vector<std::vector<int>>& a,
                    const std::vector<std::vector<int>>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("mean_jaccard: dimension mismatch");
    if (a.empty()) return 1.0;
    double acc = 0.0;
    std::vector<int> tmp;
    for (std::size_t i = 0; i < a.size(); ++i) {
        tmp.clear();
        std::set_intersection(a[i].begin(), a[i].end(), b[i].begin(), b[i].end(),
                              std::back_inserter(tmp));
        const std::size_t inter = tmp.size();
        const std::size_t uni = a[i].size() + b[i].size() - inter;
        acc += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return acc / static_cast<double>(a.size());
}

}  // namespace

RunHistory adaptive_solve(const ProblemSpec& prob, const AdaptiveConfig& cfg,
                          const StepCallback& on_step, const EpochCallback& on_epoch) {
    RunHistory hist;
    const std::uint64_t run_seed = cfg.model.seed;
    const std::uint64_t eval_seed = derive_seed(run_seed, seed_stream::kEval, 0);
    const int top_m = cfg.top_m > 0 ? cfg.top_m : prob.top_m;
    std::vector<std::vector<int>> next_sets;

    for (int it = 0; it <= cfg.iterations; ++it) {
        AdaptiveStep step;
        step.iteration = it;
        step.step_seed = derive_seed(run_seed, seed_stream::kRebuild, static_cast<std::uint64_t>(it));
        const auto t0 = std::chrono::steady_clock::now();

        TnnModel model = [&] {
            if (it == 0) {
                ModelConfig mc = cfg.model;
                mc.seed = step.step_seed;
                return TnnModel::init(mc);
            }
            return TnnModel::rebuild_with_frequencies(cfg.model, next_sets, step.step_seed);
        }();
        step.used.iteration = it;
        step.used.sets = it == 0
                             ? std::vector<std::vector<int>>(static_cast<std::size_t>(model.dims()))
                             : next_sets;

        TrainConfig tc = cfg.train;
        tc.seed = step.step_seed;
        step.training = train(prob, model, tc, on_epoch);

        step.e_rel = relative_l2(prob, model, cfg.eval_n, eval_seed);

        step.extracted.iteration = it;
        step.extracted.sets.resize(static_cast<std::size_t>(model.dims()));
        step.averaged.resize(static_cast<std::size_t>(model.dims()));
        for (int i = 0; i < model.dims(); ++i) {
            const DimensionSpectra ds = dimension_spectra(model, i, cfg.dft_n);
            step.dft_samples += ds.samples_evaluated;
            step.averaged[static_cast<std::size_t>(i)] = ds.average;
            const std::size_t bins = ds.average.magnitude.size();
            std::vector<double> aggregate(bins, 0.0);
            std::vector<std::vector<int>> per_channel;
            per_channel.reserve(ds.per_channel.size());
            for (const Spectrum1D& s : ds.per_channel) {
                for (std::size_t k = 0; k < bins; ++k) aggregate[k] += s.magnitude[k];
                per_channel.push_back(top_m_frequencies(s, top_m));
            }
            step.extracted.sets[static_cast<std::size_t>(i)] =
                union_dimension_frequencies(per_channel, aggregate, cfg.union_cap);
        }

        step.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool aborted = step.training.aborted;
        const bool same =
            it >= 1 && cfg.stop_on_equal && freqsets_equal(step.used, step.extracted);
        const bool similar = it >= 1 && cfg.jaccard_stop > 0.0 &&
                             mean_jaccard(step.used.sets, step.extracted.sets) >= cfg.jaccard_stop;

        next_sets = step.extracted.sets;
        hist.steps.push_back(std::move(step));
        if (on_step) on_step(hist.steps.back(), model);
        if (aborted) {
            hist.aborted = true;
            break;
        }
        if (same || similar) {
            hist.stopped_early = true;
            break;
        }
    }
    return hist;
}

}  // namespace tnn
