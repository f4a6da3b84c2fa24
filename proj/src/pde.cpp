#include "tnn/pde.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tnn/rng.hpp"

namespace tnn {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double trig(const TrigFactor& f, double x, int order) {
    const double th = f.omega * x;
    const double w = f.omega;
    switch (order) {
        case 0: return f.is_sin ? std::sin(th) : std::cos(th);
        case 1: return f.is_sin ? w * std::cos(th) : -w * std::sin(th);
        case 2: return -w * w * (f.is_sin ? std::sin(th) : std::cos(th));
    }
    throw std::logic_error("trig: bad order");
}

double time_factor(const SolutionTerm& t, double tt, int order) {
    switch (t.time) {
        case TimeFactorKind::None:
            return order == 0 ? 1.0 : 0.0;
        case TimeFactorKind::ExpDecay: {
            const double e = std::exp(-tt);
            return order == 0 ? e : (order == 1 ? -e : e);
        }
        case TimeFactorKind::CosOmega: {
            const double w = t.time_omega;
            switch (order) {
                case 0: return std::cos(w * tt);
                case 1: return -w * std::sin(w * tt);
                case 2: return -w * w * std::cos(w * tt);
            }
        }
    }
    throw std::logic_error("time_factor: bad order");
}

}  // namespace

double ManufacturedSolution::value(std::span<const double> p) const {
    double u = 0.0;
    for (const auto& t : terms) {
        double v = t.coeff;
        for (const auto& f : t.factors) v *= trig(f, p[static_cast<std::size_t>(f.dim)], 0);
        if (has_time) v *= time_factor(t, p[static_cast<std::size_t>(spatial_dims)], 0);
        u += v;
    }
    return u;
}

double ManufacturedSolution::d1(std::span<const double> p, int dim) const {
    double u = 0.0;
    for (const auto& t : terms) {
        double v = t.coeff;
        bool touches = false;
        for (const auto& f : t.factors) {
            const int order = f.dim == dim ? 1 : 0;
            if (f.dim == dim) touches = true;
            v *= trig(f, p[static_cast<std::size_t>(f.dim)], order);
        }
        if (!touches) continue;
        if (has_time) v *= time_factor(t, p[static_cast<std::size_t>(spatial_dims)], 0);
        u += v;
    }
    return u;
}

double ManufacturedSolution::d2(std::span<const double> p, int dim) const {
    double u = 0.0;
    for (const auto& t : terms) {
        double v = t.coeff;
        bool touches = false;
        for (const auto& f : t.factors) {
            const int order = f.dim == dim ? 2 : 0;
            if (f.dim == dim) touches = true;
            v *= trig(f, p[static_cast<std::size_t>(f.dim)], order);
        }
        if (!touches) continue;
        if (has_time) v *= time_factor(t, p[static_cast<std::size_t>(spatial_dims)], 0);
        u += v;
    }
    return u;
}

double ManufacturedSolution::dt(std::span<const double> p) const {
    if (!has_time) return 0.0;
    double u = 0.0;
    for (const auto& t : terms) {
        double v = t.coeff;
        for (const auto& f : t.factors) v *= trig(f, p[static_cast<std::size_t>(f.dim)], 0);
        u += v * time_factor(t, p[static_cast<std::size_t>(spatial_dims)], 1);
    }
    return u;
}

double ManufacturedSolution::dtt(std::span<const double> p) const {
    if (!has_time) return 0.0;
    double u = 0.0;
    for (const auto& t : terms) {
        double v = t.coeff;
        for (const auto& f : t.factors) v *= trig(f, p[static_cast<std::size_t>(f.dim)], 0);
        u += v * time_factor(t, p[static_cast<std::size_t>(spatial_dims)], 2);
    }
    return u;
}

double ManufacturedSolution::max_omega(int dim) const {
    double w = 0.0;
    for (const auto& t : terms) {
        if (dim == spatial_dims) {
            if (t.time == TimeFactorKind::ExpDecay) w = std::max(w, 1.0);
            if (t.time == TimeFactorKind::CosOmega) w = std::max(w, std::abs(t.time_omega));
        } else {
            for (const auto& f : t.factors)
                if (f.dim == dim) w = std::max(w, std::abs(f.omega));
        }
    }
    return w;
}

double ProblemSpec::source(std::span<const double> p) const {
    switch (kind) {
        case ProblemKind::Poisson: {
            double f = 0.0;
            for (int k = 0; k < spatial_dims; ++k) f -= exact.d2(p, k);
            return f;
        }
        case ProblemKind::Helmholtz: {
            double f = lambda * lambda * exact.value(p);
            for (int k = 0; k < spatial_dims; ++k) f -= exact.d2(p, k);
            return f;
        }
        case ProblemKind::Heat:
        case ProblemKind::Wave:
            return 0.0;  // homogeneous; the solution satisfies the PDE itself
        case ProblemKind::FitFunction:
            return exact.value(p);
    }
    throw std::logic_error("source: bad kind");
}

double ProblemSpec::dirichlet(std::span<const double> p) const { return exact.value(p); }

double ProblemSpec::initial(std::span<const double> x) const {
    thread_local std::vector<double> p;
    p.assign(x.begin(), x.end());
    p.push_back(0.0);
    return exact.value(p);
}

double ProblemSpec::initial_d1(std::span<const double> x, int dim) const {
    thread_local std::vector<double> p;
    p.assign(x.begin(), x.end());
    p.push_back(0.0);
    return exact.d1(p, dim);
}

double ProblemSpec::initial_d2(std::span<const double> x, int dim) const {
    thread_local std::vector<double> p;
    p.assign(x.begin(), x.end());
    p.push_back(0.0);
    return exact.d2(p, dim);
}

double ProblemSpec::residual_of(const ModelEval& u, std::span<const double> p) const {
    const auto need = static_cast<std::size_t>(input_dims());
    if (kind != ProblemKind::FitFunction && (u.du.size() < need || u.d2u.size() < need))
        throw std::invalid_argument("residual_of: evaluation lacks required derivative slots");
    switch (kind) {
        case ProblemKind::Poisson: {
            double r = -source(p);
            for (int k = 0; k < spatial_dims; ++k) r -= u.d2u[static_cast<std::size_t>(k)];
            return r;
        }
        case ProblemKind::Helmholtz: {
            double r = lambda * lambda * u.u - source(p);
            for (int k = 0; k < spatial_dims; ++k) r -= u.d2u[static_cast<std::size_t>(k)];
            return r;
        }
        case ProblemKind::Heat: {
            double r = u.du[static_cast<std::size_t>(spatial_dims)];
            for (int k = 0; k < spatial_dims; ++k)
                r -= diffusivity[static_cast<std::size_t>(k)] * u.d2u[static_cast<std::size_t>(k)];
            return r;
        }
        case ProblemKind::Wave: {
            double r = u.d2u[static_cast<std::size_t>(spatial_dims)];
            for (int k = 0; k < spatial_dims; ++k) r -= wave_c2 * u.d2u[static_cast<std::size_t>(k)];
            return r;
        }
        case ProblemKind::FitFunction:
            return u.u - exact.value(p);
    }
    throw std::logic_error("residual_of: bad kind");
}

double ProblemSpec::boundary_residual(double u_value, std::span<const double> p) const {
    bool on_face = false;
    for (int k = 0; k < spatial_dims; ++k) {
        const double x = p[static_cast<std::size_t>(k)];
        if (x == 0.0 || x == 1.0) on_face = true;
    }
    if (!on_face) throw std::invalid_argument("boundary_residual: point is interior");
    return u_value - dirichlet(p);
}

double ProblemSpec::initial_time_derivative_residual(double n_value_at_t0) const {
    if (kind != ProblemKind::Wave)
        throw std::invalid_argument("initial_time_derivative_residual: wave problems only");
    // u_t = N + t N_t, so at t = 0 the condition u_t = 0 reduces to N(x,0) = 0.
    return n_value_at_t0;
}

ModelEval apply_time_embedding(const ProblemSpec& prob, const ModelEval& n_eval,
                               std::span<const double> p) {
    if (!prob.has_time()) return n_eval;
    const int sd = prob.spatial_dims;
    const double t = p[static_cast<std::size_t>(sd)];
    const auto x = p.first(static_cast<std::size_t>(sd));
    ModelEval u;
    u.u = prob.initial(x) + t * n_eval.u;
    u.du.resize(static_cast<std::size_t>(sd) + 1);
    u.d2u.resize(static_cast<std::size_t>(sd) + 1);
    for (int k = 0; k < sd; ++k) {
        u.du[static_cast<std::size_t>(k)] = prob.initial_d1(x, k) + t * n_eval.du[static_cast<std::size_t>(k)];
        u.d2u[static_cast<std::size_t>(k)] = prob.initial_d2(x, k) + t * n_eval.d2u[static_cast<std::size_t>(k)];
    }
    u.du[static_cast<std::size_t>(sd)] = n_eval.u + t * n_eval.du[static_cast<std::size_t>(sd)];
    u.d2u[static_cast<std::size_t>(sd)] =
        2.0 * n_eval.du[static_cast<std::size_t>(sd)] + t * n_eval.d2u[static_cast<std::size_t>(sd)];
    return u;
}

double model_u_value(const ProblemSpec& prob, const TnnModel& model, std::span<const double> p) {
    const double n = model.value(p);
    if (!prob.has_time()) return n;
    const int sd = prob.spatial_dims;
    return prob.initial(p.first(static_cast<std::size_t>(sd))) + p[static_cast<std::size_t>(sd)] * n;
}

SampleBatch sample_interior(const ProblemSpec& prob, std::size_t n, std::uint64_t seed) {
    SampleBatch b;
    b.n = n;
    b.dims = prob.input_dims();
    b.pts.resize(n * static_cast<std::size_t>(b.dims));
    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* p = b.pts.data() + i * static_cast<std::size_t>(b.dims);
        for (int k = 0; k < prob.spatial_dims; ++k) p[k] = u01(eng);
        if (prob.has_time()) p[prob.spatial_dims] = prob.t_final * (1.0 - u01(eng));  // (0, T]
    }
    return b;
}

SampleBatch sample_boundary(const ProblemSpec& prob, std::size_t per_face, std::uint64_t seed) {
    SampleBatch b;
    b.dims = prob.input_dims();
    b.n = 2 * static_cast<std::size_t>(prob.spatial_dims) * per_face;
    b.pts.resize(b.n * static_cast<std::size_t>(b.dims));
    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::size_t i = 0;
    for (int face_dim = 0; face_dim < prob.spatial_dims; ++face_dim)
        for (int side = 0; side < 2; ++side)
            for (std::size_t j = 0; j < per_face; ++j, ++i) {
                double* p = b.pts.data() + i * static_cast<std::size_t>(b.dims);
                for (int k = 0; k < prob.spatial_dims; ++k) p[k] = u01(eng);
                p[face_dim] = static_cast<double>(side);
                if (prob.has_time()) p[prob.spatial_dims] = prob.t_final * (1.0 - u01(eng));
            }
    return b;
}

SampleBatch sample_initial(const ProblemSpec& prob, std::size_t n, std::uint64_t seed) {
    if (!prob.has_time()) throw std::invalid_argument("sample_initial: problem has no time axis");
    SampleBatch b;
    b.n = n;
    b.dims = prob.input_dims();
    b.pts.resize(n * static_cast<std::size_t>(b.dims));
    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* p = b.pts.data() + i * static_cast<std::size_t>(b.dims);
        for (int k = 0; k < prob.spatial_dims; ++k) p[k] = u01(eng);
        p[prob.spatial_dims] = 0.0;
    }
    return b;
}

ManufacturedReport verify_manufactured(const ProblemSpec& prob, std::size_t n,
                                       std::uint64_t seed, double tol_rel) {
    const int sd = prob.spatial_dims;
    const int id = prob.input_dims();
    SampleBatch pts = sample_interior(prob, n, seed);
    ManufacturedReport rep;

    auto exact_eval_closed = [&](std::span<const double> p) {
        ModelEval e;
        e.u = prob.exact.value(p);
        e.du.assign(static_cast<std::size_t>(id), 0.0);
        e.d2u.assign(static_cast<std::size_t>(id), 0.0);
        for (int k = 0; k < sd; ++k) {
            e.du[static_cast<std::size_t>(k)] = prob.exact.d1(p, k);
            e.d2u[static_cast<std::size_t>(k)] = prob.exact.d2(p, k);
        }
        if (prob.has_time()) {
            e.du[static_cast<std::size_t>(sd)] = prob.exact.dt(p);
            e.d2u[static_cast<std::size_t>(sd)] = prob.exact.dtt(p);
        }
        return e;
    };
    // Independent route: derivatives from central differences of the value
    // function, with steps scaled to each dimension's fastest oscillation.
    auto exact_eval_fd = [&](std::span<const double> p) {
        ModelEval e;
        e.u = prob.exact.value(p);
        e.du.assign(static_cast<std::size_t>(id), 0.0);
        e.d2u.assign(static_cast<std::size_t>(id), 0.0);
        std::vector<double> q(p.begin(), p.end());
        for (int k = 0; k < id; ++k) {
            const double h = 0.01 / std::max(1.0, prob.exact.max_omega(k));
            const double saved = q[static_cast<std::size_t>(k)];
            q[static_cast<std::size_t>(k)] = saved + h;
            const double fp = prob.exact.value(q);
            q[static_cast<std::size_t>(k)] = saved - h;
            const double fm = prob.exact.value(q);
            q[static_cast<std::size_t>(k)] = saved;
            const double f0 = e.u;
            e.du[static_cast<std::size_t>(k)] = (fp - fm) / (2.0 * h);
            e.d2u[static_cast<std::size_t>(k)] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        return e;
    };
    // Magnitude of the operator pieces, for scale-relative comparisons.
    auto scale_of = [&](const ModelEval& e, std::span<const double> p) {
        double s = std::abs(prob.source(p)) + std::abs(e.u);
        switch (prob.kind) {
            case ProblemKind::Poisson:
            case ProblemKind::Helmholtz:
                for (int k = 0; k < sd; ++k) s += std::abs(e.d2u[static_cast<std::size_t>(k)]);
                break;
            case ProblemKind::Heat:
                s += std::abs(e.du[static_cast<std::size_t>(sd)]);
                for (int k = 0; k < sd; ++k)
                    s += std::abs(prob.diffusivity[static_cast<std::size_t>(k)] * e.d2u[static_cast<std::size_t>(k)]);
                break;
            case ProblemKind::Wave:
                s += std::abs(e.d2u[static_cast<std::size_t>(sd)]);
                for (int k = 0; k < sd; ++k) s += std::abs(prob.wave_c2 * e.d2u[static_cast<std::size_t>(k)]);
                break;
            case ProblemKind::FitFunction:
                break;
        }
        return std::max(s, 1.0);
    };

    // Per-dimension magnitude of the second-derivative field; the mismatch is
    // measured against this (a pointwise ratio explodes wherever the
    // derivative itself passes through zero).
    std::vector<double> dscale(static_cast<std::size_t>(id), 1.0);
    for (const SolutionTerm& t : prob.exact.terms) {
        for (const TrigFactor& f : t.factors)
            dscale[static_cast<std::size_t>(f.dim)] += std::abs(t.coeff) * f.omega * f.omega;
        if (prob.has_time() && t.time != TimeFactorKind::None) {
            const double w = t.time == TimeFactorKind::CosOmega ? t.time_omega : 1.0;
            dscale[static_cast<std::size_t>(sd)] += std::abs(t.coeff) * w * w;
        }
    }

    for (std::size_t i = 0; i < pts.n; ++i) {
        const auto p = pts.point(i);
        const ModelEval ec = exact_eval_closed(p);
        const ModelEval ef = exact_eval_fd(p);
        const double s = scale_of(ec, p);
        rep.scale = std::max(rep.scale, s);
        rep.max_residual_rel = std::max(rep.max_residual_rel, std::abs(prob.residual_of(ec, p)) / s);
        rep.max_fd_residual_rel =
            std::max(rep.max_fd_residual_rel, std::abs(prob.residual_of(ef, p)) / s);
        for (int k = 0; k < id; ++k) {
            const double a = ec.d2u[static_cast<std::size_t>(k)], b = ef.d2u[static_cast<std::size_t>(k)];
            rep.max_derivative_mismatch = std::max(
                rep.max_derivative_mismatch, std::abs(a - b) / dscale[static_cast<std::size_t>(k)]);
        }
    }
    rep.pass = rep.max_residual_rel < tol_rel && rep.max_fd_residual_rel < 1e-4 &&
               rep.max_derivative_mismatch < 1e-4;
    return rep;
}

double exact_sq_norm(const ProblemSpec& prob, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("exact_sq_norm: n must be positive");
    SampleBatch pts = sample_interior(prob, n, seed);
    double acc = 0.0;
    for (std::size_t i = 0; i < pts.n; ++i) {
        const double v = prob.exact.value(pts.point(i));
        acc += v * v;
    }
    return acc / static_cast<double>(n);
}

ProblemSpec make_poisson_product3(int k1, int k2) {
    ProblemSpec p;
    p.kind = ProblemKind::Poisson;
    p.name = "poisson3d-product";
    p.spatial_dims = 3;
    p.exact.spatial_dims = 3;
    const double w1 = kTwoPi * k1, w2 = kTwoPi * k2;
    for (int hi = 0; hi < 3; ++hi) {  // position of the fast factor
        SolutionTerm t;
        for (int dim = 0; dim < 3; ++dim)
            t.factors.push_back({dim, dim == 2 - hi ? w2 : w1, true});
        p.exact.terms.push_back(t);
    }
    return p;
}

ProblemSpec make_poisson_additive12(std::vector<int> ks, std::vector<double> amps) {
    if (ks.size() != amps.size()) throw std::invalid_argument("poisson12: ks/amps size mismatch");
    ProblemSpec p;
    p.kind = ProblemKind::Poisson;
    p.name = "poisson12d-additive";
    p.spatial_dims = 12;
    p.exact.spatial_dims = 12;
    for (int dim = 0; dim < 12; ++dim)
        for (std::size_t j = 0; j < ks.size(); ++j) {
            SolutionTerm t;
            t.coeff = amps[j];
            t.factors.push_back({dim, kTwoPi * ks[j], true});
            p.exact.terms.push_back(t);
        }
    return p;
}

ProblemSpec make_poisson_two_scale(int d, int k) {
    ProblemSpec p;
    p.kind = ProblemKind::Poisson;
    p.name = "poisson-two-scale";
    p.spatial_dims = d;
    p.exact.spatial_dims = d;
    for (int dim = 0; dim < d; ++dim) {
        SolutionTerm lo;
        lo.factors.push_back({dim, kTwoPi, true});
        p.exact.terms.push_back(lo);
        SolutionTerm hi;
        hi.coeff = 0.1;
        hi.factors.push_back({dim, kPi * k, true});
        p.exact.terms.push_back(hi);
    }
    return p;
}

ProblemSpec make_poisson_product_single(const std::vector<int>& ks) {
    ProblemSpec p;
    p.kind = ProblemKind::Poisson;
    p.name = "poisson-product";
    p.spatial_dims = static_cast<int>(ks.size());
    p.exact.spatial_dims = p.spatial_dims;
    SolutionTerm t;
    for (int dim = 0; dim < p.spatial_dims; ++dim)
        t.factors.push_back({dim, kTwoPi * ks[static_cast<std::size_t>(dim)], true});
    p.exact.terms.push_back(t);
    return p;
}

ProblemSpec make_heat6(bool corrected) {
    ProblemSpec p;
    p.kind = ProblemKind::Heat;
    p.name = corrected ? "heat6d" : "heat6d-printed";
    p.spatial_dims = 6;
    p.exact.spatial_dims = 6;
    p.exact.has_time = true;
    p.top_m = 50;
    const int ks[6] = {200, 200, 200, 400, 400, 400};
    for (int dim = 0; dim < 6; ++dim) {
        // Alternate sin/cos across the pairs; with the pi factor every term
        // satisfies u_t = sum_i u_{x_i x_i} / (k_i pi)^2 exactly. The printed
        // variant omits pi inside the trig arguments, which breaks the balance
        // by a factor pi^2 and must be caught by verify_manufactured.
        SolutionTerm t;
        t.time = TimeFactorKind::ExpDecay;
        const double w = (corrected ? kPi : 1.0) * ks[dim];
        t.factors.push_back({dim, w, dim % 2 == 0});
        p.exact.terms.push_back(t);
        p.diffusivity.push_back(1.0 / (ks[dim] * kPi * (ks[dim] * kPi)));
    }
    return p;
}

namespace {

ProblemSpec make_wave(int d, bool corrected) {
    ProblemSpec p;
    p.kind = ProblemKind::Wave;
    p.name = corrected ? "wave" : "wave-printed";
    p.spatial_dims = d;
    p.exact.spatial_dims = d;
    p.exact.has_time = true;
    // Standing waves: sin(150 pi x) cos(2 pi t) + sin(300 pi x) cos(4 pi t)
    // solve u_tt = c^2 Lap u only with c = 1/75, i.e. c^2 = 1/5625.
    p.wave_c2 = corrected ? 1.0 / 5625.0 : 1.0 / 75.0;
    p.omega_u = 1e4;
    p.omega_ut = 1e3;
    for (int dim = 0; dim < d; ++dim) {
        SolutionTerm slow;
        slow.factors.push_back({dim, 150.0 * kPi, true});
        slow.time = TimeFactorKind::CosOmega;
        slow.time_omega = kTwoPi;
        p.exact.terms.push_back(slow);
        SolutionTerm fast;
        fast.factors.push_back({dim, 300.0 * kPi, true});
        fast.time = TimeFactorKind::CosOmega;
        fast.time_omega = 2.0 * kTwoPi;
        p.exact.terms.push_back(fast);
    }
    return p;
}

}  // namespace

ProblemSpec make_wave6(bool corrected) {
    ProblemSpec p = make_wave(6, corrected);
    p.name = corrected ? "wave6d" : "wave6d-printed";
    return p;
}

ProblemSpec make_wave1(bool corrected) {
    ProblemSpec p = make_wave(1, corrected);
    p.name = corrected ? "wave1d" : "wave1d-printed";
    return p;
}

ProblemSpec make_helmholtz6(double lambda) {
    ProblemSpec p;
    p.kind = ProblemKind::Helmholtz;
    p.name = "helmholtz6d";
    p.spatial_dims = 6;
    p.exact.spatial_dims = 6;
    p.lambda = lambda;
    for (int dim = 0; dim < 6; ++dim) {
        SolutionTerm t;
        t.factors.push_back({dim, 360.0 * kPi, true});
        p.exact.terms.push_back(t);
    }
    return p;
}

ProblemSpec make_fit_axes(const std::vector<int>& ks) {
    ProblemSpec p;
    p.kind = ProblemKind::FitFunction;
    p.name = "fit-axes";
    p.spatial_dims = 2;
    p.exact.spatial_dims = 2;
    p.lambda_b = 0.0;  // pure regression: no boundary term
    p.n_boundary_per_face = 0;
    for (int dim = 0; dim < 2; ++dim)
        for (int k : ks) {
            SolutionTerm t;
            t.factors.push_back({dim, kTwoPi * k, true});
            p.exact.terms.push_back(t);
        }
    return p;
}

}  // namespace tnn
