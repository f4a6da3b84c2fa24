#pragma once

// Benchmark problems on (0,1)^d (optionally x (0,T]) with manufactured
// solutions built from sums of separable sinusoid terms, so sources, boundary
// data and every derivative the residuals need exist in closed form and are
// never hand-typed per problem.
//
// Time-dependent problems use the initial-condition-exact ansatz
//   u(x, t) = h(x) + t * N(x, t),
// where h is the initial state and N the network; residuals are expressed in
// derivatives of u, and apply_time_embedding converts between the two.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tnn/model.hpp"

namespace tnn {

enum class ProblemKind : std::uint8_t { Poisson, Helmholtz, Heat, Wave, FitFunction };

struct TrigFactor {
    int dim = 0;        // spatial dimension index
    double omega = 0;   // trig(omega * x_dim)
    bool is_sin = true;
};

enum class TimeFactorKind : std::uint8_t { None, ExpDecay, CosOmega };

struct SolutionTerm {
    double coeff = 1.0;
    std::vector<TrigFactor> factors;  // at most one factor per dimension
    TimeFactorKind time = TimeFactorKind::None;
    double time_omega = 0.0;  // CosOmega: cos(time_omega * t)
};

struct ManufacturedSolution {
    int spatial_dims = 0;
    bool has_time = false;
    std::vector<SolutionTerm> terms;

    double value(std::span<const double> p) const;
    double d1(std::span<const double> p, int dim) const;
    double d2(std::span<const double> p, int dim) const;
    double dt(std::span<const double> p) const;
    double dtt(std::span<const double> p) const;
    // Largest |omega| acting on a dimension (time: dim == spatial_dims); used
    // to scale finite-difference steps.
    double max_omega(int dim) const;
};

struct ProblemSpec {
    ProblemKind kind = ProblemKind::Poisson;
    std::string name;
    int spatial_dims = 1;
    double t_final = 1.0;
    ManufacturedSolution exact;
    std::vector<double> diffusivity;  // Heat: per-dimension coefficients
    double wave_c2 = 0.0;
    double lambda = 0.0;  // Helmholtz

    // Training defaults carried with the problem; run configs may override.
    double lambda_b = 100.0;   // boundary loss weight
    double omega_u = 0.0;      // wave initial-value weight (inert: the ansatz
                               // u = h + t N satisfies u(x,0) = h identically)
    double omega_ut = 0.0;     // wave initial-velocity weight
    std::size_t n_interior = 4000;
    std::size_t n_boundary_per_face = 100;
    std::size_t n_initial = 1000;  // wave initial-velocity batch
    int top_m = 10;                // dominant frequencies kept per component

    bool has_time() const { return kind == ProblemKind::Heat || kind == ProblemKind::Wave; }
    int input_dims() const { return spatial_dims + (has_time() ? 1 : 0); }

    // Right-hand side f. Poisson/Helmholtz generate it from the manufactured
    // solution; heat/wave are homogeneous; FitFunction returns the target.
    double source(std::span<const double> p) const;
    // Dirichlet data g: the manufactured solution's trace.
    double dirichlet(std::span<const double> p) const;
    // Initial state h(x) = u(x, 0) and its per-dimension second derivative.
    double initial(std::span<const double> x) const;
    double initial_d1(std::span<const double> x, int dim) const;
    double initial_d2(std::span<const double> x, int dim) const;

    // PDE residual for an evaluation of u itself (already embedded).
    double residual_of(const ModelEval& u, std::span<const double> p) const;
    // u_model(point) - g(point); the point must lie on a spatial face.
    double boundary_residual(double u_value, std::span<const double> p) const;
    // Wave only: residual of the initial velocity condition, which the
    // embedded ansatz reduces to N(x, 0).
    double initial_time_derivative_residual(double n_value_at_t0) const;
};

// Maps an evaluation of N(x,t) to an evaluation of u = h + t N (identity for
// problems without time embedding).
ModelEval apply_time_embedding(const ProblemSpec& prob, const ModelEval& n_eval,
                               std::span<const double> p);
// Value of the modeled solution u at a point (embedding-aware).
double model_u_value(const ProblemSpec& prob, const TnnModel& model, std::span<const double> p);

struct SampleBatch {
    std::size_t n = 0;
    int dims = 0;
    std::vector<double> pts;  // row-major n x dims

    std::span<const double> point(std::size_t i) const {
        return {pts.data() + i * static_cast<std::size_t>(dims), static_cast<std::size_t>(dims)};
    }
};

SampleBatch sample_interior(const ProblemSpec& prob, std::size_t n, std::uint64_t seed);
// 2 * spatial_dims faces, per_face points each, face coordinate exactly 0 or 1.
SampleBatch sample_boundary(const ProblemSpec& prob, std::size_t per_face, std::uint64_t seed);
// Points at t = 0 (wave initial-velocity term).
SampleBatch sample_initial(const ProblemSpec& prob, std::size_t n, std::uint64_t seed);

struct ManufacturedReport {
    double scale = 0.0;                  // magnitude of the operator terms
    double max_residual_rel = 0.0;       // closed-form residual / scale
    double max_fd_residual_rel = 0.0;    // residual with finite-difference derivatives
    double max_derivative_mismatch = 0.0;
    bool pass = false;
};

// Checks that the manufactured pair (exact, f, g) actually satisfies the PDE:
// closed-form derivatives must cancel to ~machine precision (scale-relative
// tol_rel), and an independent finite-difference route must agree.
ManufacturedReport verify_manufactured(const ProblemSpec& prob, std::size_t n,
                                       std::uint64_t seed, double tol_rel = 1e-6);

// Monte-Carlo estimate of the mean of u_exact^2 over the domain.
double exact_sq_norm(const ProblemSpec& prob, std::size_t n, std::uint64_t seed);

// Named benchmark problems.
ProblemSpec make_poisson_product3(int k1, int k2);        // three two-scale product terms
ProblemSpec make_poisson_additive12(std::vector<int> ks, std::vector<double> amps);
ProblemSpec make_poisson_two_scale(int d, int k);         // sum_i sin(2 pi x_i) + 0.1 sin(k pi x_i)
ProblemSpec make_poisson_product_single(const std::vector<int>& ks);  // prod_i sin(2 pi k_i x_i)
ProblemSpec make_heat6(bool corrected);
ProblemSpec make_wave6(bool corrected);
ProblemSpec make_wave1(bool corrected);                   // one-dimensional variant
ProblemSpec make_helmholtz6(double lambda);
ProblemSpec make_fit_axes(const std::vector<int>& ks);    // 2-D regression target

}  // namespace tnn
