#pragma once

// Loss assembly over per-point tapes, Adam with the staircase learning-rate
// schedule, the causal gate for the wave problem, Monte-Carlo error metrics,
// and the frequency-adaptive outer loop (train -> extract -> rebuild).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tnn/model.hpp"
#include "tnn/pde.hpp"
#include "tnn/spectrum.hpp"

namespace tnn {

struct LrSchedule {
    double base = 1e-3;
    double decay = 0.95;
    std::int64_t every = 1000;

    double at(std::int64_t step) const;
};

// Default staircase used by the PDE runs: 0.001 * 0.95^floor(step/1000).
double lr_at(std::int64_t step);

struct AdamState {
    std::vector<double> m, v;  // first/second moments, aligned with parameters
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void reset(std::size_t n);
    // Bias-corrected update; rejects non-finite gradients or mismatched sizes.
    void update(std::span<double> params, std::span<const double> grad, double lr);
};

// Causal gate for the wave problem. Interior residuals at time t are weighted
// by w(t) = (1 - tanh(slope * (t - mu))) / 2; the revealed horizon mu advances
// every epoch by advance * exp(-decay * L_r), so low residual loss opens the
// gate faster.
struct GateState {
    double mu = 0.0;
    double slope = 5.0;
    double advance = 0.002;
    double decay = 0.005;
};

double gate_weight(double t, const GateState& g);
// Advances g.mu and returns the increment, which lies in (0, advance].
double update_mu(GateState& g, double interior_loss);

struct LossBreakdown {
    double total = 0.0;
    double interior = 0.0;          // mean squared residual (gated for wave)
    double boundary = 0.0;          // mean squared boundary mismatch
    double initial_velocity = 0.0;  // wave: mean squared u_t(x,0)
    bool finite = true;
};

struct Batches {
    SampleBatch interior;
    SampleBatch boundary;
    SampleBatch initial;  // wave initial-velocity points, t = 0
};

// Loss evaluation strategy. Auto records the residual graph once and replays
// it across chunks of points whenever the graph has no point-dependent
// constants (time embeddings bake t into node coefficients, so those kinds
// rebuild regardless). Rebuild forces one tape per point; it is the reference
// implementation the replay path is checked against. Both produce the same
// loss bit for bit; only the gradient's accumulation order differs.
enum class LossPath : std::uint8_t { Auto, Rebuild };

// Loss and its parameter gradient in one pass. `grad` is resized/zeroed and
// accumulated in point order (deterministic). Weights come from the problem:
// total = interior + lambda_b * boundary + omega_ut * initial_velocity.
// Returns finite=false (without touching the remaining points) if any term
// stops being finite.
LossBreakdown assemble_loss(const ProblemSpec& prob, const TnnModel& model,
                            const Batches& b, const GateState* gate,
                            GradientBuffer& grad, LossPath path = LossPath::Auto);

struct TrainConfig {
    std::int64_t epochs = 1000;
    LrSchedule sched;
    std::uint64_t seed = 1;
    bool resample_every_epoch = true;  // fixed-sample mode for debugging when off
};

struct EpochRecord {
    std::int64_t epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;  // of the parameters entering this epoch, pre-update
    double mu = 0.0;     // gate horizon in effect this epoch (0 when unused)
};

struct TrainResult {
    std::vector<EpochRecord> records;
    std::int64_t epochs_run = 0;  // completed optimizer steps
    bool aborted = false;         // non-finite loss; model keeps last finite state
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Resample -> loss -> gradient -> Adam step per epoch; wave updates the gate
// horizon each epoch. Fresh optimizer state per call.
TrainResult train(const ProblemSpec& prob, TnnModel& model, const TrainConfig& cfg,
                  const EpochCallback& cb = {});

// Monte-Carlo relative L2 error sqrt(sum (u - u_exact)^2 / sum u_exact^2) over
// n seeded uniform points (time-dependent problems sample Omega x (0, T]).
double relative_l2(const ProblemSpec& prob, const TnnModel& model, std::size_t n,
                   std::uint64_t seed);
double relative_l2(const ProblemSpec& prob,
                   const std::function<double(std::span<const double>)>& u,
                   std::size_t n, std::uint64_t seed);

// |u_model - u_exact| at 1600 seeded points, row-major into a 40 x 40 grid.
std::vector<double> pointwise_error_grid(const ProblemSpec& prob, const TnnModel& model,
                                         std::uint64_t seed);

struct AdaptiveConfig {
    ModelConfig model;   // It = 0 architecture; model.seed is the run seed
    TrainConfig train;   // per-step schedule, restarted from scratch every step
    int iterations = 4;  // adaptive rebuilds after the initial fit (I)
    int top_m = 0;       // dominant bins per component; 0 = problem default
    int dft_n = 4096;
    std::size_t union_cap = 200;
    bool stop_on_equal = true;    // exact per-dimension set equality
    double jaccard_stop = 0.0;    // > 0: also stop when mean Jaccard >= value
    std::size_t eval_n = 65536;   // Monte-Carlo points behind each E_rel
};

struct AdaptiveStep {
    int iteration = 0;
    std::uint64_t step_seed = 0;      // drives this step's init and batches
    FrequencySets used;               // integer sets trained with (empty at It=0)
    FrequencySets extracted;          // per-dimension union extracted afterwards
    double e_rel = 0.0;
    double wall_seconds = 0.0;
    std::size_t dft_samples = 0;      // component evaluations spent on spectra
    std::vector<Spectrum1D> averaged; // per-dimension channel-mean spectra
    TrainResult training;
};

struct RunHistory {
    std::vector<AdaptiveStep> steps;
    bool stopped_early = false;  // extracted sets reproduced the used sets
    bool aborted = false;
};

using StepCallback = std::function<void(const AdaptiveStep&, const TnnModel&)>;

// Full adaptive loop: for It = 0..I train a fresh model (It = 0 with the
// configured feature mode, later steps rebuilt from the previous extraction),
// record E_rel and per-dimension spectra, extract the next frequency sets, and
// stop early when they reproduce the sets in use. The callback fires after
// each completed step with the step record and the trained model.
RunHistory adaptive_solve(const ProblemSpec& prob, const AdaptiveConfig& cfg,
                          const StepCallback& on_step = {},
                          const EpochCallback& on_epoch = {});

}  // namespace tnn
