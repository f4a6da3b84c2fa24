#pragma once

// Append-only evaluation tape over Jet2 values with a single reverse sweep for
// parameter gradients.
//
// Forward mode handles the per-coordinate derivatives (the jet slots); the
// tape's reverse sweep differentiates a scalar root with respect to every
// parameter slot it touches, propagating adjoints through all three jet slots.
// That matters because PDE residuals consume the d1/d2 slots, so a parameter's
// gradient includes paths through the derivative lanes (which brings third
// derivatives of activations into the reverse rules).
//
// Forward evaluation happens at push time, so a node's value is available the
// moment it is created and operand indices always precede their consumers.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tnn/jet.hpp"

namespace tnn {

using NodeId = std::int32_t;
using GradientBuffer = std::vector<double>;

enum class Op : std::uint8_t {
    Const,        // fixed jet (c0, 0, 0)
    Input,        // active input: (c0, 1, 0)
    Param,        // trainable scalar: (params[param], 0, 0)
    Add,          // a + b
    Sub,          // a - b
    Mul,          // jet product a * b
    Neg,          // -a
    Scale,        // c0 * a
    Shift,        // a + (c0, 0, 0)
    Act,          // activation applied to a; c0..c2 cache g', g'', g'''
    SlotV,        // (a.v, 0, 0)
    SlotD1,       // (a.d1, 0, 0)
    SlotD2,       // (a.d2, 0, 0)
    AffineRange,  // dot(params[param..param+b), vals[a..a+b)) + params[param+b]
    SumRange,     // sum of vals[a..a+b)
    DotPool,      // dot(params[param..param+b), vals[pool[a..a+b)]) -- no bias
    SumPool,      // sum of vals[pool[a..a+b)]
};

struct TapeNode {
    Op op;
    NodeId a = -1;          // operand id, range start, or pool offset
    std::int32_t b = -1;    // second operand id, or range/pool length
    std::int32_t param = -1;
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};

class Tape {
  public:
    explicit Tape(std::span<const double> params) : params_(params) {}

    // Drops all nodes (capacity kept) and rebinds the parameter vector.
    void reset(std::span<const double> params) {
        params_ = params;
        nodes_.clear();
        vals_.clear();
        pool_.clear();
    }

    std::size_t size() const { return nodes_.size(); }
    const Jet2& val(NodeId id) const { return vals_[check(id)]; }

    NodeId constant(double c);
    NodeId input(double x);
    // Input that remembers which coordinate it carries, so a recorded graph
    // can be replayed at other points (see TapeBatch).
    NodeId input(double x, std::int32_t index);
    NodeId param(std::int32_t slot);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId neg(NodeId a);
    NodeId scale(NodeId a, double s);
    NodeId shift(NodeId a, double c);
    NodeId activate(Activation act, NodeId a);
    NodeId slot_v(NodeId a);
    NodeId slot_d1(NodeId a);
    NodeId slot_d2(NodeId a);
    // One affine row: weights at params[base..base+count), bias at params[base+count],
    // inputs are the consecutive nodes [first, first+count).
    NodeId affine_range(NodeId first, std::int32_t count, std::int32_t param_base);
    NodeId sum_range(NodeId first, std::int32_t count);
    NodeId dot_pool(std::span<const NodeId> operands, std::int32_t param_base);
    NodeId sum_pool(std::span<const NodeId> operands);

    // Accumulates seed * d(root.v)/d(theta) into grad (sized to the parameter
    // vector). Returns the number of nodes visited, which is always root + 1:
    // the sweep is a single linear pass and touches each node exactly once.
    std::size_t reverse(NodeId root, double seed, GradientBuffer& grad) const;

    std::span<const TapeNode> nodes() const { return nodes_; }
    std::span<const NodeId> pool_ids() const { return pool_; }
    std::span<const double> bound_params() const { return params_; }

  private:
    std::size_t check(NodeId id) const;
    NodeId push(const TapeNode& n, Jet2 value);

    std::span<const double> params_;
    std::vector<TapeNode> nodes_;
    std::vector<Jet2> vals_;
    std::vector<NodeId> pool_;
    mutable std::vector<Jet2> adj_;
};

// Replays a recorded tape graph at chunks of points without rebuilding it.
//
// Residual graphs built by the model have the same shape at every point; only
// the Input leaves change. TapeBatch snapshots the node list once and then
// re-runs forward/reverse sweeps with the per-point state held in node-major
// arrays, which removes the per-point graph construction cost and lets the
// inner loops run over a small fixed chunk. Forward values and reverse
// accumulation follow the exact operation order of the single-point tape, so
// each point's result is bit-identical to a fresh build at that point.
//
// Preconditions: every Input node was recorded through input(x, index), and no
// node constant depends on the evaluation point (point-dependent shifts such
// as source terms must be applied by the caller outside the tape).
class TapeBatch {
  public:
    static constexpr std::size_t kChunk = 16;

    // Captures nodes [0, root] of a built tape. Parameter values are re-read
    // through the tape's bound span on every forward pass, so in-place
    // optimizer updates are seen without re-capturing.
    TapeBatch(const Tape& tape, NodeId root, std::int32_t dims);

    // Evaluates the captured graph at n <= kChunk points (row-major n x dims).
    void forward(std::span<const double> pts, std::size_t n);
    // Root value at point c of the last chunk.
    double value(std::size_t c) const { return v_[root_ * kChunk + c]; }
    // Full jet of any captured node at point c of the last chunk.
    Jet2 jet(NodeId id, std::size_t c) const;
    // Accumulates seeds[c] * d(root value at point c)/d(theta) into grad for
    // every point of the last chunk.
    void reverse(std::span<const double> seeds, std::size_t n, GradientBuffer& grad);

  private:
    std::vector<TapeNode> nodes_;
    std::vector<NodeId> pool_;
    std::span<const double> params_;
    std::size_t root_;
    std::int32_t dims_;
    std::size_t n_ = 0;
    // Node-major per-point state: slot [i * kChunk + c] belongs to node i at
    // chunk point c.
    std::vector<double> v_, d1_, d2_;     // forward jets
    std::vector<double> g1_, g2_, g3_;    // cached activation derivatives
    std::vector<double> av_, ad1_, ad2_;  // reverse adjoints
};

// Central-difference check of an analytic gradient. Returns the worst
// per-coordinate error |fd - grad| / max(|fd|, |grad|, scale_floor); the floor
// turns the comparison absolute for near-zero coordinates so finite-difference
// noise on dead directions does not dominate.
double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> params,
                         std::span<const double> analytic_grad,
                         double step = 1e-5,
                         double scale_floor = 1e-3);

}  // namespace tnn
