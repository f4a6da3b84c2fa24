#pragma once

// Tensor neural networks in CP and TT format.
//
// A model is d independent one-input sub-networks plus a combination rule.
// CP:  u(x) = sum_alpha W_alpha * prod_i  f_i(x_i)[alpha]
// TT:  u(x) = A_1(x_1) ... A_d(x_d),  A_i of shape r_{i-1} x r_i, r_0 = r_d = 1,
// where the sub-network of dimension i emits the entries of A_i row-major.
//
// All trainable parameters live in one flat vector; sub-network layers view
// into it through (in, out, offset) layout records with per-row blocks of
// `in` weights followed by the bias. The optional Fourier feature layer maps
// x -> [cos(2 pi b x); sin(2 pi b x)] over the dimension's frequency list.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tnn/jet.hpp"
#include "tnn/tape.hpp"

namespace tnn {

enum class Combiner : std::uint8_t { Cp, Tt };

enum class FeatureMode : std::uint8_t { None, Random, Adapted };

struct FeatureSpec {
    FeatureMode mode = FeatureMode::Random;
    int m = 50;                              // draws per dimension (Random)
    std::vector<double> sigma;               // per-dimension std dev; size 1 broadcasts
    std::vector<std::vector<int>> adapted;   // integer frequencies per dimension (Adapted)

    double sigma_for(int dim) const;
};

struct ModelConfig {
    Combiner combiner = Combiner::Cp;
    int dims = 1;
    int rank = 8;                   // CP separation rank
    std::vector<int> tt_ranks;      // interior TT ranks r_1..r_{d-1}
    std::vector<int> hidden;        // hidden layer widths
    Activation activation = Activation::TrigBlend;
    bool activate_output = false;   // apply the activation to the channel layer
    double bias_init_std = 0.0;
    FeatureSpec feature;
    std::uint64_t seed = 1;
};

struct LayerLayout {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;  // start of out*(in+1) doubles in the flat vector
};

struct SubnetLayout {
    std::vector<LayerLayout> layers;
    int feature_width = 0;  // sub-network input width
    int channels = 0;       // output width: r (CP) or r_{i-1}*r_i (TT)
};

struct ModelEval {
    double u = 0.0;
    std::vector<double> du;   // per input dimension
    std::vector<double> d2u;  // per input dimension
};

// Node ids of a model forward pass recorded on a tape.
struct TapeEval {
    NodeId u = -1;
    std::vector<NodeId> du;
    std::vector<NodeId> d2u;
};

class TnnModel {
  public:
    static TnnModel init(const ModelConfig& cfg);
    // New model with the given integer feature sets and fresh parameters.
    static TnnModel rebuild_with_frequencies(const ModelConfig& base,
                                             const std::vector<std::vector<int>>& freqs,
                                             std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    int dims() const { return cfg_.dims; }
    Combiner combiner() const { return cfg_.combiner; }
    // Full rank chain r_0..r_d (TT); empty for CP.
    const std::vector<int>& rank_chain() const { return ranks_; }
    int channels(int dim) const { return layout_[dim].channels; }
    const SubnetLayout& subnet(int dim) const { return layout_[dim]; }
    const std::vector<double>& feature_freqs(int dim) const { return freqs_[dim]; }

    std::size_t param_count() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::size_t cp_weight_offset() const { return w_offset_; }
    std::span<const double> cp_weights() const;

    // Channel jets of one sub-network at x (derivatives w.r.t. x).
    void eval_channels(int dim, double x, std::span<Jet2> out) const;
    // Value-only fast path used by spectra and batched evaluation.
    void eval_channels_value(int dim, double x, std::span<double> out) const;

    ModelEval eval(std::span<const double> point, bool want_derivs = true) const;
    double value(std::span<const double> point) const;
    // Row-major batch of n points; returns n values.
    std::vector<double> eval_batch(std::span<const double> pts, std::size_t n) const;

    // Records the forward pass for one point on the tape (which must be bound
    // to this model's parameter vector) and returns the root ids.
    TapeEval forward_tape(Tape& tape, std::span<const double> point, bool want_derivs = true) const;

    nlohmann::json to_json() const;
    static TnnModel from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static TnnModel load(const std::string& path);

  private:
    TnnModel() = default;
    void build_layout();

    ModelConfig cfg_;
    std::vector<int> ranks_;                 // r_0..r_d for TT
    std::vector<std::vector<double>> freqs_; // realized feature frequencies per dim
    std::vector<SubnetLayout> layout_;
    std::size_t w_offset_ = 0;               // CP output weights
    std::vector<double> params_;
};

// Combination rules on already-evaluated channel jets (everything needed for
// value, gradient and diagonal Hessian of u; no divisions, so exact zeros in
// channel values are harmless).
ModelEval cp_combine(const std::vector<std::vector<Jet2>>& channels,
                     std::span<const double> w, bool want_derivs = true);
ModelEval tt_combine(const std::vector<std::vector<Jet2>>& cores,
                     std::span<const int> ranks, bool want_derivs = true);

}  // namespace tnn
