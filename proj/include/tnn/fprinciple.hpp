#pragma once

// Spectral analysis of the shallow rank-r two-variable tensor network
//   Upsilon(x, y) = sum_j a_j tanh(wx_j x + bx_j) tanh(wy_j y + by_j):
// closed-form Fourier transform, gradients of the spectral loss |D|^2, the
// small-weight measure probe behind the low-frequency-first ordering, and the
// axis-spectrum fitting experiment on [0, 2 pi]^2.

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "tnn/model.hpp"
#include "tnn/spectrum.hpp"
#include "tnn/training.hpp"

namespace tnn {

// log(sinh(z)) for z > 0 without overflow: z + log1p(-exp(-2z)) - log 2.
double log_sinh(double z);
// coth(z) for z > 0 without overflow: 1 + 2 / expm1(2z).
double coth_positive(double z);

struct ShallowTnnParams {
    std::vector<double> a, wx, wy, bx, by;

    std::size_t rank() const { return a.size(); }
    void validate() const;  // equal sizes, all finite, nonzero weights
};

// Fourier transform (angular convention, F[g](k) = int g(x) e^{-ikx} dx) of
// one product unit a tanh(wx x + bx) tanh(wy y + by) at kx, ky != 0:
//   -pi^2 a e^{i(kx bx/wx + ky by/wy)} / (wx sinh(pi kx/(2wx)) wy sinh(pi ky/(2wy))).
// The w sinh(pi k/(2w)) factors are even in w, so the form covers both signs;
// overflowing sinh values collapse the unit to 0, its correct limit.
std::complex<double> unit_spectral_transform(double a, double wx, double wy, double bx,
                                             double by, double kx, double ky);
std::complex<double> spectral_transform(const ShallowTnnParams& p, double kx, double ky);

struct SpectralError {
    std::complex<double> value;  // D = F[Upsilon] - F[f]
    double modulus = 0.0;
    double phase = 0.0;
    std::vector<std::complex<double>> units;  // per-unit transform contributions
};

SpectralError spectral_error(const ShallowTnnParams& p, std::complex<double> target,
                             double kx, double ky);

// Gradients of L(kx, ky) = |D(kx, ky)|^2, one entry per unit.
struct SpectralGradients {
    std::vector<double> a, wx, wy, bx, by;
};

SpectralGradients spectral_loss_gradients(const ShallowTnnParams& p,
                                          std::complex<double> target, double kx,
                                          double ky);

// log |dL/dp| for the five parameters of unit j, in the order
// (a, wx, wy, bx, by), evaluated in log space so the comparison stays exact
// where sinh(pi k/(2w)) overflows the double range.
std::array<double, 5> log_gradient_magnitudes(const ShallowTnnParams& p, std::size_t j,
                                              std::complex<double> target, double kx,
                                              double ky);

// Rank-1 probe configuration: two frequency points with k2 > k1 > 0
// component-wise, fixed unit weight/biases, and fixed target spectrum values
// at the two points. target1 must be nonzero (it bounds |D(k1)| from below as
// the weights shrink).
struct Theorem1Config {
    double k1x = 1.0, k1y = 1.0;
    double k2x = 1.2, k2y = 1.2;
    double a = 1.0;
    double bx = 1.0, by = 1.0;
    std::complex<double> target1{1.0, 0.0};
    std::complex<double> target2{100.0, 0.0};
};

// Draws (wx, wy) uniform on (0, delta]^2 n times and returns the fraction of
// draws where |dL(k1)/dp| >= |dL(k2)/dp| simultaneously for all five
// parameter families: the measure that tends to 1 as delta -> 0.
double theorem1_measure_estimate(const Theorem1Config& cfg, double delta, std::size_t n,
                                 std::uint64_t seed);

// DFT of the assembled CP function mean-reduced along the other axis,
//   g(t) = sum_alpha W_alpha f_axis(domain t)[alpha] * mean_s f_other(domain s)[alpha],
// sampled at t = n/N on [0, 1). Bin k then corresponds to angular frequency k
// on [0, domain] when domain = 2 pi.
Spectrum1D axis_spectrum(const TnnModel& model, int axis, int n, double domain);

struct ToyFitConfig {
    int rank = 100;
    std::int64_t epochs = 20000;
    std::size_t batch = 1024;  // resampled uniformly on [0, 2 pi]^2 each epoch
    int record_every = 100;
    int dft_n = 256;
    std::vector<int> ks = {2, 4, 6};
    double threshold = 0.3;
    LrSchedule sched{1e-3, 0.98, 1000};
    double bias_init_std = 0.5;
    // Spread multiplier applied to the drawn first-layer weights and biases.
    // A unit tanh(wx+b) only reaches wavenumber k once |w| ~ k/2, so on a
    // one-wide input the fan-in-scaled draw must be widened for the high
    // peaks to become learnable within the epoch budget.
    double init_scale = 48.0;
    std::uint64_t seed = 1;
};

struct ToySnapshot {
    std::int64_t epoch = 0;
    double mse = 0.0;                      // batch loss entering this epoch
    std::vector<double> delta_x, delta_y;  // per entry of ks
};

struct ToyFitResult {
    std::vector<int> ks;
    double threshold = 0.3;
    std::vector<ToySnapshot> snapshots;
    // First recorded epoch with delta_k < threshold, per entry of ks; -1 when
    // the run never got there.
    std::vector<std::int64_t> first_below_x, first_below_y;
    std::optional<TnnModel> model;
};

// Fits the shallow rank-r CP network (single affine layer + tanh on the
// channel outputs) to f(x, y) = sum_k sin(k x) + sin(k y) on [0, 2 pi]^2 and
// tracks the per-frequency spectral errors
//   delta_k = |u_hat(k) - f_hat(k)| / |f_hat(k)|
// along both axes over training.
ToyFitResult toy_fit(const ToyFitConfig& cfg);

}  // namespace tnn
