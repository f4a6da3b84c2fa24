#pragma once

// Frequency diagnostics for component functions: uniform-grid DFT, dominant
// bin extraction, per-dimension unions, and the product-structure containment
// check for assembled CP functions.
//
// Convention: for N samples f(n/N) on [0,1), coeff[k] = (1/N) sum_n f_n
// exp(-2 pi i k n / N), so a unit-amplitude integer tone sin(2 pi k x) puts
// magnitude 0.5 into bin k exactly.

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tnn/model.hpp"

namespace tnn {

struct Spectrum1D {
    int n = 0;                                 // sample count (power of two)
    std::vector<std::complex<double>> coeff;   // bins 0..n/2, kept for diagnostics
    std::vector<double> magnitude;             // |coeff|, bins 0..n/2
};

// In-place radix-2 decimation-in-time FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

Spectrum1D dft_uniform(std::span<const double> samples);

// Indices of the m largest-magnitude bins among k = 1..n/2 (k = 0 never
// qualifies), sorted ascending; ties prefer the smaller k.
std::vector<int> top_m_frequencies(const Spectrum1D& s, int m);

// Union of per-channel dominant sets for one dimension. If the union exceeds
// cap, the cap frequencies with the largest aggregate importance (summed
// channel magnitude, indexed by bin) are kept. Output sorted ascending.
std::vector<int> union_dimension_frequencies(const std::vector<std::vector<int>>& sets,
                                             std::span<const double> importance,
                                             std::size_t cap);

struct FrequencySets {
    int iteration = 0;
    std::vector<std::vector<int>> sets;  // one sorted ascending set per dimension
};

bool freqsets_equal(const FrequencySets& a, const FrequencySets& b);
nlohmann::json freqsets_to_json(const FrequencySets& f);
FrequencySets freqsets_from_json(const nlohmann::json& j);

// Spectrum of one component function x -> f_dim(x)[channel] on n grid points.
Spectrum1D component_spectrum(const TnnModel& model, int dim, int channel, int n);

struct DimensionSpectra {
    std::vector<Spectrum1D> per_channel;
    Spectrum1D average;                 // magnitude = mean over channels
    std::size_t samples_evaluated = 0;  // cost accounting: channels * n
};

DimensionSpectra dimension_spectra(const TnnModel& model, int dim, int n);

// Mean magnitude across channel spectra (all must share n).
Spectrum1D average_amplitude(const std::vector<Spectrum1D>& spectra);

// One band-limited factor f(x) = sum_j amp_j * trig(2 pi k_j x).
struct BandFactor {
    std::vector<int> freqs;
    std::vector<double> amps;
    std::vector<bool> use_sin;
    double eval(double x) const;
};

struct ContainmentReport {
    bool contained = true;
    std::vector<std::vector<int>> observed;  // per-dimension support of the assembled function
    std::vector<std::vector<int>> allowed;   // per-dimension union of factor supports
};

// Assembles F = sum_alpha prod_i factors[alpha][i] on a d-dimensional grid
// (d <= 3), takes the full d-dimensional DFT, and verifies that every
// frequency observed along dimension i (magnitude > tol) lies in the union of
// that dimension's factor supports.
ContainmentReport product_frequency_containment(
    const std::vector<std::vector<BandFactor>>& factors, int grid_n, double tol);

}  // namespace tnn
