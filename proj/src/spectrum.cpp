#include "tnn/spectrum.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tnn {

void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two");
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

Spectrum1D dft_uniform(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2 || (n & (n - 1)) != 0)
        throw std::invalid_argument("dft_uniform: sample count must be a power of two >= 2");
    std::vector<std::complex<double>> a(samples.begin(), samples.end());
    fft_inplace(a);
    Spectrum1D s;
    s.n = static_cast<int>(n);
    const std::size_t half = n / 2;
    s.coeff.resize(half + 1);
    s.magnitude.resize(half + 1);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k <= half; ++k) {
        s.coeff[k] = a[k] * inv;
        s.magnitude[k] = std::abs(s.coeff[k]);
    }
    return s;
}

std::vector<int> top_m_frequencies(const Spectrum1D& s, int m) {
    if (m < 1) throw std::invalid_argument("top_m_frequencies: m must be >= 1");
    const int half = s.n / 2;
    std::vector<int> idx;
    for (int k = 1; k <= half; ++k) idx.push_back(k);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (s.magnitude[static_cast<std::size_t>(a)] != s.magnitude[static_cast<std::size_t>(b)])
            return s.magnitude[static_cast<std::size_t>(a)] > s.magnitude[static_cast<std::size_t>(b)];
        return a < b;  // ties toward the smaller frequency
    });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(m)));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<int> union_dimension_frequencies(const std::vector<std::vector<int>>& sets,
                                             std::span<const double> importance,
                                             std::size_t cap) {
    if (cap == 0) throw std::invalid_argument("union_dimension_frequencies: cap must be >= 1");
    std::vector<int> u;
    for (const auto& s : sets) u.insert(u.end(), s.begin(), s.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    if (u.size() > cap) {
        auto weight = [&](int k) {
            return k >= 0 && static_cast<std::size_t>(k) < importance.size()
                       ? importance[static_cast<std::size_t>(k)]
                       : 0.0;
        };
        std::stable_sort(u.begin(), u.end(), [&](int a, int b) {
            if (weight(a) != weight(b)) return weight(a) > weight(b);
            return a < b;
        });
        u.resize(cap);
        std::sort(u.begin(), u.end());
    }
    return u;
}

bool freqsets_equal(const FrequencySets& a, const FrequencySets& b) {
    if (a.sets.size() != b.sets.size())
        throw std::invalid_argument("freqsets_equal: dimension counts differ");
    return a.sets == b.sets;  // sets are normalized: sorted ascending, unique
}

nlohmann::json freqsets_to_json(const FrequencySets& f) {
    return nlohmann::json{{"It", f.iteration}, {"sets", f.sets}};
}

FrequencySets freqsets_from_json(const nlohmann::json& j) {
    FrequencySets f;
    f.iteration = j.at("It").get<int>();
    f.sets = j.at("sets").get<std::vector<std::vector<int>>>();
    for (auto& s : f.sets)
        if (!std::is_sorted(s.begin(), s.end()))
            throw std::invalid_argument("frequency sets: dimensions must be sorted ascending");
    return f;
}

Spectrum1D component_spectrum(const TnnModel& model, int dim, int channel, int n) {
    if (dim < 0 || dim >= model.dims()) throw std::out_of_range("component_spectrum: bad dimension");
    if (channel < 0 || channel >= model.channels(dim))
        throw std::out_of_range("component_spectrum: bad channel");
    std::vector<double> samples(static_cast<std::size_t>(n));
    std::vector<double> ch(static_cast<std::size_t>(model.channels(dim)));
    for (int i = 0; i < n; ++i) {
        model.eval_channels_value(dim, static_cast<double>(i) / n, ch);
        samples[static_cast<std::size_t>(i)] = ch[static_cast<std::size_t>(channel)];
    }
    return dft_uniform(samples);
}

DimensionSpectra dimension_spectra(const TnnModel& model, int dim, int n) {
    if (dim < 0 || dim >= model.dims()) throw std::out_of_range("dimension_spectra: bad dimension");
    const int c = model.channels(dim);
    DimensionSpectra out;
    out.per_channel.resize(static_cast<std::size_t>(c));
    // One sweep over the grid evaluates every channel at once.
    std::vector<std::vector<double>> samples(static_cast<std::size_t>(c),
                                             std::vector<double>(static_cast<std::size_t>(n)));
    std::vector<double> ch(static_cast<std::size_t>(c));
    for (int i = 0; i < n; ++i) {
        model.eval_channels_value(dim, static_cast<double>(i) / n, ch);
        for (int a = 0; a < c; ++a) samples[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] = ch[static_cast<std::size_t>(a)];
    }
    for (int a = 0; a < c; ++a) out.per_channel[static_cast<std::size_t>(a)] = dft_uniform(samples[static_cast<std::size_t>(a)]);
    out.average = average_amplitude(out.per_channel);
    out.samples_evaluated = static_cast<std::size_t>(c) * static_cast<std::size_t>(n);
    return out;
}

Spectrum1D average_amplitude(const std::vector<Spectrum1D>& spectra) {
    if (spectra.empty()) throw std::invalid_argument("average_amplitude: no spectra");
    Spectrum1D avg;
    avg.n = spectra[0].n;
    avg.magnitude.assign(spectra[0].magnitude.size(), 0.0);
    for (const auto& s : spectra) {
        if (s.n != avg.n) throw std::invalid_argument("average_amplitude: mixed lengths");
        for (std::size_t k = 0; k < avg.magnitude.size(); ++k) avg.magnitude[k] += s.magnitude[k];
    }
    const double inv = 1.0 / static_cast<double>(spectra.size());
    for (double& v : avg.magnitude) v *= inv;
    return avg;
}

double BandFactor::eval(double x) const {
    double v = 0.0;
    for (std::size_t j = 0; j < freqs.size(); ++j) {
        const double th = 2.0 * std::numbers::pi * freqs[j] * x;
        v += amps[j] * (use_sin[j] ? std::sin(th) : std::cos(th));
    }
    return v;
}

ContainmentReport product_frequency_containment(
    const std::vector<std::vector<BandFactor>>& factors, int grid_n, double tol) {
    if (factors.empty()) throw std::invalid_argument("containment: no terms");
    const std::size_t d = factors[0].size();
    if (d == 0 || d > 3) throw std::invalid_argument("containment: 1 <= d <= 3 supported");
    for (const auto& term : factors)
        if (term.size() != d) throw std::invalid_argument("containment: ragged factor table");
    if (grid_n < 2 || (grid_n & (grid_n - 1)) != 0)
        throw std::invalid_argument("containment: grid size must be a power of two");

    // Sample the assembled CP function on the full grid.
    const auto n = static_cast<std::size_t>(grid_n);
    std::size_t total = 1;
    for (std::size_t i = 0; i < d; ++i) total *= n;
    std::vector<std::complex<double>> grid(total, 0.0);
    std::vector<std::vector<double>> fac(factors.size() * d, std::vector<double>(n));
    for (std::size_t a = 0; a < factors.size(); ++a)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t g = 0; g < n; ++g)
                fac[a * d + i][g] = factors[a][i].eval(static_cast<double>(g) / grid_n);
    std::vector<std::size_t> ix(d, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t i = d; i-- > 0;) {
            ix[i] = rem % n;
            rem /= n;
        }
        double v = 0.0;
        for (std::size_t a = 0; a < factors.size(); ++a) {
            double p = 1.0;
            for (std::size_t i = 0; i < d; ++i) p *= fac[a * d + i][ix[i]];
            v += p;
        }
        grid[flat] = v;
    }

    // Full d-dimensional DFT: 1-D FFTs applied along each axis in turn.
    std::vector<std::complex<double>> line(n);
    std::size_t stride = 1;
    for (std::size_t axis = d; axis-- > 0;) {
        const std::size_t lines = total / n;
        for (std::size_t l = 0; l < lines; ++l) {
            // Decompose the line index into the position of the axis-0 element.
            const std::size_t block = l / stride;
            const std::size_t inner = l % stride;
            const std::size_t base = block * stride * n + inner;
            for (std::size_t g = 0; g < n; ++g) line[g] = grid[base + g * stride];
            fft_inplace(line);
            for (std::size_t g = 0; g < n; ++g) grid[base + g * stride] = line[g];
        }
        stride *= n;
    }
    const double scale = 1.0 / static_cast<double>(total);

    ContainmentReport rep;
    rep.observed.resize(d);
    rep.allowed.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<int> allowed;
        for (const auto& term : factors)
            allowed.insert(allowed.end(), term[i].freqs.begin(), term[i].freqs.end());
        std::sort(allowed.begin(), allowed.end());
        allowed.erase(std::unique(allowed.begin(), allowed.end()), allowed.end());
        rep.allowed[i] = allowed;
    }
    // Dimension-i support: folded bin k in 1..n/2 (or 0) appears if any grid
    // coefficient with that axis index (k or n-k) exceeds tol.
    std::vector<std::vector<char>> seen(d, std::vector<char>(n / 2 + 1, 0));
    for (std::size_t flat = 0; flat < total; ++flat) {
        if (std::abs(grid[flat]) * scale <= tol) continue;
        std::size_t rem = flat;
        for (std::size_t i = d; i-- > 0;) {
            std::size_t k = rem % n;
            rem /= n;
            if (k > n / 2) k = n - k;
            seen[i][k] = 1;
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k <= n / 2; ++k)
            if (seen[i][k]) rep.observed[i].push_back(static_cast<int>(k));
        for (int k : rep.observed[i])
            if (!std::binary_search(rep.allowed[i].begin(), rep.allowed[i].end(), k) && k != 0)
                rep.contained = false;
    }
    return rep;
}

}  // namespace tnn
