#pragma once

// Order-2 univariate jets: each value carries (v, dv/dx, d2v/dx2) with respect
// to one scalar input. Separable tensor networks only ever need derivatives of
// a sub-network with respect to its own coordinate, so this is the whole
// forward-mode story; mixing across coordinates happens after slot extraction.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace tnn {

struct Jet2 {
    double v = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

enum class Activation : std::uint8_t { Tanh, Sin, Cos, TrigBlend };

Activation activation_from_string(const std::string& name);
const char* to_string(Activation a);

// g together with its first three derivatives at v. The third derivative is
// needed by the reverse sweep: the d2 slot of an activated jet depends on the
// operand value through g'' and g'''.
struct ActDerivs {
    double g = 0.0;
    double g1 = 0.0;
    double g2 = 0.0;
    double g3 = 0.0;
};

inline ActDerivs activation_derivs(Activation a, double v) {
    switch (a) {
        case Activation::Tanh: {
            const double t = std::tanh(v);
            const double s = 1.0 - t * t;  // sech^2
            return {t, s, -2.0 * t * s, (-2.0 + 6.0 * t * t) * s};
        }
        case Activation::Sin: {
            const double s = std::sin(v), c = std::cos(v);
            return {s, c, -s, -c};
        }
        case Activation::Cos: {
            const double s = std::sin(v), c = std::cos(v);
            return {c, -s, -c, s};
        }
        case Activation::TrigBlend: {
            // phi(x) = 0.5 sin(x) + 0.5 cos(x)
            const double s = std::sin(v), c = std::cos(v);
            return {0.5 * (s + c), 0.5 * (c - s), -0.5 * (s + c), -0.5 * (c - s)};
        }
    }
    throw std::logic_error("unknown activation");
}

inline Jet2 jet_lift(double x, bool active) {
    if (!std::isfinite(x)) throw std::invalid_argument("jet_lift: non-finite input");
    return {x, active ? 1.0 : 0.0, 0.0};
}

inline Jet2 operator+(Jet2 a, Jet2 b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2}; }
inline Jet2 operator-(Jet2 a, Jet2 b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2}; }
inline Jet2 operator-(Jet2 a) { return {-a.v, -a.d1, -a.d2}; }
inline Jet2 operator*(double s, Jet2 a) { return {s * a.v, s * a.d1, s * a.d2}; }
inline Jet2 operator*(Jet2 a, double s) { return s * a; }

// Truncated Taylor product.
inline Jet2 operator*(Jet2 a, Jet2 b) {
    return {a.v * b.v,
            a.d1 * b.v + a.v * b.d1,
            a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
}

// Chain rule through g: (g(v), g'(v) d1, g''(v) d1^2 + g'(v) d2).
inline Jet2 jet_activate(Activation a, Jet2 x) {
    const ActDerivs d = activation_derivs(a, x.v);
    return {d.g, d.g1 * x.d1, d.g2 * x.d1 * x.d1 + d.g1 * x.d2};
}

}  // namespace tnn
