#pragma once

// Two-level quantum states, Hermitian observables and the Born rule.
// Everything is closed-form: a 2x2 Hermitian matrix has an explicit
// eigendecomposition, so no linear-algebra dependency is needed.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>

#include "loopsim/errors.hpp"

namespace loopsim {

using Complex = std::complex<double>;

inline constexpr double kHermiticityTolerance = 1e-12;
inline constexpr double kNormTolerance = 1e-9;
inline constexpr double kCollapseProbabilityFloor = 1e-15;
inline constexpr double kDefaultCommutatorThreshold = 1e-9;

struct QubitState {
    Complex a0{1.0, 0.0};
    Complex a1{0.0, 0.0};

    double norm_squared() const { return std::norm(a0) + std::norm(a1); }

    bool is_normalized(double tol = kNormTolerance) const {
        return std::abs(norm_squared() - 1.0) <= tol;
    }

    // Builds a normalized state; rejects the zero vector.
    static QubitState normalized(Complex a0, Complex a1) {
        const double n2 = std::norm(a0) + std::norm(a1);
        if (!(n2 > 0.0) || !std::isfinite(n2)) {
            throw UnnormalizedStateError("cannot normalize state: zero or non-finite amplitudes");
        }
        const double inv = 1.0 / std::sqrt(n2);
        return QubitState{a0 * inv, a1 * inv};
    }
};

inline void require_normalized(const QubitState& s) {
    if (!s.is_normalized()) {
        throw UnnormalizedStateError("state norm^2 = " + std::to_string(s.norm_squared()) +
                                     " is not 1");
    }
}

// 2x2 Hermitian operator, row-major storage {m00, m01, m10, m11}.
struct Observable {
    std::array<Complex, 4> m{Complex{1, 0}, Complex{0, 0}, Complex{0, 0}, Complex{-1, 0}};

    bool is_hermitian(double tol = kHermiticityTolerance) const {
        return std::abs(m[0].imag()) <= tol && std::abs(m[3].imag()) <= tol &&
               std::abs(m[1] - std::conj(m[2])) <= tol;
    }

    static Observable from_matrix(const std::array<Complex, 4>& entries) {
        Observable o{entries};
        if (!o.is_hermitian()) {
            throw NonHermitianError("observable matrix is not Hermitian");
        }
        return o;
    }

    // n . sigma for a Bloch direction (nx, ny, nz); the direction is normalized.
    static Observable bloch(double nx, double ny, double nz) {
        const double n = std::sqrt(nx * nx + ny * ny + nz * nz);
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw DomainError("Bloch direction must be a non-zero finite vector");
        }
        nx /= n;
        ny /= n;
        nz /= n;
        return Observable{{Complex{nz, 0}, Complex{nx, -ny}, Complex{nx, ny}, Complex{-nz, 0}}};
    }
};

inline Observable pauli_x() { return Observable{{Complex{0, 0}, Complex{1, 0}, Complex{1, 0}, Complex{0, 0}}}; }
inline Observable pauli_y() { return Observable{{Complex{0, 0}, Complex{0, -1}, Complex{0, 1}, Complex{0, 0}}}; }
inline Observable pauli_z() { return Observable{{Complex{1, 0}, Complex{0, 0}, Complex{0, 0}, Complex{-1, 0}}}; }

namespace detail {

// Global-phase convention: first amplitude above tolerance is made
// real-positive, so eigenvectors (and therefore collapsed states and golden
// files) are reproducible bit for bit.
inline QubitState phase_fixed(Complex a0, Complex a1) {
    const double n = std::sqrt(std::norm(a0) + std::norm(a1));
    a0 /= n;
    a1 /= n;
    const Complex lead = std::abs(a0) > 1e-12 ? a0 : a1;
    const Complex rot = std::conj(lead) / std::abs(lead);
    return QubitState{a0 * rot, a1 * rot};
}

}  // namespace detail

struct EigenSystem {
    std::array<double, 2> eigenvalues{};        // sorted descending
    std::array<QubitState, 2> eigenvectors{};   // orthonormal, phase-fixed
    bool degenerate = false;
};

// Closed-form eigendecomposition of a 2x2 Hermitian matrix
// [[a, b], [conj(b), d]]: eigenvalues (a+d)/2 +- sqrt(((a-d)/2)^2 + |b|^2).
// Index 0 always refers to the larger eigenvalue.
inline EigenSystem eigendecompose(const Observable& obs) {
    if (!obs.is_hermitian()) {
        throw NonHermitianError("eigendecompose requires a Hermitian observable");
    }
    const double a = obs.m[0].real();
    const double d = obs.m[3].real();
    const Complex b = obs.m[1];
    const double half_diff = 0.5 * (a - d);
    const double half_sum = 0.5 * (a + d);
    const double r = std::hypot(half_diff, std::abs(b));

    EigenSystem sys;
    sys.eigenvalues = {half_sum + r, half_sum - r};

    const double scale = std::max({std::abs(a), std::abs(d), std::abs(b), 1.0});
    if (r <= 1e-14 * scale) {
        // Degenerate: any orthonormal basis is valid; use the standard one.
        sys.degenerate = true;
        sys.eigenvectors = {QubitState{Complex{1, 0}, Complex{0, 0}},
                            QubitState{Complex{0, 0}, Complex{1, 0}}};
        return sys;
    }
    if (std::abs(b) <= 1e-15 * scale) {
        // Diagonal matrix: basis vectors ordered by eigenvalue.
        if (a >= d) {
            sys.eigenvectors = {QubitState{Complex{1, 0}, Complex{0, 0}},
                                QubitState{Complex{0, 0}, Complex{1, 0}}};
        } else {
            sys.eigenvectors = {QubitState{Complex{0, 0}, Complex{1, 0}},
                                QubitState{Complex{1, 0}, Complex{0, 0}}};
        }
        return sys;
    }
    // For eigenvalue w, both (b, w - a) and (w - d, conj(b)) are eigenvectors;
    // pick per eigenvalue the variant with the larger norm for stability.
    const auto vector_for = [&](double w) {
        const Complex u0 = b, u1 = Complex{w - a, 0.0};
        const Complex v0 = Complex{w - d, 0.0}, v1 = std::conj(b);
        if (std::norm(u0) + std::norm(u1) >= std::norm(v0) + std::norm(v1)) {
            return detail::phase_fixed(u0, u1);
        }
        return detail::phase_fixed(v0, v1);
    };
    sys.eigenvectors = {vector_for(sys.eigenvalues[0]), vector_for(sys.eigenvalues[1])};
    return sys;
}

inline Complex inner_product(const QubitState& bra, const QubitState& ket) {
    return std::conj(bra.a0) * ket.a0 + std::conj(bra.a1) * ket.a1;
}

// P(outcome) = |<state|eigvec>|^2.
inline double born_probability(const QubitState& state, const EigenSystem& eig, int outcome_index) {
    require_normalized(state);
    if (outcome_index != 0 && outcome_index != 1) {
        throw DomainError("outcome_index must be 0 or 1");
    }
    return std::norm(inner_product(state, eig.eigenvectors[static_cast<std::size_t>(outcome_index)]));
}

inline double expectation(const QubitState& state, const Observable& obs) {
    require_normalized(state);
    if (!obs.is_hermitian()) {
        throw NonHermitianError("expectation requires a Hermitian observable");
    }
    const Complex r0 = obs.m[0] * state.a0 + obs.m[1] * state.a1;
    const Complex r1 = obs.m[2] * state.a0 + obs.m[3] * state.a1;
    const Complex value = std::conj(state.a0) * r0 + std::conj(state.a1) * r1;
    return value.real();
}

// Projective collapse onto the selected eigenvector. The returned state uses
// the same fixed phase convention as eigendecompose, so collapsing twice onto
// the same outcome is an exact no-op.
inline QubitState collapse(const QubitState& state, const EigenSystem& eig, int outcome_index) {
    const double p = born_probability(state, eig, outcome_index);
    if (p < kCollapseProbabilityFloor) {
        throw ZeroProbabilityCollapseError("collapse onto an outcome with probability " +
                                           std::to_string(p));
    }
    return eig.eigenvectors[static_cast<std::size_t>(outcome_index)];
}

// Frobenius norm of AB - BA. Zero for commuting observables.
inline double commutator_norm(const Observable& a, const Observable& b) {
    if (!a.is_hermitian() || !b.is_hermitian()) {
        throw NonHermitianError("commutator_norm requires Hermitian observables");
    }
    const auto mul = [](const std::array<Complex, 4>& x, const std::array<Complex, 4>& y) {
        return std::array<Complex, 4>{x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3],
                                      x[2] * y[0] + x[3] * y[2], x[2] * y[1] + x[3] * y[3]};
    };
    const auto ab = mul(a.m, b.m);
    const auto ba = mul(b.m, a.m);
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        sum += std::norm(ab[i] - ba[i]);
    }
    return std::sqrt(sum);
}

}  // namespace loopsim
