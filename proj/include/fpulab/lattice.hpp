#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fpulab/errors.hpp"
#include "fpulab/util.hpp"

namespace fpulab {

enum class Boundary { periodic, zero_padded };

// State u = (r, p) on a finite index window; site k lives at slot k - offset.
struct LatticeField {
    long offset = 0;
    std::vector<double> r;
    std::vector<double> p;
    Boundary boundary = Boundary::periodic;

    LatticeField() = default;
    LatticeField(long off, std::size_t n, Boundary b)
        : offset(off), r(n, 0.0), p(n, 0.0), boundary(b) {}

    std::size_t size() const { return r.size(); }
    long first_site() const { return offset; }
    long last_site() const { return offset + static_cast<long>(size()) - 1; }

    bool has_site(long k) const { return k >= first_site() && k <= last_site(); }
    std::size_t slot(long k) const { return static_cast<std::size_t>(k - offset); }

    void check() const {
        if (r.size() != p.size() || r.size() < 2)
            throw DomainError("LatticeField: r and p must have equal length >= 2");
    }
};

inline double linf_norm(const LatticeField& u) {
    return std::max(sup_abs(u.r), sup_abs(u.p));
}

inline double l2_norm(const LatticeField& u) {
    CompensatedSum s;
    for (double x : u.r) s.add(x * x);
    for (double x : u.p) s.add(x * x);
    return std::sqrt(s.value());
}

// (S - 1)x with the field's boundary rule: out_n = x_{n+1} - x_n.
inline void shift_up_diff(const std::vector<double>& x, Boundary b, std::vector<double>& out) {
    std::size_t n = x.size();
    out.resize(n);
    for (std::size_t i = 0; i + 1 < n; ++i) out[i] = x[i + 1] - x[i];
    out[n - 1] = (b == Boundary::periodic ? x[0] : 0.0) - x[n - 1];
}

// (1 - S^{-1})x: out_n = x_n - x_{n-1}.
inline void shift_down_diff(const std::vector<double>& x, Boundary b, std::vector<double>& out) {
    std::size_t n = x.size();
    out.resize(n);
    for (std::size_t i = n - 1; i > 0; --i) out[i] = x[i] - x[i - 1];
    out[0] = x[0] - (b == Boundary::periodic ? x[n - 1] : 0.0);
}

// Interaction potential under the normalization V(0)=V'(0)=0, V''(0)=V'''(0)=1.
class PotentialSpec {
  public:
    enum class Kind { toda, cubic_quartic };

    static PotentialSpec toda() { return PotentialSpec(Kind::toda, 0.0); }
    // V(x) = x^2/2 + x^3/6 + a4 x^4
    static PotentialSpec cubic_quartic(double a4 = 0.0) { return PotentialSpec(Kind::cubic_quartic, a4); }

    Kind kind() const { return kind_; }
    double quartic() const { return a4_; }

    double V(double x) const {
        if (kind_ == Kind::toda) return std::expm1(x) - x;
        return 0.5 * x * x + x * x * x / 6.0 + a4_ * x * x * x * x;
    }
    double dV(double x) const {
        if (kind_ == Kind::toda) return std::expm1(x);
        return x + 0.5 * x * x + 4.0 * a4_ * x * x * x;
    }
    double d2V(double x) const {
        if (kind_ == Kind::toda) return std::exp(x);
        return 1.0 + x + 12.0 * a4_ * x * x;
    }
    double d3V(double x) const {
        if (kind_ == Kind::toda) return std::exp(x);
        return 1.0 + 24.0 * a4_ * x;
    }
    double d4V(double x) const {
        if (kind_ == Kind::toda) return std::exp(x);
        return 24.0 * a4_;
    }
    // V'(x) - x, computed without cancellation.
    double nonlinearity(double x) const {
        if (kind_ == Kind::toda) return std::expm1(x) - x;
        return 0.5 * x * x + 4.0 * a4_ * x * x * x;
    }
    // V''(x) - 1.
    double dnonlinearity(double x) const {
        if (kind_ == Kind::toda) return std::expm1(x);
        return x + 12.0 * a4_ * x * x;
    }

    std::string name() const {
        if (kind_ == Kind::toda) return "toda";
        return "cubic_quartic(" + std::to_string(a4_) + ")";
    }

  private:
    PotentialSpec(Kind k, double a4) : kind_(k), a4_(a4) { verify_normalization(); }

    void verify_normalization() const {
        // finite-difference check of the H1 normalization at construction
        const double h = 1e-4, tol = 1e-6;
        double v0 = V(0.0), v1 = dV(0.0);
        double v2 = (V(h) - 2.0 * V(0.0) + V(-h)) / (h * h);
        double v3 = (V(2 * h) - 2.0 * V(h) + 2.0 * V(-h) - V(-2 * h)) / (2.0 * h * h * h);
        if (std::fabs(v0) > tol || std::fabs(v1) > tol || std::fabs(v2 - 1.0) > tol ||
            std::fabs(v3 - 1.0) > tol)
            throw DomainError("PotentialSpec: normalization V(0)=V'(0)=0, V''(0)=V'''(0)=1 violated");
    }

    Kind kind_;
    double a4_;
};

// H(u) = sum_k p_k^2/2 + V(r_k) over the window (one period when periodic).
inline double hamiltonian_energy(const LatticeField& u, const PotentialSpec& V) {
    CompensatedSum s;
    for (std::size_t i = 0; i < u.size(); ++i) s.add(0.5 * u.p[i] * u.p[i] + V.V(u.r[i]));
    return s.value();
}

// J u = ((S-1)p, (1-S^{-1})r).
inline LatticeField apply_J(const LatticeField& u) {
    LatticeField out(u.offset, u.size(), u.boundary);
    shift_up_diff(u.p, u.boundary, out.r);
    shift_down_diff(u.r, u.boundary, out.p);
    return out;
}

// u_t = JH'(u): (rdot, pdot) = ((S-1)p, (1-S^{-1})V'(r)).
inline LatticeField vector_field(const LatticeField& u, const PotentialSpec& V) {
    LatticeField out(u.offset, u.size(), u.boundary);
    shift_up_diff(u.p, u.boundary, out.r);
    std::vector<double> f(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) f[i] = V.dV(u.r[i]);
    shift_down_diff(f, u.boundary, out.p);
    return out;
}

// x h_alpha with the Heaviside cut fixed at lattice site 0.
inline LatticeField localize(const LatticeField& u, int alpha) {
    LatticeField out = u;
    for (long k = u.first_site(); k <= u.last_site(); ++k) {
        bool keep = (alpha > 0) ? (k >= 0) : (k < 0);
        if (!keep) {
            out.r[u.slot(k)] = 0.0;
            out.p[u.slot(k)] = 0.0;
        }
    }
    return out;
}

struct WeightSpec {
    double a = 0.1;     // one-sided exponential rate
    double abar = 0.01; // two-sided slow rate
    double tau = 0.0;   // weight center
    int alpha = +1;

    WeightSpec() = default;
    WeightSpec(double a_, double abar_, double tau_, int alpha_)
        : a(a_), abar(abar_), tau(tau_), alpha(alpha_) {
        if (a <= 0 || abar <= 0) throw DomainError("WeightSpec: rates must be positive");
    }
};

enum class NormMode { plain, one_sided, two_sided };

// Weighted l2 norm of a scalar sequence starting at site `offset`.
// one_sided: (sum e^{2 alpha a (k - tau)} x_k^2)^{1/2}
// two_sided: (sum e^{-2 abar |k - tau|} x_k^2)^{1/2}
// Terms are accumulated in descending weight order with compensated summation;
// exact zeros contribute nothing and are skipped before the overflow guard.
inline double weighted_norm(const std::vector<double>& x, long offset, const WeightSpec& w,
                            NormMode mode) {
    const long n = static_cast<long>(x.size());
    if (n == 0) return 0.0;
    if (mode == NormMode::plain) return l2_norm(x);

    auto exponent = [&](long i) { // log of the squared weight at slot i
        double k = static_cast<double>(offset + i) - w.tau;
        return (mode == NormMode::one_sided) ? 2.0 * w.alpha * w.a * k : -2.0 * w.abar * std::fabs(k);
    };

    // find max exponent among contributing (nonzero) terms
    double emax = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < n; ++i)
        if (x[i] != 0.0) emax = std::max(emax, exponent(i));
    if (emax == -std::numeric_limits<double>::infinity()) return 0.0;
    if (emax > 1400.0) // squared-weight exponent; weight itself beyond e^700
        throw OverflowGuard("weighted_norm: weight exponent exceeds 700");

    // order slots by descending weight: one_sided is monotone in k, two_sided
    // peaks at tau and decays outward.
    CompensatedSum s;
    auto add_slot = [&](long i) {
        if (x[i] == 0.0) return;
        s.add(std::exp(exponent(i) - emax) * x[i] * x[i]);
    };
    if (mode == NormMode::one_sided) {
        if (w.alpha > 0)
            for (long i = n - 1; i >= 0; --i) add_slot(i);
        else
            for (long i = 0; i < n; ++i) add_slot(i);
    } else {
        long ic = std::lround(w.tau) - offset;
        ic = std::max(0l, std::min(n - 1, ic));
        long lo = ic, hi = ic + 1;
        while (lo >= 0 || hi < n) {
            bool pick_lo;
            if (lo < 0) pick_lo = false;
            else if (hi >= n) pick_lo = true;
            else pick_lo = exponent(lo) >= exponent(hi);
            if (pick_lo) add_slot(lo--);
            else add_slot(hi++);
        }
    }
    double val = std::sqrt(s.value());
    double loge = 0.5 * emax + std::log(std::max(val, 1e-300));
    if (loge > 700.0) throw OverflowGuard("weighted_norm: result overflows");
    return std::exp(0.5 * emax) * val;
}

inline double weighted_norm(const LatticeField& u, const WeightSpec& w, NormMode mode) {
    double nr = weighted_norm(u.r, u.offset, w, mode);
    double np = weighted_norm(u.p, u.offset, w, mode);
    return std::sqrt(nr * nr + np * np);
}

inline std::uint64_t field_checksum(const LatticeField& u) {
    std::uint64_t h = fnv1a(u.r.data(), u.r.size() * sizeof(double));
    h = fnv1a(u.p.data(), u.p.size() * sizeof(double), h);
    return fnv1a(&u.offset, sizeof(u.offset), h);
}

} // namespace fpulab
