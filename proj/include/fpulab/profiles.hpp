#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "fpulab/lattice.hpp"
#include "fpulab/spectral.hpp"

namespace fpulab {

enum class KappaKind { fpu_dispersion, toda };

// Root of sinh(k/2)/(k/2) = c (fpu) or sinh(k)/k = c (toda); bisection
// bracket then Newton polish to 1e-14.
inline double kappa_root(double c, KappaKind kind) {
    if (c <= 1.0) throw DomainError("kappa_root: requires c > 1");
    auto f = [&](double k) {
        double x = (kind == KappaKind::fpu_dispersion) ? k / 2 : k;
        return std::sinh(x) / x - c;
    };
    double lo = 1e-10, hi = 1.0;
    while (f(hi) < 0) hi *= 2.0;
    for (int i = 0; i < 80; ++i) {
        double mid = 0.5 * (lo + hi);
        (f(mid) < 0 ? lo : hi) = mid;
    }
    double k = 0.5 * (lo + hi);
    for (int i = 0; i < 8; ++i) {
        double x = (kind == KappaKind::fpu_dispersion) ? k / 2 : k;
        double val = std::sinh(x) / x - c;
        double der = (std::cosh(x) / x - std::sinh(x) / (x * x));
        der *= (kind == KappaKind::fpu_dispersion) ? 0.5 : 1.0;
        k -= val / der;
    }
    return k;
}

inline double one_minus_sinc2(double x) {
    if (std::fabs(x) < 0.1) {
        double x2 = x * x;
        return x2 / 3.0 - 2.0 * x2 * x2 / 45.0 + x2 * x2 * x2 / 315.0;
    }
    double s = sinc(x);
    return 1.0 - s * s;
}

// Symbol of the renormalized resolvent P^(eps,beta); eps = 0 selects the
// KdV limit 12/(xi^2 + beta).
inline double symbol_p(double eps, double beta, double xi) {
    if (beta <= 0) throw DomainError("symbol_p: beta must be positive");
    if (eps < 0) throw DomainError("symbol_p: eps must be >= 0");
    if (eps == 0.0) return 12.0 / (xi * xi + beta);
    double g = 1.0 - one_minus_sinc2(eps * xi / 2);
    double D = eps * eps * beta / 12.0 + one_minus_sinc2(eps * xi / 2);
    return eps * eps * g / D;
}

inline double symbol_dbeta_p(double eps, double beta, double xi) {
    if (eps == 0.0) {
        double q = 12.0 / (xi * xi + beta);
        return -q * q / 12.0;
    }
    double g = 1.0 - one_minus_sinc2(eps * xi / 2);
    double D = eps * eps * beta / 12.0 + one_minus_sinc2(eps * xi / 2);
    double e2 = eps * eps;
    return -(e2 * e2 / 12.0) * g / (D * D);
}

inline double symbol_d2beta_p(double eps, double beta, double xi) {
    if (eps == 0.0) {
        double q = xi * xi + beta;
        return 24.0 / (q * q * q);
    }
    double g = 1.0 - one_minus_sinc2(eps * xi / 2);
    double D = eps * eps * beta / 12.0 + one_minus_sinc2(eps * xi / 2);
    double e2 = eps * eps;
    return (e2 * e2 * e2 / 72.0) * g / (D * D * D);
}

// Discrete-to-continuum momentum symbol w(xi) = i xi / (e^{i xi} - 1),
// evaluated as (xi/2)/sin(xi/2) * e^{-i xi/2}; w(0) = 1.
inline cplx symbol_w(double xi) {
    double half = 0.5 * xi;
    double s = std::sin(half);
    double mag;
    if (std::fabs(half) < 1e-8)
        mag = 1.0;
    else if (std::fabs(s) < 1e-9 * std::fabs(half))
        mag = 0.0; // pole of the symbol; the spectra we use vanish here
    else
        mag = half / s;
    return cplx(mag * std::cos(half), -mag * std::sin(half));
}

// KdV solitary profile (beta/4) sech^2(sqrt(beta) x / 2) on the grid.
inline std::vector<double> kdv_profile(double beta, const SpectralGrid& g) {
    if (beta <= 0) throw DomainError("kdv_profile: beta must be positive");
    std::vector<double> f(g.M());
    double k = std::sqrt(beta) / 2;
    for (int j = 0; j < g.M(); ++j) {
        double sech = 1.0 / std::cosh(k * g.node(j));
        f[j] = beta / 4 * sech * sech;
    }
    return f;
}

struct SolitaryWave {
    double eps = 0.0;
    double beta = 1.0;
    double c = 1.0;       // c^2 = 1 + eps^2 beta / 12
    double kappa_fpu = 0.0;
    std::shared_ptr<SpectralGrid> grid;
    std::vector<double> phi;
    std::vector<cplx> phi_hat;
    double residual = 0.0;
};

struct ProfileDerivatives {
    std::vector<double> dphi_dbeta;
    std::vector<double> d2phi_dbeta2;
};

namespace detail {

// unpreconditioned GMRES on R^M, operator given as a callable; no restart.
// The absolute tolerance floors the target: near the roundoff floor of the
// operator a purely relative criterion is unreachable for tiny right sides.
template <class Op>
bool gmres(const Op& apply, const std::vector<double>& rhs, std::vector<double>& x,
           double rtol, int maxit, double atol = 0.0) {
    const std::size_t n = rhs.size();
    x.assign(n, 0.0);
    double bnorm = l2_norm(rhs);
    if (bnorm == 0.0) return true;
    double target = std::max(rtol * bnorm, atol);

    std::vector<std::vector<double>> V;
    std::vector<double> cs(maxit + 1, 0.0), sn(maxit + 1, 0.0), gvec(maxit + 1, 0.0);
    std::vector<std::vector<double>> H(maxit + 1, std::vector<double>(maxit, 0.0));

    V.push_back(rhs);
    for (double& v : V[0]) v /= bnorm;
    gvec[0] = bnorm;

    int k = 0;
    for (; k < maxit; ++k) {
        std::vector<double> w = apply(V[k]);
        for (int j = 0; j <= k; ++j) {
            double h = 0.0;
            for (std::size_t i = 0; i < n; ++i) h += w[i] * V[j][i];
            H[j][k] = h;
            for (std::size_t i = 0; i < n; ++i) w[i] -= h * V[j][i];
        }
        double hnew = l2_norm(w);
        H[k + 1][k] = hnew;
        for (int j = 0; j < k; ++j) { // apply stored rotations
            double t = cs[j] * H[j][k] + sn[j] * H[j + 1][k];
            H[j + 1][k] = -sn[j] * H[j][k] + cs[j] * H[j + 1][k];
            H[j][k] = t;
        }
        double denom = std::hypot(H[k][k], H[k + 1][k]);
        if (denom == 0.0) return false;
        cs[k] = H[k][k] / denom;
        sn[k] = H[k + 1][k] / denom;
        H[k][k] = denom;
        H[k + 1][k] = 0.0;
        gvec[k + 1] = -sn[k] * gvec[k];
        gvec[k] = cs[k] * gvec[k];
        if (hnew > 0) {
            for (double& v : w) v /= hnew;
            V.push_back(std::move(w));
        }
        if (std::fabs(gvec[k + 1]) <= target || hnew == 0.0) {
            ++k;
            break;
        }
    }
    // back substitution
    std::vector<double> y(k, 0.0);
    for (int i = k - 1; i >= 0; --i) {
        double s = gvec[i];
        for (int j = i + 1; j < k; ++j) s -= H[i][j] * y[j];
        y[i] = s / H[i][i];
    }
    for (int j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i) x[i] += y[j] * V[j][i];
    return std::fabs(gvec[k]) <= 10 * target;
}

} // namespace detail

struct SolveOptions {
    int max_newton = 100;
    double target_residual = 1e-13;
    double accept_residual = 1e-12;
    int gmres_maxit = 400;
    bool allow_continuation = true;
};

// Newton iteration on F(phi) = phi - P N(phi), collocation space, evenness
// enforced each step; linearization solved by GMRES on I - P dN(phi).
inline SolitaryWave solve_profile(const PotentialSpec& V, double eps, double beta,
                                  std::shared_ptr<SpectralGrid> grid,
                                  const SolveOptions& opts = {},
                                  const std::vector<double>* initial = nullptr) {
    if (eps <= 0 || eps > 0.5) throw DomainError("solve_profile: eps in (0, 0.5] required");
    if (beta <= 0) throw DomainError("solve_profile: beta must be positive");
    const SpectralGrid& g = *grid;
    const int M = g.M();

    auto apply_P = [&](const std::vector<double>& f) {
        return g.apply_symbol(f, [&](double xi) { return symbol_p(eps, beta, xi); });
    };
    auto Nfun = [&](const std::vector<double>& phi) {
        std::vector<double> out(M);
        double e2 = eps * eps, e4 = e2 * e2;
        for (int j = 0; j < M; ++j) out[j] = V.nonlinearity(e2 * phi[j]) / e4;
        return out;
    };
    auto dNfun = [&](const std::vector<double>& phi) {
        std::vector<double> out(M);
        double e2 = eps * eps;
        for (int j = 0; j < M; ++j) out[j] = V.dnonlinearity(e2 * phi[j]) / e2;
        return out;
    };

    std::vector<double> phi = initial ? *initial : kdv_profile(beta, g);
    g.symmetrize_even(phi);

    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_newton; ++it) {
        std::vector<double> PN = apply_P(Nfun(phi));
        std::vector<double> F(M);
        for (int j = 0; j < M; ++j) F[j] = phi[j] - PN[j];
        res = sup_abs(F);
        if (res <= opts.target_residual) break;

        std::vector<double> w = dNfun(phi);
        auto op = [&](const std::vector<double>& x) {
            std::vector<double> px(M);
            for (int j = 0; j < M; ++j) px[j] = w[j] * x[j];
            px = apply_P(px);
            for (int j = 0; j < M; ++j) px[j] = x[j] - px[j];
            return px;
        };
        std::vector<double> delta;
        if (!detail::gmres(op, F, delta, 1e-13, opts.gmres_maxit, 1e-15))
            throw SingularLinearization("solve_profile: linear solve failed to converge");
        for (int j = 0; j < M; ++j) phi[j] -= delta[j];
        g.symmetrize_even(phi);
        if (!std::isfinite(phi[0]) || sup_abs(phi) > 1e6) {
            res = std::numeric_limits<double>::infinity();
            break;
        }
    }

    if (!(res <= opts.accept_residual)) {
        if (opts.allow_continuation && !initial) {
            // continuation in eps from the KdV end
            SolveOptions sub = opts;
            sub.allow_continuation = false;
            std::vector<double> guess = kdv_profile(beta, g);
            for (double e : {eps / 4, eps / 2, 3 * eps / 4, eps}) {
                SolitaryWave stage = solve_profile(V, e, beta, grid, sub, &guess);
                guess = stage.phi;
                if (e == eps) return stage;
            }
        }
        throw NoConvergence("solve_profile: Newton residual " + std::to_string(res));
    }

    SolitaryWave wsol;
    wsol.eps = eps;
    wsol.beta = beta;
    wsol.c = std::sqrt(1.0 + eps * eps * beta / 12.0);
    wsol.kappa_fpu = kappa_root(wsol.c, KappaKind::fpu_dispersion);
    wsol.grid = grid;
    wsol.phi = std::move(phi);
    wsol.phi_hat = g.to_spectrum(wsol.phi);
    wsol.residual = res;
    return wsol;
}

// sup-norm fixed-point residual, used by the loader to re-verify profiles
inline double fixed_point_residual(const PotentialSpec& V, const SolitaryWave& w) {
    const SpectralGrid& g = *w.grid;
    double e2 = w.eps * w.eps, e4 = e2 * e2;
    std::vector<double> N(g.M());
    for (int j = 0; j < g.M(); ++j) N[j] = V.nonlinearity(e2 * w.phi[j]) / e4;
    auto PN = g.apply_symbol(N, [&](double xi) { return symbol_p(w.eps, w.beta, xi); });
    double res = 0.0;
    for (int j = 0; j < g.M(); ++j) res = std::max(res, std::fabs(w.phi[j] - PN[j]));
    return res;
}

// Implicit differentiation of the fixed point equation in beta, to order 2.
inline ProfileDerivatives profile_derivatives(const PotentialSpec& V, const SolitaryWave& w,
                                              int order = 2) {
    if (w.residual > 1e-11)
        throw DomainError("profile_derivatives: wave residual too large");
    const SpectralGrid& g = *w.grid;
    const int M = g.M();
    double e2 = w.eps * w.eps, e4 = e2 * e2;

    std::vector<double> N(M), dN(M), d2N(M);
    for (int j = 0; j < M; ++j) {
        N[j] = V.nonlinearity(e2 * w.phi[j]) / e4;
        dN[j] = V.dnonlinearity(e2 * w.phi[j]) / e2;
        d2N[j] = V.d3V(e2 * w.phi[j]);
    }
    auto apply_P = [&](const std::vector<double>& f) {
        return g.apply_symbol(f, [&](double xi) { return symbol_p(w.eps, w.beta, xi); });
    };
    auto op = [&](const std::vector<double>& x) {
        std::vector<double> px(M);
        for (int j = 0; j < M; ++j) px[j] = dN[j] * x[j];
        px = apply_P(px);
        for (int j = 0; j < M; ++j) px[j] = x[j] - px[j];
        return px;
    };

    ProfileDerivatives out;
    // (I - P dN) phi_b = (d_beta P) N
    std::vector<double> rhs = g.apply_symbol(N, [&](double xi) { return symbol_dbeta_p(w.eps, w.beta, xi); });
    if (!detail::gmres(op, rhs, out.dphi_dbeta, 1e-13, 400, 1e-15))
        throw SingularLinearization("profile_derivatives: first-order solve failed");
    g.symmetrize_even(out.dphi_dbeta);

    if (order >= 2) {
        // (I - P dN) phi_bb = d2_beta P N + 2 d_beta P (dN phi_b) + P (d2N phi_b^2)
        std::vector<double> t1 = g.apply_symbol(N, [&](double xi) { return symbol_d2beta_p(w.eps, w.beta, xi); });
        std::vector<double> u(M);
        for (int j = 0; j < M; ++j) u[j] = dN[j] * out.dphi_dbeta[j];
        std::vector<double> t2 = g.apply_symbol(u, [&](double xi) { return symbol_dbeta_p(w.eps, w.beta, xi); });
        for (int j = 0; j < M; ++j) u[j] = d2N[j] * out.dphi_dbeta[j] * out.dphi_dbeta[j];
        std::vector<double> t3 = apply_P(u);
        std::vector<double> rhs2(M);
        for (int j = 0; j < M; ++j) rhs2[j] = t1[j] + 2.0 * t2[j] + t3[j];
        if (!detail::gmres(op, rhs2, out.d2phi_dbeta2, 1e-13, 400, 1e-15))
            throw SingularLinearization("profile_derivatives: second-order solve failed");
        g.symmetrize_even(out.d2phi_dbeta2);
    }
    return out;
}

// A solved wave with dense lattice-sampling tables for the field, its tau- and
// c-derivatives, and second derivatives. Tables are functions of the rescaled
// coordinate X = eps * (site - tau).
class WaveEntry {
  public:
    WaveEntry(const PotentialSpec& V, double eps, double beta, std::shared_ptr<SpectralGrid> grid,
              int oversample = 64)
        : wave_(solve_profile(V, eps, beta, grid)), derivs_(profile_derivatives(V, wave_, 2)) {
        build_tables(oversample);
    }

    const SolitaryWave& wave() const { return wave_; }
    const ProfileDerivatives& derivs() const { return derivs_; }
    double c() const { return wave_.c; }
    double eps() const { return wave_.eps; }
    double kappa() const { return wave_.kappa_fpu; }

    // lattice fields at displacement s = site - tau (right-moving orientation)
    double r(double s) const { return tr_(wave_.eps * s); }
    double r_x(double s) const { return trx_(wave_.eps * s); }
    double r_xx(double s) const { return trxx_(wave_.eps * s); }
    double r_c(double s) const { return trc_(wave_.eps * s); }
    double r_xc(double s) const { return trxc_(wave_.eps * s); }
    double r_cc(double s) const { return trcc_(wave_.eps * s); }
    double p(double s) const { return tp_(wave_.eps * s); }
    double p_x(double s) const { return tpx_(wave_.eps * s); }
    double p_xx(double s) const { return tpxx_(wave_.eps * s); }
    double p_c(double s) const { return tpc_(wave_.eps * s); }
    double p_xc(double s) const { return tpxc_(wave_.eps * s); }
    double p_cc(double s) const { return tpcc_(wave_.eps * s); }

    // exact trigonometric interpolation of the r-field (validation path)
    double r_exact(double s) const {
        double X = wave_.eps * s;
        if (std::fabs(X) > wave_.grid->L() / 2) return 0.0;
        return wave_.eps * wave_.eps * wave_.grid->interpolate(wave_.phi_hat, X);
    }

  private:
    void build_tables(int oversample) {
        const SpectralGrid& g = *wave_.grid;
        const int M = g.M();
        const double eps = wave_.eps, c = wave_.c;
        const double bp = 24.0 * c / (eps * eps);  // dbeta/dc at fixed eps
        const double bpp = 24.0 / (eps * eps);     // d2beta/dc2

        std::vector<cplx> phi = wave_.phi_hat;
        std::vector<cplx> phib = g.to_spectrum(derivs_.dphi_dbeta);
        std::vector<cplx> phibb = g.to_spectrum(derivs_.d2phi_dbeta2);

        auto scaled = [&](const std::vector<cplx>& a, double s) {
            std::vector<cplx> out(a);
            for (auto& v : out) v *= s;
            return out;
        };
        auto add = [&](std::vector<cplx> a, const std::vector<cplx>& b, double s) {
            for (int m = 0; m < M; ++m) a[m] += s * b[m];
            return a;
        };
        auto dx = [&](std::vector<cplx> a, int order) { // d/ds = eps d/dX
            for (int m = 0; m < M; ++m) {
                cplx ik(0.0, g.freq(m) * eps);
                cplx w = std::pow(ik, order);
                if (order % 2 == 1 && m == M / 2) w = 0.0;
                a[m] *= w;
            }
            return a;
        };
        auto Wop = [&](std::vector<cplx> a) { // momentum symbol at physical frequency
            for (int m = 0; m < M; ++m) a[m] *= symbol_w(eps * g.freq(m));
            return a;
        };

        double e2 = eps * eps;
        std::vector<cplx> r_sp = scaled(phi, e2);
        std::vector<cplx> rc_sp = scaled(phib, e2 * bp);
        std::vector<cplx> rcc_sp = add(scaled(phibb, e2 * bp * bp), phib, e2 * bpp);
        std::vector<cplx> p_sp = scaled(Wop(r_sp), -c);
        std::vector<cplx> pc_sp = add(scaled(Wop(rc_sp), -c), Wop(r_sp), -1.0);
        std::vector<cplx> pcc_sp = add(scaled(Wop(rcc_sp), -c), Wop(rc_sp), -2.0);

        tr_ = FineTable(g, r_sp, oversample);
        trx_ = FineTable(g, dx(r_sp, 1), oversample);
        trxx_ = FineTable(g, dx(r_sp, 2), oversample);
        trc_ = FineTable(g, rc_sp, oversample);
        trxc_ = FineTable(g, dx(rc_sp, 1), oversample);
        trcc_ = FineTable(g, rcc_sp, oversample);
        tp_ = FineTable(g, p_sp, oversample);
        tpx_ = FineTable(g, dx(p_sp, 1), oversample);
        tpxx_ = FineTable(g, dx(p_sp, 2), oversample);
        tpc_ = FineTable(g, pc_sp, oversample);
        tpxc_ = FineTable(g, dx(pc_sp, 1), oversample);
        tpcc_ = FineTable(g, pcc_sp, oversample);
    }

    SolitaryWave wave_;
    ProfileDerivatives derivs_;
    FineTable tr_, trx_, trxx_, trc_, trxc_, trcc_;
    FineTable tp_, tpx_, tpxx_, tpc_, tpxc_, tpcc_;
};

// Profile cache along the wave family c(beta) at a frozen eps; entries are
// re-solved when the requested speed drifts past eps^2 * 1e-3.
class WaveFamily {
  public:
    WaveFamily(const PotentialSpec& V, double eps, double beta = 1.0, int M = 1024,
               double L = 0.0)
        : V_(V), eps_(eps) {
        double Luse = (L > 0) ? L : 80.0 / std::sqrt(beta);
        grid_ = std::make_shared<SpectralGrid>(Luse, M);
        base_ = std::make_shared<WaveEntry>(V_, eps_, beta, grid_);
    }

    const PotentialSpec& potential() const { return V_; }
    double eps() const { return eps_; }
    std::shared_ptr<SpectralGrid> grid() const { return grid_; }
    const WaveEntry& base() const { return *base_; }

    // entry whose speed is within eps^2 * 1e-3 of |c|
    const WaveEntry& at_speed(double c_abs) {
        double tol = eps_ * eps_ * 1e-3;
        if (std::fabs(c_abs - base_->c()) <= tol) return *base_;
        for (const auto& e : cache_)
            if (std::fabs(c_abs - e->c()) <= tol) return *e;
        double beta = 12.0 * (c_abs * c_abs - 1.0) / (eps_ * eps_);
        if (beta <= 0) throw DomainError("WaveFamily: speed below sonic");
        cache_.push_back(std::make_shared<WaveEntry>(V_, eps_, beta, grid_));
        if (cache_.size() > 16) cache_.erase(cache_.begin());
        return *cache_.back();
    }

  private:
    PotentialSpec V_;
    double eps_;
    std::shared_ptr<SpectralGrid> grid_;
    std::shared_ptr<WaveEntry> base_;
    std::vector<std::shared_ptr<WaveEntry>> cache_;
};

// Sample a solitary wave onto the lattice. sign=+1 gives the right-mover;
// sign=-1 the left-mover (site reflection with negated momentum).
inline void add_sampled_wave(LatticeField& u, const WaveEntry& e, double tau, int sign,
                             double amp = 1.0) {
    for (long k = u.first_site(); k <= u.last_site(); ++k) {
        double s = static_cast<double>(k) - tau;
        u.r[u.slot(k)] += amp * e.r(s);
        u.p[u.slot(k)] += amp * sign * e.p(s);
    }
}

inline LatticeField sample_lattice_wave(const WaveEntry& e, double tau, long offset,
                                        std::size_t n, Boundary b = Boundary::periodic,
                                        int sign = +1) {
    double margin_l = (tau - offset) * e.kappa();
    double margin_r = (offset + static_cast<double>(n) - 1 - tau) * e.kappa();
    if (margin_l < 14.0 * std::log(10.0) * 0.99 || margin_r < 14.0 * std::log(10.0) * 0.99)
        throw WindowViolation("sample_lattice_wave: window too small for e^{-kappa margin} <= 1e-14");
    LatticeField u(offset, n, b);
    add_sampled_wave(u, e, tau, sign);
    return u;
}

// dH(u_c)/dc by central differencing in c at fixed eps, dc = eps^2 * 1e-3.
inline double energy_slope(const PotentialSpec& V, double eps, double beta,
                           std::shared_ptr<SpectralGrid> grid = nullptr) {
    if (!grid) grid = std::make_shared<SpectralGrid>(80.0 / std::sqrt(beta), 1024);
    double c0 = std::sqrt(1.0 + eps * eps * beta / 12.0);
    double dc = eps * eps * 1e-3;
    double H[2];
    int idx = 0;
    for (double c : {c0 - dc, c0 + dc}) {
        double b = 12.0 * (c * c - 1.0) / (eps * eps);
        WaveEntry e(V, eps, b, grid);
        long half = std::lround(40.0 / e.kappa());
        LatticeField u = sample_lattice_wave(e, 0.0, -half, 2 * half + 1, Boundary::zero_padded);
        H[idx++] = hamiltonian_energy(u, V);
    }
    return (H[1] - H[0]) / (2.0 * dc);
}

} // namespace fpulab
