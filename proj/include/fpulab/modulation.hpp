#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "fpulab/profiles.hpp"
#include "fpulab/symplectic.hpp"

namespace fpulab {

// Sampled fields of one modulated wave on a window. `c` is the signed speed;
// the sampling handles left-movers through the lattice reflection symmetry.
struct WaveFields {
    LatticeField u, xi1, xi2, dtau_xi1, dc_xi1, dc_xi2;
    double tau = 0.0, c = 0.0;
};

// The wave at the requested speed is produced from the cached solve nearest
// in c by a Taylor update in the speed offset (second order for the field,
// first order for the tangent vectors).
inline WaveFields build_wave_fields(WaveFamily& fam, double tau, double c_signed, long offset,
                                    std::size_t n, Boundary b = Boundary::zero_padded) {
    const double sgn = (c_signed >= 0) ? 1.0 : -1.0;
    const WaveEntry& e = fam.at_speed(std::fabs(c_signed));
    const double dc = std::fabs(c_signed) - e.c();
    WaveFields f{LatticeField(offset, n, b), LatticeField(offset, n, b),
                 LatticeField(offset, n, b), LatticeField(offset, n, b),
                 LatticeField(offset, n, b), LatticeField(offset, n, b),
                 tau, c_signed};
    for (long k = offset; k < offset + static_cast<long>(n); ++k) {
        double s = static_cast<double>(k) - tau;
        std::size_t i = f.u.slot(k);
        double R = e.r(s) + dc * e.r_c(s) + 0.5 * dc * dc * e.r_cc(s);
        double P = e.p(s) + dc * e.p_c(s) + 0.5 * dc * dc * e.p_cc(s);
        double R1 = -(e.r_x(s) + dc * e.r_xc(s));
        double P1 = -(e.p_x(s) + dc * e.p_xc(s));
        double R2 = e.r_c(s) + dc * e.r_cc(s);
        double P2 = e.p_c(s) + dc * e.p_cc(s);
        f.u.r[i] = R;
        f.u.p[i] = sgn * P;
        f.xi1.r[i] = R1;
        f.xi1.p[i] = sgn * P1;
        f.xi2.r[i] = sgn * R2;
        f.xi2.p[i] = P2;
        f.dtau_xi1.r[i] = e.r_xx(s);
        f.dtau_xi1.p[i] = sgn * e.p_xx(s);
        f.dc_xi1.r[i] = -sgn * e.r_xc(s);
        f.dc_xi1.p[i] = -e.p_xc(s);
        f.dc_xi2.r[i] = e.r_cc(s);
        f.dc_xi2.p[i] = sgn * e.p_cc(s);
    }
    return f;
}

using Mat4 = std::array<std::array<double, 4>, 4>;
using Vec4 = std::array<double, 4>;

inline Vec4 solve4(Mat4 A, Vec4 b, double* cond1 = nullptr) {
    double anorm = 0.0;
    for (int i = 0; i < 4; ++i) {
        double s = 0;
        for (int j = 0; j < 4; ++j) s += std::fabs(A[i][j]);
        anorm = std::max(anorm, s);
    }
    // LU with partial pivoting on the augmented system; also build the inverse
    Mat4 inv{};
    for (int i = 0; i < 4; ++i) inv[i][i] = 1.0;
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        if (A[piv][col] == 0.0) throw SingularA("solve4: singular matrix");
        std::swap(A[col], A[piv]);
        std::swap(inv[col], inv[piv]);
        std::swap(b[col], b[piv]);
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            double f = A[r][col] / A[col][col];
            for (int j = 0; j < 4; ++j) {
                A[r][j] -= f * A[col][j];
                inv[r][j] -= f * inv[col][j];
            }
            b[r] -= f * b[col];
        }
    }
    Vec4 x{};
    double inorm = 0.0;
    for (int i = 0; i < 4; ++i) {
        x[i] = b[i] / A[i][i];
        double s = 0;
        for (int j = 0; j < 4; ++j) s += std::fabs(inv[i][j] / A[i][i]);
        inorm = std::max(inorm, s);
    }
    if (cond1) *cond1 = anorm * inorm;
    return x;
}

struct ModulationMatrix {
    Mat4 A{};       // pairings omega_a(xi_{i,a}, xi_{j,b} h_a), rows (1+,2+,1-,2-)
    Mat4 inverse{};
    double cond1 = 0.0;
    double norm_A1 = 0.0; // sup-abs of the off-diagonal blocks
    double norm_A0 = 0.0;
};

inline ModulationMatrix assemble_A(const WaveFields& plus, const WaveFields& minus) {
    ModulationMatrix M;
    const WaveFields* w[2] = {&plus, &minus};
    for (int ai = 0; ai < 2; ++ai) {
        int alpha = (ai == 0) ? +1 : -1;
        for (int bi = 0; bi < 2; ++bi) {
            const LatticeField* xis[2] = {&w[bi]->xi1, &w[bi]->xi2};
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    double v = omega(alpha, *(i == 0 ? &w[ai]->xi1 : &w[ai]->xi2),
                                     localize(*xis[j], alpha));
                    M.A[2 * ai + i][2 * bi + j] = v;
                    double av = std::fabs(v);
                    if (ai == bi)
                        M.norm_A0 = std::max(M.norm_A0, av);
                    else
                        M.norm_A1 = std::max(M.norm_A1, av);
                }
        }
    }
    Mat4 A = M.A;
    Vec4 e{};
    // invert by solving four unit systems
    for (int k = 0; k < 4; ++k) {
        for (int i = 0; i < 4; ++i) e[i] = (i == k) ? 1.0 : 0.0;
        double cond;
        Vec4 col = solve4(A, e, &cond);
        M.cond1 = cond;
        for (int i = 0; i < 4; ++i) M.inverse[i][k] = col[i];
    }
    if (M.cond1 > 1e12) throw SingularA("assemble_A: condition number exceeds 1e12");
    return M;
}

// separation threshold below which A is not trusted; artifact rule for the
// T0 of the tubular-coordinate construction
inline double separation_threshold(double eps, double a) {
    return std::log(1.0 / (a * std::pow(eps, 5))) / a;
}

struct TubularCoords {
    double tau_plus = 0.0, tau_minus = 0.0;
    double c_plus = 0.0, c_minus = 0.0;
    LatticeField v1, v2;
    std::array<double, 4> defects{}; // residual pairings (1+,2+,1-,2-)
    double contraction = 0.0;
    int iterations = 0;
    bool usmall_ok = false;
    double renormed_step = 0.0;
};

struct ExtractOptions {
    double tol = 1e-12;      // renormed step tolerance
    int max_iter = 60;
    double weight_a = 0.0;   // 0: use kappa/2 of the plus wave
    bool enforce_separation = true;
};

struct ExtractGuess {
    double tau_plus, c_plus;
    double tau_minus, c_minus;
};

// Renormed parameter metric sqrt(eps^3 |dtau|^2 + eps^-3 |dc|^2).
inline double renormed_len(double eps, const Vec4& d) {
    double e3 = eps * eps * eps;
    return std::sqrt(e3 * (d[0] * d[0] + d[2] * d[2]) + (d[1] * d[1] + d[3] * d[3]) / e3);
}

// Unique (tau, c) with the symplectic orthogonality conditions: fixed-point
// iteration x <- x - A^{-1} F(x) with the Jacobian frozen at the guess.
inline TubularCoords extract_coordinates(WaveFamily& fam, const LatticeField& u,
                                         const LatticeField& v1, const ExtractGuess& guess,
                                         const ExtractOptions& opts = {}) {
    const double eps = fam.eps();
    const long off = u.offset;
    const std::size_t n = u.size();

    double a = (opts.weight_a > 0) ? opts.weight_a
                                   : 0.5 * kappa_root(std::fabs(guess.c_plus), KappaKind::fpu_dispersion);
    if (opts.enforce_separation) {
        double T0 = separation_threshold(eps, a);
        if (guess.tau_plus < T0 || guess.tau_minus > -T0)
            throw SeparationTooSmall("extract_coordinates: |tau| below the separation threshold");
    }

    auto fields_at = [&](const Vec4& x) {
        return std::array<WaveFields, 2>{
            build_wave_fields(fam, x[0], x[1], off, n),
            build_wave_fields(fam, x[2], x[3], off, n)};
    };
    auto Feval = [&](const std::array<WaveFields, 2>& wf, Vec4& F, LatticeField* w1_out = nullptr,
                     LatticeField* w2_out = nullptr) {
        LatticeField w1(off, n, u.boundary), w2(off, n, u.boundary);
        for (std::size_t i = 0; i < n; ++i) {
            double uhat_r = wf[0].u.r[i] + wf[1].u.r[i];
            double uhat_p = wf[0].u.p[i] + wf[1].u.p[i];
            w1.r[i] = u.r[i] - uhat_r;
            w1.p[i] = u.p[i] - uhat_p;
            w2.r[i] = w1.r[i] - v1.r[i];
            w2.p[i] = w1.p[i] - v1.p[i];
        }
        for (int ai = 0; ai < 2; ++ai) {
            int alpha = (ai == 0) ? +1 : -1;
            F[2 * ai + 0] = omega(alpha, wf[ai].xi1, localize(w1, alpha));
            F[2 * ai + 1] = omega(alpha, wf[ai].xi2, localize(w2, alpha));
        }
        if (w1_out) *w1_out = std::move(w1);
        if (w2_out) *w2_out = std::move(w2);
    };

    Vec4 x{guess.tau_plus, guess.c_plus, guess.tau_minus, guess.c_minus};
    auto wf = fields_at(x);
    Vec4 F;
    LatticeField w1, w2;
    Feval(wf, F, &w1, &w2);

    // frozen Jacobian at the guess
    Mat4 Jac{};
    for (int ai = 0; ai < 2; ++ai) {
        int alpha = (ai == 0) ? +1 : -1;
        for (int bi = 0; bi < 2; ++bi) {
            const LatticeField* xis[2] = {&wf[bi].xi1, &wf[bi].xi2};
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    Jac[2 * ai + i][2 * bi + j] =
                        -omega(alpha, *(i == 0 ? &wf[ai].xi1 : &wf[ai].xi2), localize(*xis[j], alpha));
        }
        LatticeField w1a = localize(w1, alpha), w2a = localize(w2, alpha);
        Jac[2 * ai + 0][2 * ai + 0] += omega(alpha, wf[ai].dtau_xi1, w1a);
        Jac[2 * ai + 0][2 * ai + 1] += omega(alpha, wf[ai].dc_xi1, w1a);
        Jac[2 * ai + 1][2 * ai + 0] += omega(alpha, wf[ai].dc_xi1, w2a); // dtau_xi2 = dc_xi1
        Jac[2 * ai + 1][2 * ai + 1] += omega(alpha, wf[ai].dc_xi2, w2a);
    }

    TubularCoords out;
    double prev_len = 0.0, prev_stagnant = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iter; ++it) {
        double cond;
        Vec4 step = solve4(Jac, F, &cond);
        if (cond > 1e12) throw SingularA("extract_coordinates: frozen Jacobian ill conditioned");
        for (int i = 0; i < 4; ++i) x[i] -= step[i];
        double len = renormed_len(eps, step);
        if (it > 0 && prev_len > 0) out.contraction = std::max(out.contraction, len / prev_len);
        prev_len = len;
        out.iterations = it + 1;
        out.renormed_step = len;
        wf = fields_at(x);
        Feval(wf, F, &w1, &w2);
        if (len <= opts.tol) break;
        if (it > 4 && len > 1e3)
            throw NoConvergence("extract_coordinates: iteration diverging");
        if (it > 2 && len >= 0.9 * prev_stagnant) {
            // stalled at the sampling-noise floor
            if (len <= 1e3 * opts.tol) break;
            throw NoConvergence("extract_coordinates: stagnation above tolerance");
        }
        prev_stagnant = len;
    }
    if (out.renormed_step > 1e3 * opts.tol)
        throw NoConvergence("extract_coordinates: no contraction to tolerance");

    out.tau_plus = x[0];
    out.c_plus = x[1];
    out.tau_minus = x[2];
    out.c_minus = x[3];
    out.v1 = v1;
    out.v2 = std::move(w2);
    out.defects = F;

    // smallness precondition (usmall scale): ||v1|| + sum_a ||(u-uhat-v1) h_a||_a
    double scale = std::pow(eps, 2.5 + 0.1);
    double s = l2_norm(v1);
    for (int alpha : {+1, -1}) {
        double tau = (alpha > 0) ? x[0] : x[2];
        WeightSpec ws(a, std::max(1e-8, eps * eps / 10), tau, alpha);
        s += weighted_norm(localize(out.v2, alpha), ws, NormMode::one_sided);
    }
    out.usmall_ok = (s < scale);
    return out;
}

// Projection onto the symplectically orthogonal complement of the reference
// tangent pair; reference xi1 must be zero-mean in both components.
inline LatticeField project_Q(int alpha, const LatticeField& v, const LatticeField& xi1,
                              const LatticeField& xi2) {
    double w12 = omega(alpha, xi2, xi1);
    double w21 = omega(alpha, xi1, xi2);
    if (std::fabs(w12) < 1e-12)
        throw DegeneratePairing("project_Q: omega(xi2, xi1) below threshold");
    double w22 = omega(alpha, xi2, xi2);
    double o2v = omega(alpha, xi2, v);
    double o1v = omega(alpha, xi1, v);
    LatticeField out = v;
    double c1 = o2v / w12 + w22 * o1v / (w12 * w12);
    double c2 = o1v / w21;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.r[i] -= c1 * xi1.r[i] + c2 * xi2.r[i];
        out.p[i] -= c1 * xi1.p[i] + c2 * xi2.p[i];
    }
    return out;
}

struct ModulationRates {
    double gamma_dot_plus = 0.0, c_dot_plus = 0.0;
    double gamma_dot_minus = 0.0, c_dot_minus = 0.0;
    // diagnostics
    std::array<double, 2> Ntilde1{}, Ntilde2{}, N1{}, N2{};
    std::array<double, 2> g_alpha_norm{};
    Mat4 system{};
    Vec4 rhs{};
};

// Solve the 4x4 modulation system obtained by differentiating the
// orthogonality conditions in time.
inline ModulationRates modulation_rhs(WaveFamily& fam, const LatticeField& u,
                                      const LatticeField& v1, const TubularCoords& coords) {
    const PotentialSpec& V = fam.potential();
    const long off = u.offset;
    const std::size_t n = u.size();
    std::array<WaveFields, 2> wf{build_wave_fields(fam, coords.tau_plus, coords.c_plus, off, n),
                                 build_wave_fields(fam, coords.tau_minus, coords.c_minus, off, n)};

    // v = u - uhat ; v2 = v - v1
    LatticeField v(off, n, u.boundary), v2(off, n, u.boundary);
    for (std::size_t i = 0; i < n; ++i) {
        v.r[i] = u.r[i] - wf[0].u.r[i] - wf[1].u.r[i];
        v.p[i] = u.p[i] - wf[0].u.p[i] - wf[1].u.p[i];
        v2.r[i] = v.r[i] - v1.r[i];
        v2.p[i] = v.p[i] - v1.p[i];
    }

    // D1 = H'(u);  D2 = H'(u) - H'(v1)
    LatticeField D1(off, n, u.boundary), D2(off, n, u.boundary);
    for (std::size_t i = 0; i < n; ++i) {
        D1.r[i] = V.dV(u.r[i]);
        D1.p[i] = u.p[i];
        D2.r[i] = D1.r[i] - V.dV(v1.r[i]);
        D2.p[i] = D1.p[i] - v1.p[i];
    }
    LatticeField JD1 = apply_J(D1), JD2 = apply_J(D2);

    ModulationRates out;
    Mat4 M{};
    Vec4 rhs{};
    for (int ai = 0; ai < 2; ++ai) {
        int alpha = (ai == 0) ? +1 : -1;
        for (int bi = 0; bi < 2; ++bi) {
            const LatticeField* xis[2] = {&wf[bi].xi1, &wf[bi].xi2};
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    M[2 * ai + i][2 * bi + j] =
                        omega(alpha, *(i == 0 ? &wf[ai].xi1 : &wf[ai].xi2), localize(*xis[j], alpha));
        }
        LatticeField va = localize(v, alpha), v2a = localize(v2, alpha);
        M[2 * ai + 0][2 * ai + 0] -= omega(alpha, wf[ai].dtau_xi1, va);
        M[2 * ai + 0][2 * ai + 1] -= omega(alpha, wf[ai].dc_xi1, va);
        M[2 * ai + 1][2 * ai + 0] -= omega(alpha, wf[ai].dc_xi1, v2a);
        M[2 * ai + 1][2 * ai + 1] -= omega(alpha, wf[ai].dc_xi2, v2a);
        rhs[2 * ai + 0] = omega(alpha, wf[ai].xi1, localize(JD1, alpha));
        rhs[2 * ai + 1] = omega(alpha, wf[ai].xi2, localize(JD2, alpha));
    }
    double cond;
    Vec4 sol = solve4(M, rhs, &cond);
    if (cond > 1e12) throw SingularA("modulation_rhs: system ill conditioned");
    out.system = M;
    out.rhs = rhs;
    out.gamma_dot_plus = sol[0] - coords.c_plus;
    out.c_dot_plus = sol[1];
    out.gamma_dot_minus = sol[2] - coords.c_minus;
    out.c_dot_minus = sol[3];

    // diagnostics from the perturbation equation bookkeeping
    for (int ai = 0; ai < 2; ++ai) {
        int alpha = (ai == 0) ? +1 : -1;
        LatticeField v2a = localize(v2, alpha);
        // g_a = H'(u) - H'(v1) - H'(u_+) - H'(u_-) - H''(u_a) v_{2,a}
        LatticeField g(off, n, u.boundary);
        for (std::size_t i = 0; i < n; ++i) {
            g.r[i] = D2.r[i] - V.d2V(wf[ai].u.r[i]) * v2a.r[i];
            g.p[i] = D2.p[i] - v2a.p[i];
        }
        LatticeField Jg_a = localize(apply_J(g), alpha);
        out.Ntilde1[ai] = omega(alpha, wf[ai].xi1, Jg_a);
        out.Ntilde2[ai] = omega(alpha, wf[ai].xi2, Jg_a);
        double a_w = 0.5 * kappa_root(std::fabs(ai == 0 ? coords.c_plus : coords.c_minus),
                                      KappaKind::fpu_dispersion);
        WeightSpec ws(a_w, std::max(1e-8, fam.eps() * fam.eps() / 10),
                      ai == 0 ? coords.tau_plus : coords.tau_minus, alpha);
        out.g_alpha_norm[ai] = weighted_norm(Jg_a, ws, NormMode::one_sided);
        // N_{1,a} = -omega(xi1, L_a v_{1,a});  L_a v_{1,a} = (JH'(v1))h_a - JH''(u_a) v_{1,a}
        LatticeField v1a = localize(v1, alpha);
        LatticeField hv1(off, n, u.boundary);
        for (std::size_t i = 0; i < n; ++i) {
            hv1.r[i] = V.dV(v1.r[i]);
            hv1.p[i] = v1.p[i];
        }
        LatticeField Lv1 = localize(apply_J(hv1), alpha);
        LatticeField w(off, n, u.boundary);
        for (std::size_t i = 0; i < n; ++i) {
            w.r[i] = V.d2V(wf[ai].u.r[i]) * v1a.r[i];
            w.p[i] = v1a.p[i];
        }
        LatticeField Jw = apply_J(w);
        for (std::size_t i = 0; i < n; ++i) {
            Lv1.r[i] -= Jw.r[i];
            Lv1.p[i] -= Jw.p[i];
        }
        out.N1[ai] = -omega(alpha, wf[ai].xi1, Lv1);
        out.N2[ai] = -omega(alpha, wf[ai].xi1, v2a);
    }
    return out;
}

} // namespace fpulab
