#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fpulab/fit.hpp"
#include "fpulab/integrate.hpp"
#include "fpulab/modulation.hpp"
#include "fpulab/rng.hpp"

namespace fpulab {

struct PerturbationSpec {
    double loc_size = 0.0;    // l2 size of the localized, orthogonally projected part
    double nonloc_size = 0.0; // l2 size of the broad part, tracked as an exact solution
    double width_factor = 2.0;
    std::uint64_t seed = 1;
};

struct CollisionConfig {
    double eps = 0.2;
    double beta_plus = 1.0;
    double beta_minus = 1.0;
    double tau0_factor = 1.5; // initial phase = factor * T0
    double tau0_override = 0.0;
    double post_factor = 1.0; // run until the phases regain tau0 * post_factor
    double dt = 0.02;
    double out_stride = 2.0;
    int M = 1024;
    PerturbationSpec perturb;
    std::uint64_t seed = 1234;
};

struct CollisionRow {
    double t = 0.0;
    int regime = 0; // -1 approaching, 0 interaction, +1 separating
    bool extraction_ok = false;
    double sep = 0.0;          // |tau_rm - tau_lm| (ballistic when not extracted)
    double tau_rm = 0.0, c_rm = 0.0;
    double tau_lm = 0.0, c_lm = 0.0;
    double v_total = 0.0, v1 = 0.0, v2 = 0.0;
    double v2_plus_w = 0.0, v2_minus_w = 0.0; // side-weighted norms
    std::array<double, 4> defects{};
    double H = 0.0;
};

struct CollisionRecord {
    CollisionConfig cfg;
    double T0 = 0.0, tau0 = 0.0;
    double c_rm0 = 0.0, c_lm0 = 0.0;
    double main_wave_l2 = 0.0;
    double H0 = 0.0, energy_drift = 0.0;
    std::vector<CollisionRow> rows;

    // summary
    double pre_resid = 0.0;        // total residual at pre-crossing separation ~2 T0
    double post_resid = 0.0;       // total residual at the final snapshot
    double post_resid_loc = 0.0;   // near-wave channel
    double post_resid_nonloc = 0.0;
    double c_rm_pre = 0.0, c_rm_post = 0.0;
    double c_lm_pre = 0.0, c_lm_post = 0.0;
};

namespace detail {

inline double speed_of(double eps, double beta) { return std::sqrt(1.0 + eps * eps * beta / 12.0); }

// localized perturbation near phase tau on side alpha, projected against the
// wave's tangent pair, scaled to an l2 target
inline LatticeField make_localized_perturbation(WaveFamily& fam, double tau, double c_signed,
                                                int alpha, long off, std::size_t n, double size,
                                                double width_factor, Rng& rng) {
    LatticeField v(off, n, Boundary::zero_padded);
    double width = width_factor / fam.base().kappa();
    for (long k = v.first_site(); k <= v.last_site(); ++k) {
        double x = static_cast<double>(k) - tau;
        double env = std::exp(-x * x / (2 * width * width));
        if (env > 1e-14) {
            v.r[v.slot(k)] = rng.normal() * env;
            v.p[v.slot(k)] = rng.normal() * env;
        }
    }
    auto wf = build_wave_fields(fam, tau, c_signed, off, n);
    v = project_Q(alpha, v, wf.xi1, wf.xi2);
    double s = size / l2_norm(v);
    for (std::size_t i = 0; i < n; ++i) {
        v.r[i] *= s;
        v.p[i] *= s;
    }
    return v;
}

} // namespace detail

// Superposed counter-propagating waves at phases +-tau0 (right-mover on the
// side of `rm_phase_sign`), plus the configured perturbation.
struct CollisionState {
    LatticeField u;
    LatticeField v1;
    double tau0 = 0.0, T0 = 0.0;
    double c_rm = 0.0, c_lm = 0.0;
    double main_wave_l2 = 0.0;
};

inline CollisionState build_collision_state(WaveFamily& fam, const CollisionConfig& cfg,
                                            long off, std::size_t n, int rm_phase_sign,
                                            Boundary b = Boundary::periodic) {
    CollisionState st;
    double a = fam.base().kappa() / 2;
    st.T0 = separation_threshold(cfg.eps, a);
    st.tau0 = cfg.tau0_override > 0 ? cfg.tau0_override : cfg.tau0_factor * st.T0;
    st.c_rm = detail::speed_of(cfg.eps, cfg.beta_plus);
    st.c_lm = -detail::speed_of(cfg.eps, cfg.beta_minus);

    st.u = LatticeField(off, n, b);
    double tau_rm = rm_phase_sign * st.tau0;
    add_sampled_wave(st.u, fam.at_speed(st.c_rm), tau_rm, +1);
    add_sampled_wave(st.u, fam.at_speed(-st.c_lm), -tau_rm, -1);
    {
        LatticeField one(off, n, b);
        add_sampled_wave(one, fam.at_speed(st.c_rm), tau_rm, +1);
        st.main_wave_l2 = l2_norm(one);
    }

    st.v1 = LatticeField(off, n, b);
    Rng rng(cfg.perturb.seed);
    if (cfg.perturb.loc_size > 0) {
        int alpha = (tau_rm > 0) ? +1 : -1;
        auto v2 = detail::make_localized_perturbation(fam, tau_rm, st.c_rm, alpha, off, n,
                                                      cfg.perturb.loc_size,
                                                      cfg.perturb.width_factor, rng);
        for (std::size_t i = 0; i < n; ++i) {
            st.u.r[i] += v2.r[i];
            st.u.p[i] += v2.p[i];
        }
    }
    if (cfg.perturb.nonloc_size > 0) {
        LatticeField w(off, n, b);
        double width = st.tau0 / 2;
        for (long k = w.first_site(); k <= w.last_site(); ++k) {
            double env = std::exp(-static_cast<double>(k) * k / (2 * width * width));
            w.r[w.slot(k)] = rng.normal() * env;
            w.p[w.slot(k)] = rng.normal() * env;
        }
        double s = cfg.perturb.nonloc_size / l2_norm(w);
        for (std::size_t i = 0; i < n; ++i) {
            w.r[i] *= s;
            w.p[i] *= s;
            st.u.r[i] += w.r[i];
            st.u.p[i] += w.p[i];
        }
        st.v1 = w;
    }
    return st;
}

// Evolve an approaching pair through the crossing, extracting tubular
// coordinates wherever the separation permits; extraction is suspended in
// the interaction window and re-seeded ballistically afterwards.
inline CollisionRecord run_collision(const CollisionConfig& cfg) {
    PotentialSpec V = PotentialSpec::cubic_quartic(0.0);
    WaveFamily fam(V, cfg.eps, cfg.beta_plus, cfg.M);
    double kappa = fam.base().kappa();
    double a = kappa / 2;

    CollisionRecord rec;
    rec.cfg = cfg;
    rec.T0 = separation_threshold(cfg.eps, a);
    rec.tau0 = cfg.tau0_override > 0 ? cfg.tau0_override : cfg.tau0_factor * rec.T0;
    double post_tau = std::max(cfg.post_factor * rec.tau0, 1.05 * rec.T0);

    double cbar = detail::speed_of(cfg.eps, cfg.beta_plus);
    long span = std::lround(std::max(rec.tau0, post_tau) + 60.0 / kappa);
    long off = -span;
    std::size_t n = static_cast<std::size_t>(2 * span + 1);

    // approaching configuration: right-mover starts on the negative side
    auto st = build_collision_state(fam, cfg, off, n, -1);
    rec.c_rm0 = st.c_rm;
    rec.c_lm0 = st.c_lm;
    rec.main_wave_l2 = st.main_wave_l2;
    LatticeField u = st.u, v1 = st.v1;
    rec.H0 = hamiltonian_energy(u, V);

    double t = 0.0;
    double T_end = (rec.tau0 + post_tau) / cbar;
    // ballistic mover states, refreshed by successful extractions
    double tau_rm = -rec.tau0, c_rm = st.c_rm;
    double tau_lm = +rec.tau0, c_lm = st.c_lm;
    double t_ref = 0.0;
    int post_fail_count = 0;

    std::vector<double> scratch;
    auto record_row = [&](double tnow) {
        double brm = tau_rm + c_rm * (tnow - t_ref);
        double blm = tau_lm + c_lm * (tnow - t_ref);
        CollisionRow row;
        row.t = tnow;
        row.H = hamiltonian_energy(u, V);
        rec.energy_drift = std::max(
            rec.energy_drift, std::fabs(row.H - rec.H0) / std::max(1.0, std::fabs(rec.H0)));
        row.sep = std::fabs(brm - blm);
        bool rm_right = brm > 0;
        double tp = rm_right ? brm : blm, tm = rm_right ? blm : brm;
        row.regime = (brm < blm) ? -1 : +1;
        if (std::fabs(brm) < rec.T0 || std::fabs(blm) < rec.T0) row.regime = 0;
        row.tau_rm = brm;
        row.c_rm = c_rm;
        row.tau_lm = blm;
        row.c_lm = c_lm;
        if (row.regime != 0 && tp > rec.T0 && tm < -rec.T0) {
            try {
                ExtractGuess g{tp, rm_right ? c_rm : c_lm, tm, rm_right ? c_lm : c_rm};
                auto coords = extract_coordinates(fam, u, v1, g);
                row.extraction_ok = true;
                row.defects = coords.defects;
                if (rm_right) {
                    row.tau_rm = coords.tau_plus;
                    row.c_rm = coords.c_plus;
                    row.tau_lm = coords.tau_minus;
                    row.c_lm = coords.c_minus;
                } else {
                    row.tau_lm = coords.tau_plus;
                    row.c_lm = coords.c_plus;
                    row.tau_rm = coords.tau_minus;
                    row.c_rm = coords.c_minus;
                }
                row.sep = std::fabs(row.tau_rm - row.tau_lm);
                row.v1 = l2_norm(v1);
                row.v2 = l2_norm(coords.v2);
                row.v_total = l2_norm(axpy(coords.v2, 1.0, v1));
                WeightSpec wp(a, cfg.eps * cfg.eps / 10, coords.tau_plus, +1);
                WeightSpec wm(a, cfg.eps * cfg.eps / 10, coords.tau_minus, -1);
                row.v2_plus_w = weighted_norm(localize(coords.v2, +1), wp, NormMode::one_sided);
                row.v2_minus_w = weighted_norm(localize(coords.v2, -1), wm, NormMode::one_sided);
                // refresh the ballistic reference
                tau_rm = row.tau_rm;
                c_rm = row.c_rm;
                tau_lm = row.tau_lm;
                c_lm = row.c_lm;
                t_ref = tnow;
                if (row.regime > 0) post_fail_count = 0;
            } catch (const Error&) {
                row.extraction_ok = false;
                if (row.regime > 0 && ++post_fail_count > 8)
                    throw InteractionWindowTooLong(
                        "run_collision: extraction could not be re-seeded after the crossing");
            }
        }
        rec.rows.push_back(row);
    };

    record_row(0.0);
    long stride_steps = std::max<long>(1, std::lround(cfg.out_stride / cfg.dt));
    long nsteps = static_cast<long>(std::ceil(T_end / cfg.dt) + 0.5);
    for (long s = 0; s < nsteps; ++s) {
        step_strang_inplace(u, V, cfg.dt, scratch);
        if (l2_norm(v1) > 0) step_strang_inplace(v1, V, cfg.dt, scratch);
        t += cfg.dt;
        if ((s + 1) % stride_steps == 0 || s + 1 == nsteps) record_row(t);
    }

    // summaries
    auto near_sep = [&](int regime, double target) -> const CollisionRow* {
        const CollisionRow* best = nullptr;
        for (const auto& r : rec.rows)
            if (r.extraction_ok && r.regime == regime)
                if (!best || std::fabs(r.sep - target) < std::fabs(best->sep - target)) best = &r;
        return best;
    };
    if (const auto* r = near_sep(-1, 2.0 * rec.T0)) {
        rec.pre_resid = r->v_total;
        rec.c_rm_pre = r->c_rm;
        rec.c_lm_pre = r->c_lm;
    }
    for (auto it = rec.rows.rbegin(); it != rec.rows.rend(); ++it)
        if (it->extraction_ok && it->regime > 0) {
            rec.post_resid = it->v_total;
            rec.c_rm_post = it->c_rm;
            rec.c_lm_post = it->c_lm;
            // channel split at the final snapshot: near-wave mass (windows of
            // half the separation around each phase) vs far-field mass
            const CollisionRow& row = *it;
            double W = row.sep / 2;
            LatticeField far = u, nearf = u;
            for (long k = u.first_site(); k <= u.last_site(); ++k) {
                bool nearwave = std::fabs(k - row.tau_rm) <= W || std::fabs(k - row.tau_lm) <= W;
                std::size_t i = u.slot(k);
                (nearwave ? far : nearf).r[i] = 0.0;
                (nearwave ? far : nearf).p[i] = 0.0;
            }
            LatticeField uhat(off, n, u.boundary);
            add_sampled_wave(uhat, fam.at_speed(std::fabs(row.c_rm)), row.tau_rm, +1);
            add_sampled_wave(uhat, fam.at_speed(std::fabs(row.c_lm)), row.tau_lm, -1);
            for (std::size_t i = 0; i < n; ++i) {
                nearf.r[i] -= uhat.r[i];
                nearf.p[i] -= uhat.p[i];
            }
            rec.post_resid_loc = l2_norm(nearf);
            rec.post_resid_nonloc = l2_norm(far);
            break;
        }
    return rec;
}

struct ScanReport {
    std::vector<double> eps, resid_total, resid_loc, resid_nonloc;
    std::vector<double> c_shift_rm, c_shift_lm, resid_ratio, pre_ratio;
    LineFit fit_total, fit_loc, fit_nonloc;
    std::vector<CollisionRecord> records;
};

inline ScanReport scan_epsilon(const std::vector<CollisionConfig>& cfgs) {
    if (cfgs.size() < 4) throw DomainError("scan_epsilon: need at least 4 epsilon values");
    ScanReport rep;
    for (const auto& cfg : cfgs) {
        auto rec = run_collision(cfg);
        rep.eps.push_back(cfg.eps);
        rep.resid_total.push_back(rec.post_resid);
        rep.resid_loc.push_back(rec.post_resid_loc);
        rep.resid_nonloc.push_back(rec.post_resid_nonloc);
        rep.c_shift_rm.push_back(std::fabs(rec.c_rm_post - rec.c_rm_pre));
        rep.c_shift_lm.push_back(std::fabs(rec.c_lm_post - rec.c_lm_pre));
        rep.resid_ratio.push_back(rec.post_resid / rec.main_wave_l2);
        rep.pre_ratio.push_back(rec.pre_resid / rec.main_wave_l2);
        rep.records.push_back(std::move(rec));
    }
    rep.fit_total = fit_loglog(rep.eps, rep.resid_total);
    rep.fit_loc = fit_loglog(rep.eps, rep.resid_loc);
    rep.fit_nonloc = fit_loglog(rep.eps, rep.resid_nonloc);
    return rep;
}

// -------- driven correction fields of the finite-time estimate --------

struct CorrectionRun {
    std::vector<double> t;
    std::vector<double> phi_energy;  // sqrt(|phi1|^2 + |phi2|^2)
    std::vector<double> psi_energy;
    std::vector<double> phi_plus_w, phi_minus_w;
    std::vector<double> source_wnorm; // eps^{eta0-7/2} max_a ||(I-S^9{-1}) r+ r-||_a
    double horizon = 0.0;
    double sup_phi = 0.0, sup_psi = 0.0;
    double C_source = 0.0; // fitted constant in the eps^{1+eta0} bound
    double gronwall_bound = 0.0;
};

inline CorrectionRun interaction_correction_run(const CollisionConfig& cfg, double eta0 = 0.25,
                                                double C1 = 1.0, double eta1 = 0.1,
                                                double T_override = 0.0) {
    PotentialSpec V = PotentialSpec::cubic_quartic(0.0);
    WaveFamily fam(V, cfg.eps, cfg.beta_plus, cfg.M);
    double kappa = fam.base().kappa();
    double a = kappa / 2;
    double T0 = separation_threshold(cfg.eps, a);
    double tau0 = cfg.tau0_override > 0 ? cfg.tau0_override : cfg.tau0_factor * T0;
    double c_rm = detail::speed_of(cfg.eps, cfg.beta_plus);
    double c_lm = -detail::speed_of(cfg.eps, cfg.beta_minus);
    const WaveEntry& erm = fam.at_speed(c_rm);
    const WaveEntry& elm = fam.at_speed(-c_lm);

    double T_run = T_override > 0 ? T_override
                                  : std::max(C1 * std::pow(cfg.eps, -1.0 - eta1), 2.0 * tau0 / c_rm);
    long span = std::lround(std::max(tau0, c_rm * T_run - tau0) + 60.0 / kappa);
    long off = -span;
    std::size_t n = static_cast<std::size_t>(2 * span + 1);

    double amp_phi = 2.0 * std::pow(cfg.eps, -3.5 + eta0);
    double amp_psi = 2.0 * std::pow(cfg.eps, -1.0 + eta0);

    std::vector<double> phi1(n, 0.0), phi2(n, 0.0), psi1(n, 0.0), psi2(n, 0.0);
    std::vector<double> rrm(n), rlm(n), prod(n), f(n);

    auto sample_sources = [&](double tnow) {
        double th_rm = -tau0 + c_rm * tnow, th_lm = +tau0 + c_lm * tnow;
        for (std::size_t i = 0; i < n; ++i) {
            double k = static_cast<double>(off + static_cast<long>(i));
            rrm[i] = erm.r(k - th_rm);
            rlm[i] = elm.r(k - th_lm);
        }
    };
    auto kick = [&](std::vector<double>& p1, std::vector<double>& p2, double amp, double h,
                    const std::vector<double>& drive) {
        // p2 += h (I - S^{-1})(p1 + amp * drive)
        for (std::size_t i = 0; i < n; ++i) f[i] = p1[i] + amp * drive[i];
        for (std::size_t i = n; i-- > 1;) p2[i] += h * (f[i] - f[i - 1]);
        p2[0] += h * f[0];
    };
    auto drift = [&](std::vector<double>& p1, const std::vector<double>& p2, double h) {
        for (std::size_t i = 0; i + 1 < n; ++i) p1[i] += h * (p2[i + 1] - p2[i]);
        p1[n - 1] -= h * p2[n - 1];
    };

    CorrectionRun out;
    out.horizon = T_run;
    double t = 0.0;
    long nsteps = static_cast<long>(std::ceil(T_run / cfg.dt) + 0.5);
    long stride = std::max<long>(1, std::lround(cfg.out_stride / cfg.dt));
    auto measure = [&](double tnow) {
        sample_sources(tnow);
        out.t.push_back(tnow);
        double e_phi = std::sqrt(std::pow(l2_norm(phi1), 2) + std::pow(l2_norm(phi2), 2));
        double e_psi = std::sqrt(std::pow(l2_norm(psi1), 2) + std::pow(l2_norm(psi2), 2));
        out.phi_energy.push_back(e_phi);
        out.psi_energy.push_back(e_psi);
        out.sup_phi = std::max(out.sup_phi, e_phi);
        out.sup_psi = std::max(out.sup_psi, e_psi);
        double th_rm = -tau0 + c_rm * tnow, th_lm = +tau0 + c_lm * tnow;
        WeightSpec wp(a, cfg.eps * cfg.eps / 10, th_rm, +1);
        WeightSpec wm(a, cfg.eps * cfg.eps / 10, th_lm, -1);
        double np = std::hypot(weighted_norm(phi1, off, wp, NormMode::one_sided),
                               weighted_norm(phi2, off, wp, NormMode::one_sided));
        double nm = std::hypot(weighted_norm(phi1, off, wm, NormMode::one_sided),
                               weighted_norm(phi2, off, wm, NormMode::one_sided));
        out.phi_plus_w.push_back(np);
        out.phi_minus_w.push_back(nm);
        for (std::size_t i = 0; i < n; ++i) prod[i] = rrm[i] * rlm[i];
        std::vector<double> dsrc(n);
        shift_down_diff(prod, Boundary::zero_padded, dsrc);
        double sw = std::max(weighted_norm(dsrc, off, wp, NormMode::one_sided),
                             weighted_norm(dsrc, off, wm, NormMode::one_sided));
        sw *= std::pow(cfg.eps, eta0 - 3.5);
        out.source_wnorm.push_back(sw);
        out.C_source = std::max(out.C_source, sw / std::pow(cfg.eps, 1.0 + eta0));
    };
    measure(0.0);
    for (long s = 0; s < nsteps; ++s) {
        sample_sources(t);
        for (std::size_t i = 0; i < n; ++i) prod[i] = amp_phi * rrm[i] * rlm[i];
        kick(phi1, phi2, 1.0, cfg.dt / 2, prod);
        for (std::size_t i = 0; i < n; ++i) prod[i] = amp_psi * (rrm[i] + rlm[i]) * phi1[i];
        kick(psi1, psi2, 1.0, cfg.dt / 2, prod);
        drift(phi1, phi2, cfg.dt);
        drift(psi1, psi2, cfg.dt);
        sample_sources(t + cfg.dt);
        for (std::size_t i = 0; i < n; ++i) prod[i] = amp_phi * rrm[i] * rlm[i];
        kick(phi1, phi2, 1.0, cfg.dt / 2, prod);
        for (std::size_t i = 0; i < n; ++i) prod[i] = amp_psi * (rrm[i] + rlm[i]) * phi1[i];
        kick(psi1, psi2, 1.0, cfg.dt / 2, prod);
        t += cfg.dt;
        if ((s + 1) % stride == 0 || s + 1 == nsteps) measure(t);
    }
    // Gronwall-type admissible bound on the squared energy, from the fitted
    // source size over the realized horizon
    double C0 = out.C_source * std::pow(cfg.eps, 1.0 + eta0);
    out.gronwall_bound = std::exp(2.0 * C0 * T_run);
    return out;
}

// -------- virial diagnostic --------

struct VirialSeries {
    std::vector<double> t, M, D, intD;
    double C2 = 0.0;        // fitted constant of the Lyapunov combination
    bool monotone = true;   // M(t) <= M(t0) (1 + 1e-8)
    bool lyapunov_ok = true;
};

// M(t) = sum psi |v|^2 with psi = 1 + tanh(abar (x - tau(t))); the trajectory
// must be an exact small solution and the weight frame supersonic.
template <class TauFn>
VirialSeries virial_series(const LatticeField& v0, const PotentialSpec& V, TauFn&& tau,
                           double abar, double T, double dt, double C0 = 10.0,
                           int measure_stride = 10) {
    double h = 1e-6;
    for (double tt : {0.0, T / 2, T}) {
        double taudot = (tau(tt + h) - tau(tt - h)) / (2 * h);
        if (taudot <= 1.0 + C0 * abar)
            throw SpeedViolation("virial_series: weight frame is not supersonic enough");
    }
    VirialSeries out;
    LatticeField v = v0;
    std::vector<double> scratch;
    double intD = 0.0, lastD = -1.0;
    auto measure = [&](double tnow) {
        double Mv = 0.0, Dv = 0.0;
        for (long k = v.first_site(); k <= v.last_site(); ++k) {
            double x = abar * (static_cast<double>(k) - tau(tnow));
            double sq = v.r[v.slot(k)] * v.r[v.slot(k)] + v.p[v.slot(k)] * v.p[v.slot(k)];
            double th = std::tanh(x);
            Mv += (1.0 + th) * sq;
            Dv += abar * (1.0 - th * th) * sq;
        }
        if (lastD >= 0) intD += 0.5 * (lastD + Dv) * (dt * measure_stride);
        lastD = Dv;
        out.t.push_back(tnow);
        out.M.push_back(Mv);
        out.D.push_back(Dv);
        out.intD.push_back(intD);
    };
    measure(0.0);
    long nsteps = static_cast<long>(std::ceil(T / dt) + 0.5);
    for (long s = 0; s < nsteps; ++s) {
        step_strang_inplace(v, V, dt, scratch);
        if ((s + 1) % measure_stride == 0 || s + 1 == nsteps) measure((s + 1) * dt);
    }
    double M0 = out.M.front();
    for (double m : out.M)
        if (m > M0 * (1.0 + 1e-8)) out.monotone = false;
    // smallest C2 with (C2/abar) M(t) + int D non-increasing, then verify
    double C2 = 0.0;
    for (std::size_t i = 1; i < out.M.size(); ++i) {
        double dM = out.M[i] - out.M[i - 1];
        double dI = out.intD[i] - out.intD[i - 1];
        if (dM < -1e-300) C2 = std::max(C2, abar * dI / (-dM));
    }
    out.C2 = C2;
    double prev = (C2 / abar) * out.M[0];
    for (std::size_t i = 1; i < out.M.size(); ++i) {
        double Lv = (C2 / abar) * out.M[i] + out.intD[i];
        if (Lv > prev * (1.0 + 1e-8) + 1e-14) out.lyapunov_ok = false;
        prev = std::max(prev, Lv);
    }
    return out;
}

// -------- convexity energy estimate --------

struct EnergySnapshot {
    double v_norm = 0.0;                // ||v||
    double c_plus = 0.0, c_minus = 0.0; // modulated speeds
    double tau_plus = 0.0, tau_minus = 0.0;
    double v_plus = 0.0, v_minus = 0.0; // ||v h_alpha||
};

struct EnergyEstimate {
    double lhs = 0.0, bracket = 0.0;
    double K = 0.0; // smallest admissible constant
};

inline EnergyEstimate energy_estimate_check(double eps, double kappa, const EnergySnapshot& s0,
                                            const EnergySnapshot& s1) {
    EnergyEstimate e;
    e.lhs = s1.v_norm * s1.v_norm;
    double tails = 0.0;
    for (const auto* s : {&s0, &s1}) {
        tails += std::exp(-kappa * s->tau_plus) * (1.0 + s->v_plus);
        tails += std::exp(kappa * s->tau_minus) * (1.0 + s->v_minus);
    }
    e.bracket = s0.v_norm * s0.v_norm +
                eps * (std::fabs(s1.c_plus - s0.c_plus) + std::fabs(s1.c_minus - s0.c_minus)) +
                tails;
    e.K = e.lhs / e.bracket;
    return e;
}

// -------- stability run --------

struct StabilityConfig {
    double eps = 0.2;
    double loc_size_exp = 3.5;   // localized perturbation of size eps^exp
    double nonloc_size = 0.0;
    double T = 0.0;              // 0: auto from the expected decay rate
    double dt = 0.05;
    int M = 1024;
    int samples = 60;
    std::uint64_t seed = 7;
};

struct StabilityRecord {
    std::vector<double> t, v2p_w, v1_W, v_total, c_plus, c_minus;
    double b_fit = 0.0, r2 = 0.0;
    double c_shift = 0.0;          // |c_+(T) - c_+(0)|
    double T5E1_K = 0.0;           // c-shift over eps^{-1} ||v2(0)||_+^2
    double v2w0 = 0.0;
    double cauchy_tail = 0.0;      // |c(T) - c(T/2)|
};

inline StabilityRecord stability_run(const StabilityConfig& scfg) {
    PotentialSpec V = PotentialSpec::cubic_quartic(0.0);
    WaveFamily fam(V, scfg.eps, 1.0, scfg.M);
    double kappa = fam.base().kappa();
    double a = kappa / 2;
    double c = fam.base().c();
    double T0 = separation_threshold(scfg.eps, a);
    double tau0 = 1.5 * T0;
    double b_guess = a * (c - 1.0);
    double T = scfg.T > 0 ? scfg.T : std::min(1.0 / b_guess, 4e4);

    long span = std::lround(tau0 + c * T + 80.0 / kappa);
    long off = -span;
    std::size_t n = static_cast<std::size_t>(2 * span + 1);

    LatticeField u(off, n, Boundary::periodic);
    add_sampled_wave(u, fam.base(), +tau0, +1);
    add_sampled_wave(u, fam.base(), -tau0, -1);
    LatticeField v1(off, n, Boundary::periodic);

    Rng rng(scfg.seed);
    double v2size = std::pow(scfg.eps, scfg.loc_size_exp);
    auto v2 = detail::make_localized_perturbation(fam, tau0, c, +1, off, n, v2size, 2.0, rng);
    for (std::size_t i = 0; i < n; ++i) {
        u.r[i] += v2.r[i];
        u.p[i] += v2.p[i];
    }
    if (scfg.nonloc_size > 0) {
        for (long k = -span / 2; k <= span / 2; ++k) {
            double env = std::exp(-static_cast<double>(k) * k / (2.0 * tau0 * tau0));
            v1.r[v1.slot(k)] = rng.normal() * env;
            v1.p[v1.slot(k)] = rng.normal() * env;
        }
        double s = scfg.nonloc_size / l2_norm(v1);
        for (std::size_t i = 0; i < n; ++i) {
            v1.r[i] *= s;
            v1.p[i] *= s;
            u.r[i] += v1.r[i];
            u.p[i] += v1.p[i];
        }
    }

    StabilityRecord rec;
    double tau_p = tau0, c_p = c, tau_m = -tau0, c_m = -c, t_ref = 0.0;
    std::vector<double> scratch;
    double t = 0.0;
    double stride_t = T / scfg.samples;
    long stride = std::max<long>(1, std::lround(stride_t / scfg.dt));
    long nsteps = static_cast<long>(std::ceil(T / scfg.dt) + 0.5);

    auto measure = [&](double tnow) {
        ExtractGuess g{tau_p + c_p * (tnow - t_ref), c_p, tau_m + c_m * (tnow - t_ref), c_m};
        auto coords = extract_coordinates(fam, u, v1, g);
        tau_p = coords.tau_plus;
        c_p = coords.c_plus;
        tau_m = coords.tau_minus;
        c_m = coords.c_minus;
        t_ref = tnow;
        rec.t.push_back(tnow);
        WeightSpec wp(a, scfg.eps * scfg.eps / 10, coords.tau_plus, +1);
        rec.v2p_w.push_back(
            weighted_norm(localize(coords.v2, +1), wp, NormMode::one_sided));
        rec.v1_W.push_back(weighted_norm(v1, wp, NormMode::two_sided));
        rec.v_total.push_back(l2_norm(axpy(coords.v2, 1.0, v1)));
        rec.c_plus.push_back(coords.c_plus);
        rec.c_minus.push_back(coords.c_minus);
    };
    measure(0.0);
    rec.v2w0 = rec.v2p_w.front();
    for (long s = 0; s < nsteps; ++s) {
        step_strang_inplace(u, V, scfg.dt, scratch);
        if (scfg.nonloc_size > 0) step_strang_inplace(v1, V, scfg.dt, scratch);
        t += scfg.dt;
        if ((s + 1) % stride == 0 || s + 1 == nsteps) measure(t);
    }

    // fit the decaying stretch of the weighted norm
    std::vector<double> ft, fl;
    for (std::size_t i = 0; i < rec.t.size(); ++i)
        if (rec.t[i] >= 0.15 * T && rec.v2p_w[i] > 0) {
            ft.push_back(rec.t[i]);
            fl.push_back(std::log(rec.v2p_w[i]));
        }
    auto lf = fit_line(ft, fl);
    rec.b_fit = -lf.slope;
    rec.r2 = lf.r2;
    rec.c_shift = std::fabs(rec.c_plus.back() - rec.c_plus.front());
    rec.T5E1_K = rec.c_shift / (std::pow(scfg.eps, -1.0) * rec.v2w0 * rec.v2w0);
    double cmid = rec.c_plus[rec.c_plus.size() / 2];
    rec.cauchy_tail = std::fabs(rec.c_plus.back() - cmid);
    return rec;
}

} // namespace fpulab
