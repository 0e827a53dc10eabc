#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fpulab/lattice.hpp"

namespace fpulab {

namespace detail {

inline void half_kick(LatticeField& u, const PotentialSpec& V, double h,
                      std::vector<double>& scratch) {
    std::size_t n = u.size();
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = V.dV(u.r[i]);
    // p += h (1 - S^{-1}) V'(r)
    if (u.boundary == Boundary::periodic) {
        double first = scratch[0] - scratch[n - 1];
        for (std::size_t i = n - 1; i > 0; --i) u.p[i] += h * (scratch[i] - scratch[i - 1]);
        u.p[0] += h * first;
    } else {
        for (std::size_t i = n - 1; i > 0; --i) u.p[i] += h * (scratch[i] - scratch[i - 1]);
        u.p[0] += h * scratch[0];
    }
}

inline void drift(LatticeField& u, double h) {
    std::size_t n = u.size();
    // r += h (S - 1) p
    if (u.boundary == Boundary::periodic) {
        double last = u.p[0] - u.p[n - 1];
        for (std::size_t i = 0; i + 1 < n; ++i) u.r[i] += h * (u.p[i + 1] - u.p[i]);
        u.r[n - 1] += h * last;
    } else {
        for (std::size_t i = 0; i + 1 < n; ++i) u.r[i] += h * (u.p[i + 1] - u.p[i]);
        u.r[n - 1] += h * (0.0 - u.p[n - 1]);
    }
}

} // namespace detail

// One Strang step: half kick, drift, half kick. Time-reversible and symplectic.
inline void step_strang_inplace(LatticeField& u, const PotentialSpec& V, double dt,
                                std::vector<double>& scratch) {
    if (std::fabs(dt) >= 1.0) throw StepTooLarge("step_strang: |dt| must be < 1");
    detail::half_kick(u, V, dt / 2.0, scratch);
    detail::drift(u, dt);
    detail::half_kick(u, V, dt / 2.0, scratch);
}

inline LatticeField step_strang(const LatticeField& u, const PotentialSpec& V, double dt) {
    LatticeField out = u;
    std::vector<double> scratch;
    step_strang_inplace(out, V, dt, scratch);
    return out;
}

struct Observer {
    std::string name;
    std::function<double(double /*t*/, const LatticeField&)> eval;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<LatticeField> states;                // sampled every snapshot_stride steps
    std::vector<std::vector<double>> observer_rows;  // one row per sample
    std::vector<std::string> observer_names;
};

struct EvolveOptions {
    int snapshot_stride = 0;   // 0: keep only initial and final state
    double support_floor = 1e-12;
    bool check_window = true;  // zero-padded margin rule
    double kappa = 0.0;        // for the margin 10/kappa; 0 disables
};

// Apply step_strang ceil(T/dt) times (last step shortened to land on T).
inline Trajectory evolve(const LatticeField& u0, const PotentialSpec& V, double T, double dt,
                         const std::vector<Observer>& observers = {},
                         const EvolveOptions& opts = {}) {
    u0.check();
    if (std::fabs(dt) >= 1.0) throw StepTooLarge("evolve: |dt| must be < 1");

    Trajectory traj;
    for (const auto& o : observers) traj.observer_names.push_back(o.name);

    LatticeField u = u0;
    std::vector<double> scratch;

    long margin = (opts.kappa > 0.0) ? std::lround(10.0 / opts.kappa) : 8;
    auto window_ok = [&]() {
        if (!opts.check_window || u.boundary != Boundary::zero_padded) return true;
        long n = static_cast<long>(u.size());
        for (long i = 0; i < std::min(margin, n); ++i) {
            if (std::fabs(u.r[i]) > opts.support_floor || std::fabs(u.p[i]) > opts.support_floor ||
                std::fabs(u.r[n - 1 - i]) > opts.support_floor ||
                std::fabs(u.p[n - 1 - i]) > opts.support_floor)
                return false;
        }
        return true;
    };

    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.states.push_back(u);
        std::vector<double> row;
        row.reserve(observers.size());
        for (const auto& o : observers) row.push_back(o.eval(t, u));
        traj.observer_rows.push_back(row);
    };

    record(0.0);
    if (T == 0.0) return traj;

    double sgn = (T > 0) ? 1.0 : -1.0;
    long nsteps = static_cast<long>(std::ceil(std::fabs(T) / std::fabs(dt)) + 0.5);
    double t = 0.0;
    for (long s = 0; s < nsteps; ++s) {
        double h = sgn * std::min(std::fabs(dt), std::fabs(T) - std::fabs(t));
        step_strang_inplace(u, V, h, scratch);
        t += h;
        if (!window_ok())
            throw WindowViolation("evolve: support reached the zero-padded margin");
        bool last = (s + 1 == nsteps);
        if ((opts.snapshot_stride > 0 && (s + 1) % opts.snapshot_stride == 0 && !last) || last)
            record(t);
    }
    return traj;
}

} // namespace fpulab
