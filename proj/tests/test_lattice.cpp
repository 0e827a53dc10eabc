#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpulab/integrate.hpp"
#include "fpulab/lattice.hpp"
#include "fpulab/rng.hpp"

using namespace fpulab;

namespace {
LatticeField zero_field(long off, std::size_t n, Boundary b = Boundary::periodic) {
    return LatticeField(off, n, b);
}
} // namespace

TEST_CASE("hamiltonian energy point values", "[lattice]") {
    auto V = PotentialSpec::toda();
    auto u = zero_field(-8, 16);
    CHECK(hamiltonian_energy(u, V) == 0.0);

    u.r[u.slot(0)] = 1.0;
    CHECK_THAT(hamiltonian_energy(u, V), Catch::Matchers::WithinAbs(std::exp(1.0) - 2.0, 1e-14));

    u.r[u.slot(0)] = 0.0;
    u.p[u.slot(0)] = 2.0;
    CHECK_THAT(hamiltonian_energy(u, V), Catch::Matchers::WithinAbs(2.0, 1e-14));
}

TEST_CASE("potential normalization and evaluators", "[lattice]") {
    auto toda = PotentialSpec::toda();
    CHECK(toda.V(0.7) == Catch::Approx(std::exp(0.7) - 1.0 - 0.7).epsilon(1e-14));
    auto cq = PotentialSpec::cubic_quartic(-1.0 / 24.0);
    CHECK(cq.d4V(0.0) == Catch::Approx(-1.0));
    // H1 normalization holds for both kinds by construction
    for (const auto& V : {toda, cq}) {
        CHECK(V.V(0) == 0.0);
        CHECK(V.dV(0) == 0.0);
        CHECK(V.d2V(0) == Catch::Approx(1.0));
        CHECK(V.d3V(0) == Catch::Approx(1.0));
    }
}

TEST_CASE("apply_J stencil and zero-mean outputs", "[lattice]") {
    SECTION("constant fields map to zero on a periodic window") {
        auto u = zero_field(-10, 20);
        for (auto& x : u.r) x = 0.7;
        for (auto& x : u.p) x = -1.3;
        auto Ju = apply_J(u);
        CHECK(linf_norm(Ju) == 0.0);
    }
    SECTION("unit impulse stencil") {
        auto u = zero_field(-8, 16, Boundary::zero_padded);
        u.p[u.slot(0)] = 1.0; // p = impulse at k=0
        auto Ju = apply_J(u);
        // r-output = (S-1)p: +1 at k=-1, -1 at k=0
        CHECK(Ju.r[Ju.slot(-1)] == 1.0);
        CHECK(Ju.r[Ju.slot(0)] == -1.0);
        CHECK(Ju.p[Ju.slot(0)] == 0.0);
    }
    SECTION("both components sum to zero over a periodic window") {
        Rng rng(5);
        auto u = zero_field(-16, 32);
        for (auto& x : u.r) x = rng.normal();
        for (auto& x : u.p) x = rng.normal();
        auto Ju = apply_J(u);
        double sr = 0, sp = 0;
        for (double x : Ju.r) sr += x;
        for (double x : Ju.p) sp += x;
        double tol = 1e-12 * u.size() * linf_norm(u);
        CHECK(std::fabs(sr) <= tol);
        CHECK(std::fabs(sp) <= tol);
    }
}

TEST_CASE("vector field limits", "[lattice]") {
    auto V = PotentialSpec::toda();
    auto u = zero_field(-8, 16);
    CHECK(linf_norm(vector_field(u, V)) == 0.0);

    // linearized regime: pdot ~ (1 - S^{-1}) r up to O(|r|^2)
    Rng rng(17);
    double amp = 1e-4;
    for (auto& x : u.r) x = amp * rng.normal();
    auto f = vector_field(u, V);
    std::vector<double> lin;
    shift_down_diff(u.r, u.boundary, lin);
    double worst = 0;
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::fabs(f.p[i] - lin[i]));
    double rn = sup_abs(u.r);
    CHECK(worst <= 2.0 * rn * rn);
}

TEST_CASE("strang step basics", "[integrate]") {
    auto V = PotentialSpec::toda();
    SECTION("zero state is a fixed point") {
        auto u = zero_field(-8, 16);
        auto v = step_strang(u, V, 0.3);
        CHECK(linf_norm(v) == 0.0);
    }
    SECTION("dt >= 1 rejected") {
        auto u = zero_field(-8, 16);
        CHECK_THROWS_AS(step_strang(u, V, 1.0), StepTooLarge);
    }
    SECTION("reversibility to rounding") {
        Rng rng(3);
        auto u = zero_field(-32, 64);
        for (auto& x : u.r) x = 0.3 * rng.normal();
        for (auto& x : u.p) x = 0.3 * rng.normal();
        auto v = step_strang(step_strang(u, V, 0.05), V, -0.05);
        double worst = 0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            worst = std::max(worst, std::fabs(v.r[i] - u.r[i]));
            worst = std::max(worst, std::fabs(v.p[i] - u.p[i]));
        }
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("energy drift is second order in dt", "[integrate]") {
    auto V = PotentialSpec::toda();
    auto u = zero_field(-32, 64);
    Rng rng(11);
    for (auto& x : u.r) x = 0.25 * rng.normal();
    for (auto& x : u.p) x = 0.25 * rng.normal();
    REQUIRE(linf_norm(u) <= 1.0);
    double H0 = hamiltonian_energy(u, V);
    auto drift = [&](double dt) {
        Observer dh{"dH", [&](double, const LatticeField& s) {
                        return std::fabs(hamiltonian_energy(s, V) - H0);
                    }};
        EvolveOptions opts;
        opts.snapshot_stride = 20;
        auto traj = evolve(u, V, 100.0, dt, {dh}, opts);
        double worst = 0;
        for (const auto& row : traj.observer_rows) worst = std::max(worst, row[0]);
        return worst / std::max(1.0, std::fabs(H0));
    };
    double d1 = drift(0.05), d2 = drift(0.025);
    CHECK(d1 / d2 >= 3.0);
    CHECK(d1 / d2 <= 5.0);
}

TEST_CASE("evolve basics", "[integrate]") {
    auto V = PotentialSpec::toda();
    auto u = zero_field(-8, 16);
    SECTION("T = 0 is the identity") {
        auto traj = evolve(u, V, 0.0, 0.05);
        REQUIRE(traj.states.size() == 1);
        CHECK(linf_norm(traj.states.back()) == 0.0);
    }
    SECTION("zero state stays zero") {
        auto traj = evolve(u, V, 5.0, 0.05);
        CHECK(linf_norm(traj.states.back()) == 0.0);
    }
    SECTION("window violation in zero-padded mode") {
        auto w = zero_field(-16, 32, Boundary::zero_padded);
        w.r[w.slot(0)] = 0.5;
        EvolveOptions opts;
        opts.kappa = 1.0;
        CHECK_THROWS_AS(evolve(w, V, 30.0, 0.05, {}, opts), WindowViolation);
    }
}

TEST_CASE("weighted norms", "[lattice]") {
    std::vector<double> x(41, 0.0);
    long off = -20;
    WeightSpec w(0.25, 0.05, 0.0, +1);

    SECTION("zero gives zero in all modes") {
        for (auto mode : {NormMode::plain, NormMode::one_sided, NormMode::two_sided})
            CHECK(weighted_norm(x, off, w, mode) == 0.0);
    }
    SECTION("unit impulse at the center") {
        x[20] = 1.0;
        for (auto mode : {NormMode::plain, NormMode::one_sided, NormMode::two_sided})
            CHECK(weighted_norm(x, off, w, mode) == Catch::Approx(1.0).epsilon(1e-14));
    }
    SECTION("impulse offset from the center") {
        x[20 + 7] = 1.0;
        CHECK(weighted_norm(x, off, w, NormMode::one_sided) ==
              Catch::Approx(std::exp(0.25 * 7)).epsilon(1e-13));
    }
    SECTION("two-sided converges to plain as abar -> 0") {
        Rng rng(2);
        for (std::size_t i = 15; i < 26; ++i) x[i] = rng.normal();
        WeightSpec tiny(0.25, 1e-9, 0.0, +1);
        double a = weighted_norm(x, off, tiny, NormMode::two_sided);
        double b = weighted_norm(x, off, tiny, NormMode::plain);
        CHECK(std::fabs(a - b) <= 1e-6 * b);
    }
    SECTION("overflow guard") {
        std::vector<double> big(20000, 1.0);
        WeightSpec steep(0.5, 0.05, 0.0, +1);
        CHECK_THROWS_AS(weighted_norm(big, 0, steep, NormMode::one_sided), OverflowGuard);
    }
}

TEST_CASE("localize splits exactly at site zero", "[lattice]") {
    Rng rng(9);
    auto u = zero_field(-12, 25, Boundary::zero_padded);
    for (auto& x : u.r) x = rng.normal();
    for (auto& x : u.p) x = rng.normal();
    auto up = localize(u, +1), um = localize(u, -1);
    for (long k = u.first_site(); k <= u.last_site(); ++k) {
        CHECK(up.r[u.slot(k)] + um.r[u.slot(k)] == u.r[u.slot(k)]);
        if (k == 0) {
            CHECK(up.r[u.slot(k)] == u.r[u.slot(k)]); // impulse at 0 survives h_+
            CHECK(um.r[u.slot(k)] == 0.0);
        }
        if (k == -1) CHECK(up.r[u.slot(k)] == 0.0); // killed by h_+
    }
}
