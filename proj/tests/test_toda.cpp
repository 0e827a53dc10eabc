#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpulab/integrate.hpp"
#include "fpulab/rng.hpp"
#include "fpulab/toda.hpp"

using namespace fpulab;

namespace {

LatticeField random_localized(long off, std::size_t n, double width, std::uint64_t seed) {
    LatticeField w(off, n, Boundary::zero_padded);
    Rng rng(seed);
    for (long k = w.first_site(); k <= w.last_site(); ++k) {
        double env = std::exp(-k * k / (2.0 * width * width));
        w.r[w.slot(k)] = rng.normal() * env;
        w.p[w.slot(k)] = rng.normal() * env;
    }
    return w;
}

} // namespace

TEST_CASE("toda soliton closed forms", "[toda]") {
    TodaSoliton sol(1.02);
    double k = sol.kappa;
    CHECK(std::sinh(k) == Catch::Approx(k * 1.02).epsilon(1e-13));

    SECTION("kink limits") {
        double n = std::ceil(50.0 / k);
        CHECK(std::fabs(sol.Q(n, 0.0) + k) <= 1e-10);
        CHECK(std::fabs(sol.Q(-n, 0.0) - k) <= 1e-10);
    }

    SECTION("derivative closed forms against finite differences") {
        double h = 1e-6;
        for (double x : {-7.3, -1.0, 0.0, 0.4, 2.9, 11.0}) {
            CHECK(sol.r_x(x) == Catch::Approx((sol.r(x + h) - sol.r(x - h)) / (2 * h)).margin(1e-8));
            CHECK(sol.p_x(x) == Catch::Approx((sol.p(x + h) - sol.p(x - h)) / (2 * h)).margin(1e-8));
            CHECK(sol.r_xx(x) ==
                  Catch::Approx((sol.r(x + h) - 2 * sol.r(x) + sol.r(x - h)) / (h * h)).margin(1e-4));
            double dc = 1e-7;
            TodaSoliton sp(1.02 + dc), sm(1.02 - dc);
            CHECK(sol.r_c(x) == Catch::Approx((sp.r(x) - sm.r(x)) / (2 * dc)).margin(1e-6));
            CHECK(sol.p_c(x) == Catch::Approx((sp.p(x) - sm.p(x)) / (2 * dc)).margin(1e-6));
        }
    }

    SECTION("closed form is a traveling wave of the nonlinear lattice") {
        auto V = PotentialSpec::toda();
        double T = 30.0, dt = 0.01;
        long half = 400;
        auto u0 = sol.sample(0.0, -half, 2 * half + 1);
        u0.boundary = Boundary::periodic;
        auto traj = evolve(u0, V, T, dt);
        const auto& uT = traj.states.back();
        double amp = sup_abs(u0.r), worst = 0;
        for (long s = -half; s <= half; ++s)
            worst = std::max(worst,
                             std::fabs(uT.r[uT.slot(s)] - sol.r(static_cast<double>(s) - sol.c * T)));
        CHECK(worst / amp <= 5e-4);
    }
}

TEST_CASE("delta inverse", "[toda]") {
    SECTION("impulse") {
        std::vector<double> y(21, 0.0);
        y[10] = 1.0; // site 0 with offset -10
        auto z = delta_inverse(y);
        for (int i = 0; i <= 10; ++i) CHECK(z[i] == -1.0);
        for (int i = 11; i < 21; ++i) CHECK(z[i] == 0.0);
    }
    SECTION("right inverse of delta on compact support") {
        Rng rng(3);
        std::vector<double> y(64, 0.0);
        for (int i = 20; i < 44; ++i) y[i] = rng.normal();
        auto z = delta_inverse(y);
        auto back = delta_apply(z);
        double worst = 0;
        for (int i = 0; i < 63; ++i) worst = std::max(worst, std::fabs(back[i] - y[i]));
        CHECK(worst <= 1e-14);
    }
    SECTION("zero maps to zero") {
        std::vector<double> y(16, 0.0);
        CHECK(sup_abs(delta_inverse(y)) == 0.0);
    }
}

TEST_CASE("dressing operator multipliers", "[toda]") {
    // measured multiplier norms over a c grid: a c-independent band around 2 kappa
    for (double c : {1.0005, 1.001, 1.002, 1.005, 1.02}) {
        TodaSoliton sol(c);
        BacklundOps ops(-300, 601, sol.kappa, 0.0);
        double cbar = 0, ctil = 0;
        for (std::size_t i = 0; i < 601; ++i) {
            double m = ops.site(i);
            double a = ops.rr(m, m + 1);
            cbar = std::max(cbar, std::fabs(a - 1.0 / a));
            ctil = std::max(ctil, std::fabs(ops.rr(m, m + 1) - ops.rr(m + 2, m + 1)));
        }
        CHECK(cbar / sol.kappa >= 1.5);
        CHECK(cbar / sol.kappa <= 2.5);
        CHECK(ctil / sol.kappa >= 1.5);
        CHECK(ctil / sol.kappa <= 2.5);
    }
}

TEST_CASE("commutator smallness o(kappa)", "[toda]") {
    Rng rng(5);
    std::vector<double> x(401);
    for (auto& v : x) v = rng.normal();
    double prev = std::numeric_limits<double>::infinity();
    for (double c : {1.05, 1.02, 1.005, 1.001}) {
        TodaSoliton sol(c);
        BacklundOps ops(-200, 401, sol.kappa, 0.0);
        auto y = ops.commutator_AinvS(x);
        double ratio = l2_norm(y) / (sol.kappa * l2_norm(x));
        CHECK(ratio < prev);
        prev = ratio;
    }
    CHECK(prev <= 0.05);
}

TEST_CASE("invert_C", "[toda]") {
    TodaSoliton sol(1.01);
    BacklundOps ops(-300, 601, sol.kappa, 1.0);

    SECTION("zero maps to zero") {
        std::vector<double> y(601, 0.0);
        CHECK(sup_abs(invert_C(ops, y)) == 0.0);
    }
    SECTION("forward-then-inverse round trip") {
        // x = delta z for decaying z puts y = C delta^{-1} x in the solvable range
        Rng rng(7);
        std::vector<double> z(601, 0.0);
        for (int i = 250; i < 350; ++i) z[i] = rng.normal();
        auto x_true = delta_apply(z);
        auto y = ops.C(delta_inverse(x_true));
        auto x = invert_C(ops, y);
        double worst = 0;
        for (int i = 0; i < 601; ++i) worst = std::max(worst, std::fabs(x[i] - x_true[i]));
        CHECK(worst <= 1e-10 * std::max(1.0, sup_abs(x_true)));
    }
    SECTION("weighted boundedness uniform in c") {
        double kmin = 0, kmax = 0;
        for (double c : {1.0005, 1.001, 1.002, 1.005}) {
            TodaSoliton s(c);
            BacklundOps o(-300, 601, s.kappa, 1.0);
            double a = s.kappa / 2;
            Rng rng(11);
            std::vector<double> z(601, 0.0);
            for (int i = 260; i < 340; ++i) z[i] = rng.normal();
            auto y = o.C(z);
            auto x = invert_C(o, y);
            WeightSpec w(a, 1e-6, 0.0, +1);
            double K = weighted_norm(x, -300, w, NormMode::one_sided) /
                       weighted_norm(y, -300, w, NormMode::one_sided);
            kmin = (kmin == 0) ? K : std::min(kmin, K);
            kmax = std::max(kmax, K);
        }
        CHECK(kmax / kmin <= 3.0); // stable as c decreases toward 1
        CHECK(kmax <= 20.0);
    }
}

TEST_CASE("invert_Chat", "[toda]") {
    TodaSoliton sol(1.01);
    BacklundOps ops(-300, 601, sol.kappa, 1.0);
    Rng rng(13);
    std::vector<double> z_true(601, 0.0);
    for (int i = 250; i < 350; ++i) z_true[i] = rng.normal();
    auto y = ops.Chat(z_true);

    SECTION("round trip with the center value matched") {
        auto pin = [&](const std::vector<double>& zpart, const std::vector<double>& zhom,
                       double& A0, double& B0) {
            std::size_t mid = 601 / 2;
            A0 = zpart[mid] - z_true[mid];
            B0 = zhom[mid];
        };
        auto z = invert_Chat(ops, y, pin);
        double worst = 0;
        for (int i = 0; i < 600; ++i) worst = std::max(worst, std::fabs(z[i] - z_true[i]));
        CHECK(worst <= 1e-10 * sup_abs(z_true));
    }
    SECTION("zero data with zero pairing gives zero") {
        std::vector<double> zero(601, 0.0);
        auto pin = [&](const std::vector<double>&, const std::vector<double>& zhom, double& A0,
                       double& B0) {
            A0 = 0.0;
            B0 = zhom[300];
        };
        auto z = invert_Chat(ops, zero, pin);
        CHECK(sup_abs(z) == 0.0);
    }
    SECTION("solution is independent of the recursion seam") {
        auto pin = [&](const std::vector<double>& zpart, const std::vector<double>& zhom,
                       double& A0, double& B0) {
            A0 = zpart[280] - z_true[280];
            B0 = zhom[280];
        };
        auto z1 = invert_Chat(ops, y, pin, 601 / 2);
        auto z2 = invert_Chat(ops, y, pin, 601 / 2 + 16);
        double worst = 0;
        for (int i = 0; i < 600; ++i) worst = std::max(worst, std::fabs(z1[i] - z2[i]));
        CHECK(worst <= 1e-12 * std::max(1.0, sup_abs(z_true)));
    }
}

TEST_CASE("backlund round trip and bounds", "[toda]") {
    for (double c : {1.0005, 1.001, 1.002, 1.005}) {
        TodaSoliton sol(c);
        long half = std::lround(std::max(300.0, 40.0 / sol.kappa));
        std::size_t n = 2 * half + 1;
        auto w = random_localized(-half, n, 2.0 / sol.kappa, 101);
        w = toda_perp_project(w, sol, 0.0);

        auto wp = psi_forward(sol, 0.0, 0.0, w);
        auto wb = psi_inverse(sol, 0.0, 0.0, wp);
        double scale = l2_norm(w), worst = 0;
        for (std::size_t i = 0; i < n; ++i) {
            worst = std::max(worst, std::fabs(wb.r[i] - w.r[i]));
            worst = std::max(worst, std::fabs(wb.p[i] - w.p[i]));
        }
        CHECK(worst <= 1e-10 * scale);

        // weighted amplification of Psi stays bounded uniformly in c
        double a = sol.kappa / 2;
        WeightSpec ws(a, 1e-6, 0.0, +1);
        double amp = weighted_norm(wp, ws, NormMode::one_sided) /
                     weighted_norm(w, ws, NormMode::one_sided);
        CHECK(amp <= 3.0);
    }
}

TEST_CASE("linearized evolutions", "[toda]") {
    SECTION("about zero conserves the discrete wave energy to O(dt^2)") {
        auto w0 = random_localized(-128, 257, 10.0, 21);
        auto drift = [&](double dt) {
            auto traj = toda_linearized_evolve(w0, 1.01, 0.0, 20.0, dt, LinearizeAbout::zero);
            double e0 = l2_norm(traj.states.front()), e1 = l2_norm(traj.states.back());
            return std::fabs(e1 - e0) / e0;
        };
        double d1 = drift(0.04), d2 = drift(0.02);
        CHECK(d1 <= 1e-3);
        CHECK(d1 / d2 >= 2.5);
        CHECK(d1 / d2 <= 5.5);
    }

    SECTION("neutral mode translates with the wave") {
        double c = 1.005;
        TodaSoliton sol(c);
        long half = std::lround(60.0 / sol.kappa);
        LatticeField xi1(-half, 2 * half + 1, Boundary::zero_padded), xi2 = xi1;
        sol.tangents(0.0, xi1, xi2);
        double T = 10.0;
        auto traj = toda_linearized_evolve(xi1, c, 0.0, T, 0.002, LinearizeAbout::soliton);
        LatticeField ref(-half, 2 * half + 1, Boundary::zero_padded), ref2 = ref;
        sol.tangents(c * T, ref, ref2);
        const auto& wT = traj.states.back();
        double worst = 0;
        for (std::size_t i = 0; i < wT.size(); ++i) {
            worst = std::max(worst, std::fabs(wT.r[i] - ref.r[i]));
            worst = std::max(worst, std::fabs(wT.p[i] - ref.p[i]));
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("backlund conjugates the linearized flows", "[toda][slow]") {
    double c = 1.002, T = 20.0, dt = 5e-4;
    TodaSoliton sol(c);
    long half = 400;
    std::size_t n = 2 * half + 1;
    auto w = random_localized(-half, n, 25.0, 31);
    w = toda_perp_project(w, sol, 0.0);

    auto wp0 = psi_forward(sol, 0.0, 0.0, w);
    auto direct = toda_linearized_evolve(w, c, 0.0, T, dt, LinearizeAbout::soliton);
    auto zero = toda_linearized_evolve(wp0, c, 0.0, T, dt, LinearizeAbout::zero);
    auto wpT = psi_forward(sol, 0.0, T, direct.states.back(), 1e-4);
    const auto& zT = zero.states.back();
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
        worst = std::max(worst, std::fabs(wpT.r[i] - zT.r[i]));
        worst = std::max(worst, std::fabs(wpT.p[i] - zT.p[i]));
    }
    CHECK(worst <= 1e-6);

    // transform-then-evolve equals evolve-then-transform at an interior time too
    auto direct_half = toda_linearized_evolve(w, c, 0.0, T / 2, dt, LinearizeAbout::soliton);
    auto zero_half = toda_linearized_evolve(wp0, c, 0.0, T / 2, dt, LinearizeAbout::zero);
    auto wp_half = psi_forward(sol, 0.0, T / 2, direct_half.states.back(), 1e-4);
    worst = 0;
    for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::fabs(wp_half.r[i] - zero_half.states.back().r[i]));
    CHECK(worst <= 1e-6);
}

TEST_CASE("decay rate estimate produces a positive rate", "[toda][slow]") {
    DecayOptions opts;
    opts.trials = 2;
    opts.T = 4000.0;
    double c = 1.005;
    TodaSoliton sol(c);
    auto est = decay_rate_estimate(c, sol.kappa / 2, opts);
    CHECK(est.b_fit > 0.0);
    CHECK(est.r2 >= 0.8);
    CHECK(est.K_fit < 50.0);
}
