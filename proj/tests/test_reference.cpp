#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "raretrack/exact.hpp"
#include "raretrack/godunov.hpp"

using namespace raretrack;
using Catch::Approx;

namespace {

double total_variation(const std::vector<double>& u) {
    double tv = 0;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) tv += std::fabs(u[i + 1] - u[i]);
    return tv;
}

// Exact-solution graph of a Riemann problem sampled onto a polyline, with the
// fan drawn parametrically in u (so the only representation error is the
// piecewise-linear rendering of the curved fan profile).
Polyline fan_shock_polyline(const FluxModel& flux, double x0, double t, double x_lo, double x_hi) {
    // specific to the (1 -> 0) S-flux problem used below
    const double w = flux.inflections().at(0);
    const double ut = fan_shock_tangency(flux, w, 1.0);
    const double xs = x0 + t * flux.df(ut);
    Polyline p;
    p.pts.push_back({x_lo, 1.0, 0, false});
    p.pts.push_back({x0 + t * flux.df(1.0), 1.0, 0, false});
    const int m = 400;
    for (int k = 1; k < m; ++k) {
        const double u = 1.0 + (ut - 1.0) * k / m; // from 1 down to u_t
        p.pts.push_back({x0 + t * flux.df(u), u, 0, false});
    }
    p.pts.push_back({xs, ut, 0, false});
    p.pts.push_back({xs, 0.0, 0, true});
    p.pts.push_back({x_hi, 0.0, 0, false});
    return p;
}

} // namespace

TEST_CASE("godunov flux takes the correct extremum") {
    FluxModel bu = make_flux("burgers");
    // increasing data: minimum of f over [ul, ur]
    REQUIRE(godunov_flux(bu, 0.5, 1.0) == Approx(0.125)); // f(0.5)
    REQUIRE(godunov_flux(bu, -1.0, 1.0) == Approx(0.0));  // stationary point u = 0 inside
    // decreasing data: maximum of f over [ur, ul]
    REQUIRE(godunov_flux(bu, 1.0, -1.0) == Approx(0.5));
    REQUIRE(godunov_flux(bu, 1.0, 0.0) == Approx(0.5));
    REQUIRE(godunov_flux(bu, 0.25, 0.25) == Approx(0.03125)); // equal states: f itself

    FluxModel bl = make_flux("buckley_leverett");
    REQUIRE(godunov_flux(bl, 0.0, 1.0) == Approx(0.0)); // f increasing on [0,1]
    REQUIRE(godunov_flux(bl, 1.0, 0.0) == Approx(1.0));
}

TEST_CASE("max wave speed checks flux inflections inside the value range") {
    FluxModel bl = make_flux("buckley_leverett");
    const double ustar = bl.inflections().at(0);
    // cell values straddle u*, where |f'| peaks for this flux
    std::vector<double> u = {0.1, 0.9};
    REQUIRE(max_wave_speed(bl, u) == Approx(bl.df(ustar)));
    // without straddling, the maximum comes from the samples
    std::vector<double> v = {0.05, 0.1};
    REQUIRE(max_wave_speed(bl, v) == Approx(std::max(bl.df(0.05), bl.df(0.1))));
}

TEST_CASE("cell averages are exact per-piece integrals and pads extend constantly") {
    FluxModel bu = make_flux("burgers");
    InitialCondition ic(0.0, 1.0);
    ic.add_linear(0.0, 1.0, 0.0, 2.0); // average over [0,1] is 1
    GodunovOptions opt;
    opt.cells = 4;
    opt.pad_lo = 0.5; // 2 cells of dx = 0.25
    opt.pad_hi = 0.25;
    FVGrid g = fv_initialize(bu, ic, opt);
    REQUIRE(g.u.size() == 7);
    REQUIRE(g.x_lo == Approx(-0.5));
    REQUIRE(g.u[0] == Approx(0.0)); // left pad = value at the left end
    REQUIRE(g.u[1] == Approx(0.0));
    REQUIRE(g.u[2] == Approx(0.25)); // average of 2x over [0, 0.25]
    REQUIRE(g.u[3] == Approx(0.75));
    REQUIRE(g.u[6] == Approx(2.0)); // right pad = value at the right end
    REQUIRE(g.mass() == Approx(ic.integral(0.0, 1.0) + 0.5 * 0.0 + 0.25 * 2.0).margin(1e-14));

    REQUIRE_THROWS_AS(fv_initialize(bu, ic, [] {
                          GodunovOptions o;
                          o.cells = 0;
                          return o;
                      }()),
                      ReferenceError);
}

TEST_CASE("finite-volume update conserves mass for compactly supported data") {
    FluxModel bu = make_flux("burgers");
    InitialCondition ic(-1.0, 3.0);
    ic.add_constant(-1.0, 0.0, 0.0);
    ic.add_expr(0.0, 1.0, "sin(pi*x)^2");
    ic.add_constant(1.0, 3.0, 0.0);
    GodunovOptions opt;
    opt.cells = 200;
    FVGrid g0 = fv_initialize(bu, ic, opt);
    FVGrid g = godunov_solve(bu, ic, 1.0, opt);
    REQUIRE(g.t == 1.0);
    REQUIRE(g.mass() == Approx(g0.mass()).margin(1e-13));
    // monotone scheme: no new extrema beyond the data range
    for (double v : g.u) {
        REQUIRE(v >= -1e-12);
        REQUIRE(v <= 1.0 + 1e-12);
    }
}

TEST_CASE("godunov scheme is total-variation diminishing on random data") {
    FluxModel bu = make_flux("burgers");
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    FVGrid g;
    g.x_lo = 0.0;
    g.dx = 0.02;
    g.u.resize(50);
    for (double& v : g.u) v = dist(rng);
    for (int step = 0; step < 25; ++step) {
        const double tv_before = total_variation(g.u);
        const double dt = 0.9 * g.dx / max_wave_speed(bu, g.u);
        fv_step(bu, g, dt);
        REQUIRE(total_variation(g.u) <= tv_before + 1e-12);
    }
}

TEST_CASE("godunov solution converges to the exact shock") {
    FluxModel bu = make_flux("burgers");
    InitialCondition ic(-1.0, 3.0);
    ic.add_constant(-1.0, 0.0, 1.0);
    ic.add_constant(0.0, 3.0, 0.0);
    // exact: shock at x = t/2 with speed 1/2
    Polyline exact;
    exact.pts.push_back({-1.0, 1.0, 0, false});
    exact.pts.push_back({0.5, 1.0, 0, false});
    exact.pts.push_back({0.5, 0.0, 0, true});
    exact.pts.push_back({3.0, 0.0, 0, false});
    double err_prev = 0;
    for (int n : {100, 400}) {
        GodunovOptions opt;
        opt.cells = n;
        FVGrid g = godunov_solve(bu, ic, 1.0, opt);
        const double err = l1_distance(to_polyline(g), exact);
        if (n == 100) {
            err_prev = err;
        } else {
            REQUIRE(err < 6.0 * (4.0 / n)); // within a few cells' worth of area
            REQUIRE(err_prev / err > 2.0);  // roughly first order
        }
    }
}

TEST_CASE("godunov solution converges to the exact rarefaction") {
    FluxModel bu = make_flux("burgers");
    InitialCondition ic(-1.0, 3.0);
    ic.add_constant(-1.0, 0.0, 0.0);
    ic.add_constant(0.0, 3.0, 1.0);
    Polyline exact; // fan between x = 0 and x = t at t = 1
    exact.pts.push_back({-1.0, 0.0, 0, false});
    exact.pts.push_back({0.0, 0.0, 0, false});
    exact.pts.push_back({1.0, 1.0, 0, false});
    exact.pts.push_back({3.0, 1.0, 0, false});
    // spot values from the closed-form Riemann solution
    REQUIRE(convex_riemann(bu, 0.0, 1.0, 0.0, 0.5, 1.0) == Approx(0.5));
    REQUIRE(convex_riemann(bu, 0.0, 1.0, 0.0, -0.5, 1.0) == Approx(0.0));
    REQUIRE(convex_riemann(bu, 0.0, 1.0, 0.0, 2.0, 1.0) == Approx(1.0));
    double err_prev = 0;
    for (int n : {100, 400}) {
        GodunovOptions opt;
        opt.cells = n;
        FVGrid g = godunov_solve(bu, ic, 1.0, opt);
        const double err = l1_distance(to_polyline(g), exact);
        if (n == 100) {
            err_prev = err;
        } else {
            REQUIRE(err < 6.0 * (4.0 / n));
            REQUIRE(err_prev / err > 2.0);
        }
    }
}

TEST_CASE("closed-form riemann solution rejects value intervals spanning an inflection") {
    FluxModel bl = make_flux("buckley_leverett");
    REQUIRE_THROWS_AS(convex_riemann(bl, 1.0, 0.0, 0.0, 0.5, 1.0), ExactError);
    // but works on the convex part below the inflection
    REQUIRE(convex_riemann(bl, 0.0, 0.3, 0.0, -1.0, 1.0) == Approx(0.0));
}

TEST_CASE("method of characteristics inverts the characteristic map") {
    FluxModel bu = make_flux("burgers");
    // linear data u0(x) = x gives u(x,t) = x/(1+t) exactly
    auto u0 = [](double x) { return x; };
    for (double t : {0.0, 0.5, 2.0})
        for (double x : {-1.0, 0.0, 0.7})
            REQUIRE(moc_value(bu, u0, x, t, -10.0, 10.0) == Approx(x / (1.0 + t)).margin(1e-12));
    REQUIRE_THROWS_AS(moc_value(bu, u0, 100.0, 1.0, -10.0, 10.0), ExactError);
}

TEST_CASE("godunov solution converges to the characteristics solution for smooth data") {
    FluxModel qu = make_flux("quartic");
    const double pi = std::acos(-1.0);
    InitialCondition ic(-pi, pi);
    ic.add_expr(-pi, pi, "0.5+0.3*sin(x)");
    auto u0 = [&](double x) { return 0.5 + 0.3 * std::sin(std::max(-pi, std::min(pi, x))); };
    const double t = 0.5; // well before the first crossing of characteristics
    Polyline exact;
    const int m = 2000;
    for (int k = 0; k <= m; ++k) {
        const double x = -pi + 2 * pi * k / m;
        exact.pts.push_back({x, moc_value(qu, u0, x, t, -pi - 2.0, pi + 2.0), 0, false});
    }
    double err_prev = 0;
    for (int n : {100, 400}) {
        GodunovOptions opt;
        opt.cells = n;
        FVGrid g = godunov_solve(qu, ic, t, opt);
        const double err = l1_distance(to_polyline(g, /*staircase=*/false), exact);
        if (n == 100) {
            err_prev = err;
        } else {
            REQUIRE(err < 0.05);
            REQUIRE(err_prev / err > 2.5); // smooth data: cleanly first order
        }
    }
}

TEST_CASE("tangency value for the s-shaped flux matches the closed form") {
    // For f(u) = u^2 / (u^2 + (1-u)^2 / 2), the chord-tangency equation
    // f'(u) u = f(u) reduces to 3 u^2 = 1 on (u*, 1): u_t = 1/sqrt(3).
    FluxModel bl = make_flux("buckley_leverett");
    const double ut = fan_shock_tangency(bl, bl.inflections().at(0), 1.0);
    REQUIRE(ut == Approx(1.0 / std::sqrt(3.0)).margin(1e-12));
    REQUIRE(bl.df(ut) * ut - bl.f(ut) == Approx(0.0).margin(1e-13));
    REQUIRE(bl.df(ut) == Approx(bl.f(ut) / ut).margin(1e-12)); // tangency = chord speed
}

TEST_CASE("godunov solution converges to the fan-then-shock construction") {
    FluxModel bl = make_flux("buckley_leverett");
    InitialCondition ic(0.0, 2.0);
    ic.add_constant(0.0, 1.0, 1.0);
    ic.add_constant(1.0, 2.0, 0.0);
    const double t = 0.4;
    Polyline exact = fan_shock_polyline(bl, 1.0, t, 0.0, 2.0);
    // spot values
    const double ut = fan_shock_tangency(bl, bl.inflections().at(0), 1.0);
    const double xs = 1.0 + t * bl.df(ut);
    REQUIRE(s_riemann_one_zero(bl, 1.0, 0.5, t) == Approx(1.0));
    REQUIRE(s_riemann_one_zero(bl, 1.0, xs + 0.01, t) == Approx(0.0));
    REQUIRE(s_riemann_one_zero(bl, 1.0, xs - 1e-9, t) == Approx(ut).margin(1e-6));
    double err_prev = 0;
    for (int n : {100, 400}) {
        GodunovOptions opt;
        opt.cells = n;
        FVGrid g = godunov_solve(bl, ic, t, opt);
        const double err = l1_distance(to_polyline(g), exact);
        if (n == 100) {
            err_prev = err;
        } else {
            REQUIRE(err < 0.05);
            REQUIRE(err_prev / err > 2.0);
        }
    }
}

TEST_CASE("strang-split source reproduces exponential decay on constant data") {
    FluxModel bu = make_flux("burgers");
    SourceModel s = make_expr_source("-u");
    InitialCondition ic(0.0, 1.0);
    ic.add_constant(0.0, 1.0, 2.0);
    GodunovOptions opt;
    opt.cells = 50;
    opt.source = &s;
    FVGrid g = godunov_solve(bu, ic, 1.0, opt);
    for (double v : g.u) REQUIRE(v == Approx(2.0 * std::exp(-1.0)).margin(1e-10));
}

TEST_CASE("solver guards: step budget, cfl validation") {
    FluxModel bu = make_flux("burgers");
    InitialCondition ic(0.0, 1.0);
    ic.add_linear(0.0, 1.0, 0.0, 1.0);
    GodunovOptions opt;
    opt.cells = 32;
    opt.max_steps = 2;
    REQUIRE_THROWS_AS(godunov_solve(bu, ic, 10.0, opt), ReferenceError);
    GodunovOptions bad;
    bad.cfl = 1.5;
    REQUIRE_THROWS_AS(godunov_solve(bu, ic, 1.0, bad), ReferenceError);
}
