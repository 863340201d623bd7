#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "riskjump/hjb.hpp"
#include "test_support.hpp"

using namespace riskjump;
using namespace riskjump::testsupport;

namespace {

Grid make_grid_1d(int nodes, int steps, double half_width = 1.5,
                  double center = 0.0) {
    Grid g;
    g.dim = 1;
    g.center = Vec::Constant(1, center);
    g.half_width = Vec::Constant(1, half_width);
    g.nodes_per_axis = nodes;
    g.t0 = 0.0;
    g.T = 1.0;
    g.time_steps = steps;
    return g;
}

PolicyField constant_field(const Grid& grid, const Vec& h) {
    PolicyField f(grid.time_steps + 1, Mat(grid.nodes_total(), h.size()));
    for (auto& slice : f) slice.rowwise() = h.transpose();
    return f;
}

// smooth state-dependent allocation, feasible for the F1 atoms everywhere
PolicyField smooth_field(const Grid& grid) {
    PolicyField f(grid.time_steps + 1, Mat(grid.nodes_total(), 1));
    for (int j = 0; j <= grid.time_steps; ++j)
        for (int i = 0; i < grid.nodes_total(); ++i) {
            const double x = grid.node(i)[0];
            f[j](i, 0) = 0.3 + 0.2 * std::tanh(x);
        }
    return f;
}

}  // namespace

TEST_CASE("boundary datum is consistent at the horizon and grows with g_check") {
    const Criterion crit = make_criterion();
    const ZeroBetaPolicy zb_f1 = zero_beta(make_f1(), crit);
    CHECK(boundary_value(crit, zb_f1, 1.0, 1.0) == 1.0);
    CHECK(boundary_value(crit, zb_f1, 0.0, 1.0) ==
          doctest::Approx(std::exp(-0.02)).epsilon(1e-12));

    const ZeroBetaPolicy zb_f1b = zero_beta(make_f1b(), crit);
    CHECK(boundary_value(crit, zb_f1b, 0.0, 1.0) ==
          doctest::Approx(std::exp(0.0010495347564313)).epsilon(1e-10));

    Criterion wealthy{1.5, 2.0};
    CHECK(boundary_value(wealthy, zb_f1, 1.0, 1.0) ==
          doctest::Approx(std::pow(2.0, -1.5)).epsilon(1e-14));
}

TEST_CASE("zero-beta policy field reproduces the exponential solution") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    const double g_check = -0.02;

    SUBCASE("Crank-Nicolson at 64 steps") {
        Grid grid = make_grid_1d(64, 64);
        SolverConfig cfg;
        cfg.time_weight = 0.5;
        const auto u = solve_linear_pde(vm, crit, constant_field(grid, Vec::Zero(1)),
                                        grid, cfg);
        for (int j = 0; j <= grid.time_steps; ++j) {
            const double expect = std::exp(g_check * (1.0 - grid.time_at(j)));
            for (int i = 0; i < grid.nodes_total(); ++i)
                CHECK(std::abs(u[j][i] - expect) <= 1e-6 * expect);
        }
    }
    SUBCASE("fully implicit at 1024 steps") {
        Grid grid = make_grid_1d(64, 1024);
        SolverConfig cfg;
        const auto u = solve_linear_pde(vm, crit, constant_field(grid, Vec::Zero(1)),
                                        grid, cfg);
        for (int j = 0; j <= grid.time_steps; ++j) {
            const double expect = std::exp(g_check * (1.0 - grid.time_at(j)));
            for (int i = 0; i < grid.nodes_total(); ++i)
                CHECK(std::abs(u[j][i] - expect) <= 1e-6 * expect);
        }
    }
}

TEST_CASE("probe values converge at first order or better under refinement") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    SolverConfig cfg;

    auto probe = [&](int nodes, int steps) {
        Grid grid = make_grid_1d(nodes + 1, steps);  // odd count, center node
        const auto u =
            solve_linear_pde(vm, crit, smooth_field(grid), grid, cfg);
        return u[0][grid.nodes_per_axis / 2];  // value at t = 0, x = 0
    };
    const double c = probe(64, 64);
    const double f1 = probe(128, 128);
    const double f2 = probe(256, 256);
    CHECK(std::abs(c - f1) < 4.0 * std::abs(f1 - f2));
}

TEST_CASE("policy update on a flat field returns the pointwise maximiser") {
    const Criterion crit = make_criterion();

    SUBCASE("jump-free model") {
        const ValidatedModel vm = make_f1_no_atoms();
        Grid grid = make_grid_1d(32, 16);
        std::vector<Vec> flat(grid.time_steps + 1,
                              Vec::Constant(grid.nodes_total(), 0.9));
        const PolicyField pol = improve_policy(vm, crit, flat, grid);
        for (int j = 0; j < grid.time_steps; ++j)
            for (int i = 1; i < grid.nodes_total() - 1; ++i) {
                const double x = grid.node(i)[0];
                const double expect = (0.03 + 0.4 * x) / 0.125;
                CHECK(pol[j](i, 0) == doctest::Approx(expect).epsilon(1e-9));
            }
    }
    SUBCASE("with atoms, against the scan oracle") {
        const ValidatedModel vm = make_f1();
        Grid grid = make_grid_1d(16, 16);
        std::vector<Vec> flat(grid.time_steps + 1,
                              Vec::Constant(grid.nodes_total(), 1.0));
        const PolicyField pol = improve_policy(vm, crit, flat, grid);
        // p = 0 everywhere, so every interior node solves the same problem
        const double h_scan = golden_section_max(
            [&](double h) {
                return inner_objective(vm, crit, Vec::Zero(1), Vec::Zero(1),
                                       Vec::Constant(1, h));
            },
            -9.9999, 6.6666, 1e-11);
        const int mid = grid.nodes_total() / 2;
        const Vec x_mid = grid.node(mid);
        const double h_expect =
            maximize_inner(vm, crit, x_mid, Vec::Zero(1)).h_star[0];
        (void)h_expect;
        for (int j = 0; j < grid.time_steps; ++j)
            for (int i = 1; i < grid.nodes_total() - 1; ++i) {
                const Vec x = grid.node(i);
                const double h_node = maximize_inner(vm, crit, x, Vec::Zero(1))
                                          .h_star[0];
                CHECK(pol[j](i, 0) == doctest::Approx(h_node).epsilon(1e-10));
                CHECK(feasible_margin(vm, pol[j].row(i).transpose()) > 0.0);
            }
        // the x = 0 node must agree with the golden-section oracle
        CHECK(std::abs(pol[0](mid, 0) - h_scan) <= 1e-8);
    }
}

TEST_CASE("policy update refuses non-positive fields") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    Grid grid = make_grid_1d(16, 16);
    std::vector<Vec> bad(grid.time_steps + 1,
                         Vec::Constant(grid.nodes_total(), 1.0));
    bad[3][5] = 0.0;
    CHECK_THROWS_AS(improve_policy(vm, crit, bad, grid), NonPositiveValue);
}

TEST_CASE("state-independent model collapses to the scalar exponential") {
    const ValidatedModel vm = make_f1_x_independent();
    const Criterion crit = make_criterion();
    Grid grid = make_grid_1d(64, 1024);
    SolverConfig cfg;
    const ValueField field = policy_iteration(vm, crit, grid, cfg);

    CHECK(field.diagnostics.converged);
    CHECK(field.diagnostics.iterations <= 2);

    const double g_min = -golden_section_max(
        [&](double h) {
            return -g_value(vm, crit, Vec::Zero(1), Vec::Constant(1, h));
        },
        -9.9999, 6.6666, 1e-11);
    double g_min_val =
        g_value(vm, crit, Vec::Zero(1),
                Vec::Constant(1, golden_section_max(
                                     [&](double h) {
                                         return -g_value(vm, crit, Vec::Zero(1),
                                                         Vec::Constant(1, h));
                                     },
                                     -9.9999, 6.6666, 1e-11)));
    (void)g_min;
    for (int j = 0; j <= grid.time_steps; ++j) {
        const double expect = std::exp(g_min_val * (1.0 - grid.time_at(j)));
        for (int i = 0; i < grid.nodes_total(); ++i)
            CHECK(std::abs(field.phi_tilde[j][i] - expect) <= 1e-6 * expect);
    }
}

TEST_CASE("policy iteration is monotone and bounded on both fixtures") {
    const Criterion crit = make_criterion();
    SolverConfig cfg;
    for (const ValidatedModel& vm : {make_f1(), make_f1b()}) {
        Grid grid = make_grid_1d(48, 1024);
        const ValueField field = policy_iteration(vm, crit, grid, cfg);
        CHECK(field.diagnostics.converged);
        for (double excess : field.diagnostics.monotonicity_excess)
            CHECK(excess <= 1e-9);
        CHECK(field.diagnostics.upper_bound_excess <= 1e-9);
        CHECK(field.diagnostics.min_phi_tilde > 0.0);
    }
}

TEST_CASE("phi is the exact log transform of phi_tilde") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    Grid grid = make_grid_1d(32, 32);
    const ValueField field = policy_iteration(vm, crit, grid);
    for (int j = 0; j <= grid.time_steps; ++j)
        for (int i = 0; i < grid.nodes_total(); ++i)
            CHECK(field.phi[j][i] ==
                  -std::log(field.phi_tilde[j][i]) / crit.theta);
}

TEST_CASE("Hamiltonian residual shrinks under refinement") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    SolverConfig cfg;
    Grid coarse = make_grid_1d(32, 32);
    Grid fine = make_grid_1d(64, 64);
    const double r_coarse =
        policy_iteration(vm, crit, coarse, cfg).diagnostics.hamiltonian_residual_sup;
    const double r_fine =
        policy_iteration(vm, crit, fine, cfg).diagnostics.hamiltonian_residual_sup;
    CHECK(r_fine < r_coarse);
}

TEST_CASE("convexity report passes on solved fields and flags corruption") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    Grid grid = make_grid_1d(48, 64);
    ValueField field = policy_iteration(vm, crit, grid);

    ConvexityReport rep = convexity_report(field);
    CHECK(rep.pass);
    CHECK(rep.midpoint_pairs_checked == 100);
    CHECK(rep.midpoint_violations == 0);

    SUBCASE("a state-independent solution has vanishing second differences") {
        const ValidatedModel flat_vm = make_f1_x_independent();
        Grid g2 = make_grid_1d(32, 64);
        const ValueField flat = policy_iteration(flat_vm, crit, g2);
        const ConvexityReport rep2 = convexity_report(flat);
        CHECK(rep2.pass);
        CHECK(std::abs(rep2.min_second_difference) <= 1e-9);
    }

    SUBCASE("a dented node is caught and located") {
        const int bad_time = grid.time_steps / 2;
        const int bad_node = grid.nodes_total() / 2;
        field.phi_tilde[bad_time][bad_node] *= 0.9;
        field.phi[bad_time][bad_node] =
            -std::log(field.phi_tilde[bad_time][bad_node]) / crit.theta;
        const ConvexityReport bad = convexity_report(field);
        CHECK(!bad.pass);
        CHECK(bad.worst_time_index == bad_time);
        // the dent makes the neighbouring second difference most negative
        CHECK(std::abs(bad.worst_node - bad_node) <= 1);
    }
}

TEST_CASE("grids beyond two dimensions are refused") {
    Grid g;
    g.dim = 3;
    g.center = Vec::Zero(3);
    g.half_width = Vec::Constant(3, 1.0);
    CHECK_THROWS_WITH_AS(g.check(), doctest::Contains("Monte Carlo"), Error);
}

TEST_CASE("two-dimensional factor solve keeps the solver invariants") {
    MarketModel mm;
    mm.n = 2;
    mm.m = 1;
    mm.M = 3;
    mm.b = (Vec(2) << 0.1, 0.05).finished();
    mm.B = (Mat(2, 2) << -0.5, 0.1, 0.0, -0.3).finished();
    mm.Lambda = (Mat(2, 3) << 0.2, 0.05, 0.01, 0.02, 0.15, 0.03).finished();
    mm.a0 = 0.02;
    mm.A0 = Vec::Zero(2);
    mm.a = Vec::Constant(1, 0.05);
    mm.A = (Mat(1, 2) << 0.4, 0.2).finished();
    mm.Sigma = (Mat(1, 3) << 0.25, 0.0, 0.0).finished();
    mm.jumps = make_f1_market().jumps;
    const ValidatedModel vm = validate_model_or_throw(mm);
    const Criterion crit = make_criterion();

    Grid grid;
    grid.dim = 2;
    grid.center = Vec::Zero(2);
    grid.half_width = Vec::Constant(2, 1.0);
    grid.nodes_per_axis = 24;
    grid.time_steps = 64;
    grid.T = 1.0;

    const ValueField field = policy_iteration(vm, crit, grid);
    CHECK(field.diagnostics.converged);
    CHECK(field.diagnostics.min_phi_tilde > 0.0);
    CHECK(field.diagnostics.upper_bound_excess <= 1e-6);
    const ConvexityReport rep = convexity_report(field);
    CHECK(rep.min_second_difference >= -rep.tolerance);
}

TEST_CASE("grid policies interpolate and clamp") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    Grid grid = make_grid_1d(32, 32);
    ValueField field = policy_iteration(vm, crit, grid);

    // overwrite with a known affine-in-x policy to test the interpolation
    for (int j = 0; j <= grid.time_steps; ++j)
        for (int i = 0; i < grid.nodes_total(); ++i)
            field.policy[j](i, 0) = 0.1 + 0.2 * grid.node(i)[0];
    const auto rule = make_grid_policy(field);

    CHECK(rule(0.5, Vec::Constant(1, 0.33))[0] ==
          doctest::Approx(0.1 + 0.2 * 0.33).epsilon(1e-12));
    // clamped outside the box
    CHECK(rule(0.5, Vec::Constant(1, 99.0))[0] ==
          doctest::Approx(0.1 + 0.2 * 1.5).epsilon(1e-12));
    CHECK(rule(-5.0, Vec::Constant(1, -99.0))[0] ==
          doctest::Approx(0.1 - 0.2 * 1.5).epsilon(1e-12));
}
