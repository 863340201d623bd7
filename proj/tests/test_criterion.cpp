#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "riskjump/criterion.hpp"
#include "riskjump/optimizer.hpp"
#include "test_support.hpp"

using namespace riskjump;
using namespace riskjump::testsupport;

namespace {

// Slow, explicit re-evaluation of g used as the reference for the fast path.
long double g_reference(const ValidatedModel& vm, double theta, double x,
                        double h) {
    const long double ss = 0.0625L;
    long double g = 0.5L * (theta + 1.0L) * h * ss * h - vm.a0 -
                    vm.A0[0] * x - h * (vm.a_hat[0] + vm.A_hat(0, 0) * x);
    for (const JumpAtom& atom : vm.jumps.atoms) {
        const long double u = h * atom.mark[0];
        long double bracket =
            (std::pow(1.0L + u, static_cast<long double>(-theta)) - 1.0L) /
            theta;
        if (atom.compensated) bracket += u;
        g += atom.intensity * bracket;
    }
    return g;
}

}  // namespace

TEST_CASE("g at h = 0 is minus the short-rate intercept") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    for (double x : {-1.0, 0.0, 2.5}) {
        CHECK(g_value(vm, crit, Vec::Constant(1, x), Vec::Zero(1)) ==
              doctest::Approx(-0.02).epsilon(1e-15));
    }
}

TEST_CASE("g matches the long-double reference at h = 0.5") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    const double g = g_value(vm, crit, Vec::Zero(1), Vec::Constant(1, 0.5));
    // components: 0.015625 - 0.02 - 0.015 + 0.0096525...
    CHECK(g == doctest::Approx(-0.0097225).epsilon(1e-5));
    CHECK(g == doctest::Approx(static_cast<double>(
                   g_reference(vm, 1.0, 0.0, 0.5))).epsilon(1e-14));
}

TEST_CASE("g without atoms reduces to three terms") {
    const ValidatedModel vm = make_f1_no_atoms();
    const Criterion crit = make_criterion();
    const double g = g_value(vm, crit, Vec::Zero(1), Vec::Constant(1, 0.5));
    CHECK(g == doctest::Approx(0.015625 - 0.02 - 0.015).epsilon(1e-14));
}

TEST_CASE("g rejects infeasible allocations") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    CHECK_THROWS_AS(g_value(vm, crit, Vec::Zero(1), Vec::Constant(1, 7.0)),
                    InfeasibleControl);
}

TEST_CASE("g is strictly convex in h along random directions") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    TestRng rng;
    const Vec x = Vec::Constant(1, 0.3);
    for (int rep = 0; rep < 100; ++rep) {
        const double h0 = rng.uniform(-8.0, 5.5);
        const double d = rng.uniform(0.01, 0.2);
        const Vec hm = Vec::Constant(1, h0 - d);
        const Vec hc = Vec::Constant(1, h0);
        const Vec hp = Vec::Constant(1, h0 + d);
        if (feasible_margin(vm, hm) <= 0.0 || feasible_margin(vm, hp) <= 0.0)
            continue;
        const double second = g_value(vm, crit, x, hp) -
                              2.0 * g_value(vm, crit, x, hc) +
                              g_value(vm, crit, x, hm);
        CHECK(second > 0.0);
    }
}

TEST_CASE("g grows monotonically toward the feasible boundary") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    // boundary at h = 1/0.15; walk a ray toward it
    double prev = g_value(vm, crit, Vec::Zero(1), Vec::Constant(1, 5.0));
    bool grew = true;
    for (double h : {6.0, 6.5, 6.6, 6.66, 6.666}) {
        const double g = g_value(vm, crit, Vec::Zero(1), Vec::Constant(1, h));
        if (g <= prev) grew = false;
        prev = g;
    }
    CHECK(grew);
    CHECK(prev > 1e2);  // the power term blows up near the boundary
}

TEST_CASE("compensated bracket stays accurate for tiny exposures") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    // with theta = 1 each compensated atom contributes
    // lambda * (h psi)^2 + O(h^3); isolate that quadratic remainder
    const double h = 1e-6;
    const double g0 = g_value(vm, crit, Vec::Zero(1), Vec::Zero(1));
    const double g = g_value(vm, crit, Vec::Zero(1), Vec::Constant(1, h));
    const double jump_quad = 1.0 * 0.15 * 0.15 + 1.5 * 0.10 * 0.10;
    const double remainder = (g - g0) + 0.03 * h - 0.0625 * h * h;
    CHECK(remainder == doctest::Approx(jump_quad * h * h).epsilon(1e-3));
}

TEST_CASE("doleans jump term examples and bound") {
    const Criterion theta1{1.0, 1.0};
    const Criterion theta2{2.0, 1.0};
    const Vec mark = Vec::Constant(1, 1.0);
    CHECK(doleans_jump_term(theta1, Vec::Zero(1), mark) == 0.0);
    CHECK(doleans_jump_term(theta1, Vec::Constant(1, 1.0), mark) ==
          doctest::Approx(0.5).epsilon(1e-15));
    CHECK(doleans_jump_term(theta2, Vec::Constant(1, 0.1), mark) ==
          doctest::Approx(1.0 - std::pow(1.1, -2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(doleans_jump_term(theta1, Vec::Constant(1, -1.0), mark),
                    InfeasibleControl);

    TestRng rng;
    for (int rep = 0; rep < 200; ++rep) {
        const Vec h = Vec::Constant(1, rng.uniform(-0.9, 5.0));
        if (1.0 + h[0] <= 0.0) continue;
        CHECK(doleans_jump_term(theta2, h, mark) < 1.0);
    }
}

TEST_CASE("effective drift examples") {
    const ValidatedModel vm = make_f1();
    const Criterion crit = make_criterion();
    CHECK(effective_drift(vm, crit, 0.0, Vec::Constant(1, 1.0), Vec::Zero(1))[0] ==
          doctest::Approx(-0.4).epsilon(1e-15));
    // Lambda Sigma' = 0.05, so h = 0.2 shifts the drift by -0.01
    CHECK(effective_drift(vm, crit, 0.0, Vec::Constant(1, 1.0),
                          Vec::Constant(1, 0.2))[0] ==
          doctest::Approx(-0.41).epsilon(1e-12));
    CHECK(effective_drift(vm, crit, 0.0, Vec::Zero(1), Vec::Zero(1))[0] ==
          doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("zero-beta g is state-independent") {
    const Criterion crit = make_criterion();
    for (const ValidatedModel& vm : {make_f1(), make_f1b()}) {
        const ZeroBetaPolicy zb = zero_beta(vm, crit);
        const double g1 = g_value(vm, crit, Vec::Constant(1, -1.7), zb.h_check);
        const double g2 = g_value(vm, crit, Vec::Constant(1, 2.3), zb.h_check);
        CHECK(std::abs(g1 - g2) <= 1e-12 * (1.0 + std::abs(zb.g_check)));
        CHECK(g1 == doctest::Approx(zb.g_check).epsilon(1e-12));
    }
}
