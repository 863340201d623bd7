#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "riskjump/criterion.hpp"
#include "riskjump/model.hpp"

namespace riskjump::testsupport {

// Single-factor, single-asset market used across the suite: mean-reverting
// factor, correlated asset noise, one downward and one upward jump atom.
inline MarketModel make_f1_market() {
    MarketModel mm;
    mm.n = 1;
    mm.m = 1;
    mm.M = 2;
    mm.b = Vec::Constant(1, 0.1);
    mm.B = Mat::Constant(1, 1, -0.5);
    mm.Lambda = (Mat(1, 2) << 0.2, 0.05).finished();
    mm.a0 = 0.02;
    mm.A0 = Vec::Zero(1);
    mm.a = Vec::Constant(1, 0.05);
    mm.A = Mat::Constant(1, 1, 0.4);
    mm.Sigma = (Mat(1, 2) << 0.25, 0.0).finished();
    JumpAtom down{Vec::Constant(1, -0.15), 1.0, true};
    JumpAtom up{Vec::Constant(1, 0.10), 1.5, true};
    mm.jumps.atoms = {down, up};
    return mm;
}

inline ValidatedModel make_f1() {
    return validate_model_or_throw(make_f1_market());
}

// F1 with a factor-sensitive short rate (A0 = 0.1, so A_hat = 0.3).
inline ValidatedModel make_f1b() {
    MarketModel mm = make_f1_market();
    mm.A0 = Vec::Constant(1, 0.1);
    return validate_model_or_throw(mm);
}

inline ValidatedModel make_f1_no_atoms() {
    MarketModel mm = make_f1_market();
    mm.jumps.atoms.clear();
    return validate_model_or_throw(mm);
}

// State-independent variant: A_hat = 0 and A0 = 0, so the running cost g
// does not depend on x for any allocation.
inline ValidatedModel make_f1_x_independent() {
    MarketModel mm = make_f1_market();
    mm.A = Mat::Zero(1, 1);
    return validate_model_or_throw(mm);
}

inline Criterion make_criterion() { return Criterion{1.0, 1.0}; }

// Golden-section maximisation of a unimodal function on [lo, hi].
inline double golden_section_max(const std::function<double(double)>& f,
                                 double lo, double hi, double tol) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

// Central finite-difference gradient.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& h,
                       double step) {
    Vec g(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        Vec hp = h, hm = h;
        hp[i] += step;
        hm[i] -= step;
        g[i] = (f(hp) - f(hm)) / (2.0 * step);
    }
    return g;
}

// Classical fixed-step fourth-order integration of y' = f(t, y).
inline std::vector<Vec> rk4_integrate(
    const std::function<Vec(double, const Vec&)>& f, Vec y0, double t0,
    double t1, int steps) {
    std::vector<Vec> out;
    out.reserve(steps + 1);
    out.push_back(y0);
    const double h = (t1 - t0) / steps;
    Vec y = std::move(y0);
    for (int k = 0; k < steps; ++k) {
        const double t = t0 + k * h;
        const Vec k1 = f(t, y);
        const Vec k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        const Vec k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        const Vec k4 = f(t + h, y + h * k3);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push_back(y);
    }
    return out;
}

// Deterministic congruential stream for test-local sampling, independent of
// the library's generator.
struct TestRng {
    unsigned long long s = 88172645463325252ULL;
    double uniform() {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        return static_cast<double>(s >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

}  // namespace riskjump::testsupport
