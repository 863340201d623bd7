#pragma once

#include "riskjump/errors.hpp"
#include "riskjump/model.hpp"
#include "riskjump/types.hpp"

namespace riskjump {

// Risk sensitivity and initial wealth of the investor. Only theta > 0
// (risk aversion) is supported.
struct Criterion {
    double theta = 1.0;
    double v = 1.0;

    void check() const {
        if (!(theta > 0.0)) throw Error("criterion: theta must be > 0");
        if (!(v > 0.0)) throw Error("criterion: v must be > 0");
    }
};

// (1 + u)^(-theta) via exp(-theta*log1p(u)); accurate near u = 0 where the
// compensated jump brackets would otherwise cancel catastrophically.
inline double pow_one_plus(double u, double theta) {
    return std::exp(-theta * std::log1p(u));
}

// Running cost g of the exponentially transformed criterion:
//   g(x,h) = (theta+1)/2 h'SS'h - a0 - A0'x - h'(a_hat + A_hat x)
//            + sum_j lambda_j { (1/theta)[(1+h'psi_j)^-theta - 1]
//                               + h'psi_j * [compensated_j] }.
// Throws InfeasibleControl when some atom margin is <= 0.
double g_value(const ValidatedModel& model, const Criterion& crit, const Vec& x,
               const Vec& h);

// Jump term of the change-of-measure density: 1 - (1 + h'mark)^(-theta).
// Always < 1 on the feasible region.
double doleans_jump_term(const Criterion& crit, const Vec& h, const Vec& mark);

// Factor drift after the change of measure: b + B x - theta Lambda(t) Sigma' h.
// The time argument matters only for models with a tabulated loading.
Vec effective_drift(const ValidatedModel& model, const Criterion& crit, double t,
                    const Vec& x, const Vec& h);

}  // namespace riskjump
