#include "riskjump/criterion.hpp"

#include <cmath>
#include <sstream>

namespace riskjump {

double g_value(const ValidatedModel& model, const Criterion& crit, const Vec& x,
               const Vec& h) {
    if (x.size() != model.n || h.size() != model.m)
        throw DimensionMismatch("g_value: x must have length n, h length m");
    const double theta = crit.theta;

    const Mat ss = model.sigma_sigma_t();
    double g = 0.5 * (theta + 1.0) * h.dot(ss * h) - model.a0 - model.A0.dot(x) -
               h.dot(model.a_hat + model.A_hat * x);

    for (const JumpAtom& atom : model.jumps.atoms) {
        const double u = h.dot(atom.mark);
        if (!(1.0 + u > 0.0)) {
            std::ostringstream os;
            os << "g_value: margin " << 1.0 + u << " <= 0 for an atom";
            throw InfeasibleControl(os.str());
        }
        // (1/theta)[(1+u)^-theta - 1] via expm1: the compensated bracket is
        // O(u^2) and would cancel otherwise
        double bracket = std::expm1(-theta * std::log1p(u)) / theta;
        if (atom.compensated) bracket += u;
        g += atom.intensity * bracket;
    }
    return g;
}

double doleans_jump_term(const Criterion& crit, const Vec& h, const Vec& mark) {
    const double u = h.dot(mark);
    if (!(1.0 + u > 0.0)) {
        std::ostringstream os;
        os << "doleans_jump_term: 1 + h'mark = " << 1.0 + u << " <= 0";
        throw InfeasibleControl(os.str());
    }
    return 1.0 - pow_one_plus(u, crit.theta);
}

Vec effective_drift(const ValidatedModel& model, const Criterion& crit, double t,
                    const Vec& x, const Vec& h) {
    if (x.size() != model.n || h.size() != model.m)
        throw DimensionMismatch("effective_drift: x must have length n, h length m");
    return model.b + model.B * x -
           crit.theta * (model.lambda(t) * (model.Sigma.transpose() * h));
}

}  // namespace riskjump
