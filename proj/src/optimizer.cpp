#include "riskjump/optimizer.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace riskjump {

double inner_objective(const ValidatedModel& model, const Criterion& crit,
                       const Vec& x, const Vec& p, const Vec& h, double t) {
    if (x.size() != model.n || p.size() != model.n || h.size() != model.m)
        throw DimensionMismatch("inner_objective: bad x/p/h length");
    const double theta = crit.theta;

    const Mat ss = model.sigma_sigma_t();
    double val = -0.5 * (theta + 1.0) * h.dot(ss * h) -
                 theta * h.dot(model.sigma_lambda_t(t) * p) +
                 h.dot(model.a_hat + model.A_hat * x);

    for (const JumpAtom& atom : model.jumps.atoms) {
        const double u = h.dot(atom.mark);
        if (!(1.0 + u > 0.0))
            throw InfeasibleControl("inner_objective: atom margin <= 0");
        double bracket = std::expm1(-theta * std::log1p(u)) / theta;
        if (atom.compensated) bracket += u;
        val -= atom.intensity * bracket;
    }
    return val;
}

void inner_grad_hess(const ValidatedModel& model, const Criterion& crit,
                     const Vec& x, const Vec& p, const Vec& h, Vec& grad,
                     Mat& hess, double t) {
    if (x.size() != model.n || p.size() != model.n || h.size() != model.m)
        throw DimensionMismatch("inner_grad_hess: bad x/p/h length");
    const double theta = crit.theta;

    const Mat ss = model.sigma_sigma_t();
    grad = -(theta + 1.0) * (ss * h) - theta * (model.sigma_lambda_t(t) * p) +
           model.a_hat + model.A_hat * x;
    hess = -(theta + 1.0) * ss;

    for (const JumpAtom& atom : model.jumps.atoms) {
        const double u = h.dot(atom.mark);
        if (!(1.0 + u > 0.0))
            throw InfeasibleControl("inner_grad_hess: atom margin <= 0");
        const double w1 = pow_one_plus(u, theta + 1.0);
        grad += atom.intensity * (w1 - (atom.compensated ? 1.0 : 0.0)) * atom.mark;
        const double w2 = pow_one_plus(u, theta + 2.0);
        hess -= (theta + 1.0) * atom.intensity * w2 *
                (atom.mark * atom.mark.transpose());
    }
}

InnerSolution maximize_inner(const ValidatedModel& model, const Criterion& crit,
                             const Vec& x, const Vec& p, const NewtonConfig& cfg,
                             double t) {
    const double theta = crit.theta;

    // Gradient tolerance is relative to the affine part of the gradient at 0.
    const Vec affine =
        model.a_hat + model.A_hat * x - theta * (model.sigma_lambda_t(t) * p);
    const double tol = cfg.grad_tol * std::max(1.0, affine.norm());

    Vec h = Vec::Zero(model.m);
    double obj = 0.0;  // inner_objective(.., h=0) is identically zero
    Vec grad;
    Mat hess;

    InnerSolution sol;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        inner_grad_hess(model, crit, x, p, h, grad, hess, t);
        sol.iterations = iter;
        if (grad.norm() <= tol) {
            sol.h_star = h;
            sol.objective = obj;
            sol.grad_norm = grad.norm();
            sol.margin = feasible_margin(model, h);
            return sol;
        }

        // Newton direction on the concave objective: solve (-H) d = grad.
        Eigen::LDLT<Mat> ldlt(-hess);
        if (ldlt.info() != Eigen::Success)
            throw NoConvergence("maximize_inner: Hessian factorisation failed");
        const Vec dir = ldlt.solve(grad);

        // Fraction to boundary: every atom margin keeps at least 1% of its
        // current value in a full step.
        double step = 1.0;
        for (const JumpAtom& atom : model.jumps.atoms) {
            const double slope = dir.dot(atom.mark);
            if (slope < 0.0) {
                const double margin = 1.0 + h.dot(atom.mark);
                step = std::min(step, -cfg.boundary_frac * margin / slope);
            }
        }

        // Backtrack until the Armijo increase condition holds.
        const double slope0 = grad.dot(dir);
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Vec trial = h + step * dir;
            double trial_obj;
            try {
                trial_obj = inner_objective(model, crit, x, p, trial, t);
            } catch (const InfeasibleControl&) {
                step *= 0.5;
                continue;
            }
            if (trial_obj >= obj + cfg.armijo * step * slope0) {
                h = trial;
                obj = trial_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted)
            throw NoConvergence("maximize_inner: backtracking stalled");
    }

    inner_grad_hess(model, crit, x, p, h, grad, hess, t);
    if (grad.norm() <= tol) {
        sol.h_star = h;
        sol.objective = obj;
        sol.grad_norm = grad.norm();
        sol.margin = feasible_margin(model, h);
        sol.iterations = cfg.max_iters;
        return sol;
    }
    std::ostringstream os;
    os << "maximize_inner: no convergence after " << cfg.max_iters
       << " iterations, |grad| = " << grad.norm() << " > " << tol;
    throw NoConvergence(os.str());
}

ZeroBetaPolicy zero_beta(const ValidatedModel& model, const Criterion& crit) {
    ZeroBetaPolicy zb;
    const bool a0_loading_zero = model.A0.isZero(0.0);
    const bool a_hat_zero = model.A_hat.isZero(0.0);

    if (a0_loading_zero && a_hat_zero) {
        // g is state-independent for every allocation, so each one is a
        // zero-beta policy; take the g-minimising one.
        InnerSolution best = maximize_inner(model, crit, Vec::Zero(model.n),
                                            Vec::Zero(model.n));
        zb.h_check = best.h_star;
    } else if (a0_loading_zero) {
        zb.h_check = Vec::Zero(model.m);
    } else {
        if (!model.rank_A_hat_is_n)
            throw RankDeficient(
                "zero_beta: A_hat is rank deficient and A0 is nonzero");
        // Minimum-norm solution of A_hat' h = -A0.
        Eigen::JacobiSVD<Mat> svd(model.A_hat.transpose(),
                                  Eigen::ComputeThinU | Eigen::ComputeThinV);
        zb.h_check = svd.solve(-model.A0);
        if (feasible_margin(model, zb.h_check) <= 0.0) {
            std::ostringstream os;
            os << "zero_beta: minimum-norm solution has margin "
               << feasible_margin(model, zb.h_check) << " <= 0";
            throw ZeroBetaInfeasible(os.str());
        }
    }

    zb.g_check = g_value(model, crit, Vec::Zero(model.n), zb.h_check);

    // g must not depend on the state; spot check at an arbitrary point.
    Vec x_probe = Vec::Constant(model.n, 0.73519);
    const double g_probe = g_value(model, crit, x_probe, zb.h_check);
    if (std::abs(g_probe - zb.g_check) > 1e-10 * (1.0 + std::abs(zb.g_check)))
        throw Error("zero_beta: g is not state-independent at the solution");

    return zb;
}

}  // namespace riskjump
