#pragma once

#include "riskjump/criterion.hpp"
#include "riskjump/model.hpp"
#include "riskjump/types.hpp"

namespace riskjump {

struct NewtonConfig {
    double grad_tol = 1e-10;      // relative to the affine gradient scale
    int max_iters = 100;
    double armijo = 1e-4;
    double boundary_frac = 0.99;  // each atom margin keeps >= 1% per step
};

struct InnerSolution {
    Vec h_star;
    double objective = 0.0;  // value of the concave objective at h_star, >= 0
    double grad_norm = 0.0;
    double margin = 0.0;
    int iterations = 0;
};

// Constant allocation that neutralises all factor exposure, so the running
// cost g is the same at every state. g_check stores that constant.
struct ZeroBetaPolicy {
    Vec h_check;
    double g_check = 0.0;
};

// Concave objective maximised pointwise inside the Hamiltonian:
//   L(x,p,h) = -(theta+1)/2 h'SS'h - theta h'S L(t)' p + h'(a_hat + A_hat x)
//              - (1/theta) sum_j lambda_j [ (1+h'psi_j)^-theta - 1
//                                           + theta h'psi_j [compensated_j] ].
// L(x,p,0) = 0 and L -> -infinity at the feasible boundary.
double inner_objective(const ValidatedModel& model, const Criterion& crit,
                       const Vec& x, const Vec& p, const Vec& h, double t = 0.0);

// Analytic gradient and Hessian of inner_objective in h. The Hessian is
// negative definite everywhere on the feasible region.
void inner_grad_hess(const ValidatedModel& model, const Criterion& crit,
                     const Vec& x, const Vec& p, const Vec& h, Vec& grad,
                     Mat& hess, double t = 0.0);

// Damped Newton from h = 0 with fraction-to-boundary step control and
// Armijo backtracking. Throws NoConvergence if the iteration cap is hit
// with the gradient still above tolerance.
InnerSolution maximize_inner(const ValidatedModel& model, const Criterion& crit,
                             const Vec& x, const Vec& p,
                             const NewtonConfig& cfg = {}, double t = 0.0);

// Zero-beta policy construction:
//  - A0 = 0, A_hat != 0: h = 0.
//  - A0 = 0, A_hat  = 0: g is state-independent for every h; returns the
//    g-minimising allocation so the constant g_check is the best available.
//  - A0 != 0: minimum-norm solution of A_hat' h = -A0 (requires full rank).
ZeroBetaPolicy zero_beta(const ValidatedModel& model, const Criterion& crit);

}  // namespace riskjump
