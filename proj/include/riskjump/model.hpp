#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "riskjump/errors.hpp"
#include "riskjump/types.hpp"

namespace riskjump {

// One point mass of the image jump measure: a vector of relative price
// jumps (per asset) arriving at a Poisson rate. `compensated` marks atoms
// whose mean effect is subtracted from the drift.
struct JumpAtom {
    Vec mark;           // relative price jump per asset, each entry >= -1
    double intensity;   // arrivals per unit time, > 0
    bool compensated;   // true if the atom's drift contribution is compensated
};

// Finite list of jump atoms standing in for a general jump-size measure.
// An empty list selects the pure-diffusion mode; then the feasible set of
// allocations is unbounded.
struct JumpMeasure {
    std::vector<JumpAtom> atoms;

    bool empty() const { return atoms.empty(); }
};

// Raw market description: factor dynamics dX = (b + B X)dt + Lambda dW,
// money market rate a0 + A0'X, asset drifts a + A X, asset diffusion Sigma,
// plus the jump atoms. Noise dimension M must equal n + m.
struct MarketModel {
    int n = 0;  // factor count
    int m = 0;  // asset count
    int M = 0;  // noise dimension, n + m

    Vec b;       // n
    Mat B;       // n x n
    Mat Lambda;  // n x M

    double a0 = 0.0;
    Vec A0;  // n

    Vec a;      // m
    Mat A;      // m x n
    Mat Sigma;  // m x M

    JumpMeasure jumps;
};

struct ValidationIssue {
    std::string code;     // matches the exception type name
    std::string message;  // what failed and where
};

// Validated, immutable model with the derived excess-return fields filled
// in. Safe to share across threads; all member calls are const.
//
// A model produced by the partial-observation reduction carries a tabulated
// time-varying factor loading; lambda(t) then interpolates the table and
// every other coefficient stays constant.
class ValidatedModel {
public:
    int n = 0;
    int m = 0;
    int M = 0;

    Vec b;
    Mat B;
    Mat Lambda;  // constant loading (ignored when lambda_times is set)

    double a0 = 0.0;
    Vec A0;

    Vec a;
    Mat A;
    Mat Sigma;

    JumpMeasure jumps;

    Vec a_hat;  // a - a0 * 1
    Mat A_hat;  // A - 1 * A0'

    bool rank_A_hat_is_n = false;

    // Tabulated factor loading for reduced (filtered) models; piecewise
    // linear in t, clamped at the ends.
    std::vector<double> lambda_times;
    std::vector<Mat> lambda_table;

    bool has_time_varying_lambda() const { return !lambda_times.empty(); }

    Mat lambda(double t) const;
    Mat sigma_sigma_t() const { return Sigma * Sigma.transpose(); }
    // Sigma * Lambda(t)', the m x n coupling between asset noise and factor noise.
    Mat sigma_lambda_t(double t) const { return Sigma * lambda(t).transpose(); }
    Mat lambda_lambda_t(double t) const {
        const Mat L = lambda(t);
        return L * L.transpose();
    }
};

struct ValidationResult {
    std::optional<ValidatedModel> model;
    std::vector<ValidationIssue> issues;

    bool ok() const { return model.has_value(); }
};

// Checks dimensions, Sigma*Sigma' positive definiteness, jump-mark bounds
// and sign coverage, then fills in a_hat, A_hat and the rank flag for
// A_hat (singular values above 1e-10 times the largest). Returns either
// the validated model or the list of everything that failed.
ValidationResult validate_model(const MarketModel& raw);

// Convenience wrapper that throws the first issue instead of returning it.
ValidatedModel validate_model_or_throw(const MarketModel& raw);

// min over atoms of 1 + h'psi. Positive iff h is an allocation that no
// single jump can bankrupt; +infinity when there are no atoms.
double feasible_margin(const ValidatedModel& model, const Vec& h);

}  // namespace riskjump
