#pragma once

#include <vector>

#include "riskjump/criterion.hpp"
#include "riskjump/model.hpp"
#include "riskjump/montecarlo.hpp"
#include "riskjump/types.hpp"

namespace riskjump {

// Prior on the unobserved initial factor.
struct FilterParams {
    Vec m0;  // prior mean
    Mat P0;  // prior covariance, symmetric PSD
};

struct FilterState {
    std::vector<double> t_grid;
    std::vector<Vec> x_hat;
    std::vector<Mat> P;
};

// Split of the (money-market discounted) log prices into a continuous
// component driven by the factor and a jump component with deterministic
// drift. Reconstruction y1 + y2 equals the discounted log-price path
// exactly at every recorded time.
struct Decomposition {
    std::vector<double> t_grid;
    std::vector<Vec> y1;
    std::vector<Vec> y2;
    Vec c;
};

// Deterministic drift rate of the jump component:
//   c_i = a_hat_i - (SS')_ii/2 + sum over compensated atoms of
//         lambda_j [ln(1 + psi_ji) - psi_ji].
// Requires A0 = 0: with a factor-dependent short rate the observed rate
// itself carries factor information and this reduction does not apply.
Vec jump_component_drift(const ValidatedModel& model);

// Splits a simulated path (log prices and jump events known exactly) into
// its continuous and jump components. The known money-market growth a0*t
// is removed from the log prices first.
Decomposition decompose_observations(const ValidatedModel& model,
                                     const PathRecord& record);

// Error-covariance trajectory from the matrix Riccati equation, integrated
// with classical fourth-order steps on t_grid, symmetrised and kept PSD.
std::vector<Mat> riccati_solve(const ValidatedModel& model, const Mat& P0,
                               const std::vector<double>& t_grid);

// Conditional-mean recursion driven by the continuous observation component.
FilterState run_filter(const ValidatedModel& model, const FilterParams& params,
                       const Decomposition& decomposition,
                       const std::vector<Mat>& P_trajectory);

// Standardised innovation increments, one per grid interval; approximately
// iid N(0, dt I) when the filter is consistent.
std::vector<Vec> innovation_increments(const ValidatedModel& model,
                                       const Decomposition& decomposition,
                                       const FilterState& state);

// Full-observation model equivalent to filtering: the factor state becomes
// the conditional mean with tabulated loading
//   Lambda_eff(t) = (Lambda Sigma' + P(t) A_hat') (SS')^{-1/2},
// asset loading (SS')^{1/2}, unchanged drift coefficients and jumps. The
// noise dimension stays n + m with the extra columns zero so the model is
// accepted by every solver and simulator unchanged.
ValidatedModel build_reduced_model(const ValidatedModel& model,
                                   const std::vector<double>& times,
                                   const std::vector<Mat>& P_trajectory);

struct FilterConsistency {
    std::vector<double> probe_times;
    std::vector<Mat> empirical_cov;  // second moment of X - x_hat about zero
    std::vector<Mat> riccati_P;
    std::vector<double> rel_error_frobenius;
    // innovation statistics, standardised to unit-variance increments
    double innovation_mean = 0.0;
    double innovation_mean_se = 0.0;
    double innovation_var = 0.0;
    double innovation_var_se = 0.0;
    double innovation_lag1 = 0.0;
    double innovation_lag1_se = 0.0;
    long num_paths = 0;
};

// Monte Carlo check that the filter error covariance matches the Riccati
// trajectory: paths start from the prior, are decomposed and filtered, and
// the error second moment is compared with P(t) at the probe times.
FilterConsistency filter_consistency_study(const ValidatedModel& model,
                                           const Criterion& crit,
                                           const FilterParams& params,
                                           double horizon, int n_steps,
                                           long num_paths, std::uint64_t seed,
                                           const std::vector<double>& probe_times,
                                           Exec exec = Exec::parallel);

}  // namespace riskjump
