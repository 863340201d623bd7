#include "riskjump/kalman.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace riskjump {

namespace {

Mat symmetric_sqrt(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    return es.eigenvectors() *
           es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

Mat symmetric_inverse(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

void require_a0_zero(const ValidatedModel& model, const char* where) {
    if (!model.A0.isZero(0.0)) {
        std::ostringstream os;
        os << where
           << ": the filtering reduction requires A0 = 0 (factor-independent "
              "short rate)";
        throw A0NotZero(os.str());
    }
}

}  // namespace

Vec jump_component_drift(const ValidatedModel& model) {
    require_a0_zero(model, "jump_component_drift");
    Vec c = model.a_hat - 0.5 * model.sigma_sigma_t().diagonal();
    for (const JumpAtom& atom : model.jumps.atoms) {
        if (!atom.compensated) continue;
        c += atom.intensity *
             (atom.mark.array().log1p().matrix() - atom.mark);
    }
    return c;
}

Decomposition decompose_observations(const ValidatedModel& model,
                                     const PathRecord& record) {
    require_a0_zero(model, "decompose_observations");
    if (record.log_price.empty() || record.log_price.size() != record.times.size())
        throw GridMismatch(
            "decompose_observations: record carries no log-price path");

    Decomposition dec;
    dec.t_grid = record.times;
    dec.c = jump_component_drift(model);

    // jump-log compensator entering the jump component's drift
    Vec comp_log = Vec::Zero(model.m);
    for (const JumpAtom& atom : model.jumps.atoms)
        if (atom.compensated)
            comp_log += atom.intensity * atom.mark.array().log1p().matrix();

    const std::size_t K = record.times.size();
    dec.y1.resize(K);
    dec.y2.resize(K);
    dec.y2[0] = record.log_price[0];
    dec.y1[0] = Vec::Zero(model.m);

    std::size_t ev = 0;
    for (std::size_t k = 1; k < K; ++k) {
        const double dt = record.times[k] - record.times[k - 1];
        Vec y2 = dec.y2[k - 1] + (dec.c - comp_log) * dt;
        while (ev < record.jumps.size() &&
               record.jumps[ev].time <= record.times[k] + 1e-15) {
            y2 += model.jumps.atoms[record.jumps[ev].atom]
                      .mark.array()
                      .log1p()
                      .matrix();
            ++ev;
        }
        dec.y2[k] = y2;
        // discounted log price minus the jump component
        dec.y1[k] = record.log_price[k] -
                    Vec::Constant(model.m, model.a0 * record.times[k]) - y2;
    }
    return dec;
}

namespace {

Mat riccati_rhs(const Mat& P, const Mat& N1, const Mat& A1, const Mat& C1) {
    return N1 - P * C1 * P + A1 * P + P * A1.transpose();
}

}  // namespace

std::vector<Mat> riccati_solve(const ValidatedModel& model, const Mat& P0,
                               const std::vector<double>& t_grid) {
    if (t_grid.size() < 2) throw GridMismatch("riccati_solve: need >= 2 times");
    if (P0.rows() != model.n || P0.cols() != model.n)
        throw DimensionMismatch("riccati_solve: P0 must be n x n");

    const Mat S = model.sigma_sigma_t();
    const Mat S_inv = symmetric_inverse(S);
    // projector onto the null space of Sigma
    const Mat Xi = Mat::Identity(model.M, model.M) -
                   model.Sigma.transpose() * S_inv * model.Sigma;
    const Mat N1 = model.Lambda * Xi * Xi.transpose() * model.Lambda.transpose();
    const Mat A1 = model.B - model.Lambda * model.Sigma.transpose() * S_inv *
                                 model.A_hat;
    const Mat C1 = model.A_hat.transpose() * S_inv * model.A_hat;

    std::vector<Mat> out(t_grid.size());
    Mat P = 0.5 * (P0 + P0.transpose());
    out[0] = P;
    for (std::size_t k = 1; k < t_grid.size(); ++k) {
        const double h = t_grid[k] - t_grid[k - 1];
        const Mat k1 = riccati_rhs(P, N1, A1, C1);
        const Mat k2 = riccati_rhs(P + 0.5 * h * k1, N1, A1, C1);
        const Mat k3 = riccati_rhs(P + 0.5 * h * k2, N1, A1, C1);
        const Mat k4 = riccati_rhs(P + h * k3, N1, A1, C1);
        P += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        P = 0.5 * (P + P.transpose());

        Eigen::SelfAdjointEigenSolver<Mat> es(P);
        const double floor = -1e-10 * std::max(P.trace(), 0.0) /
                             static_cast<double>(model.n);
        if (es.eigenvalues().minCoeff() < floor - 1e-300) {
            std::ostringstream os;
            os << "riccati_solve: covariance lost positivity at t = "
               << t_grid[k] << " (min eigenvalue "
               << es.eigenvalues().minCoeff() << "); halve the step";
            throw StepTooLarge(os.str());
        }
        if (es.eigenvalues().minCoeff() < 0.0)
            P = es.eigenvectors() *
                es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                es.eigenvectors().transpose();
        out[k] = P;
    }
    return out;
}

FilterState run_filter(const ValidatedModel& model, const FilterParams& params,
                       const Decomposition& decomposition,
                       const std::vector<Mat>& P_trajectory) {
    const std::size_t K = decomposition.t_grid.size();
    if (P_trajectory.size() != K)
        throw GridMismatch("run_filter: Riccati trajectory and observation "
                           "grid have different lengths");
    if (params.m0.size() != model.n)
        throw DimensionMismatch("run_filter: m0 must have length n");

    const Mat S_inv = symmetric_inverse(model.sigma_sigma_t());
    const Mat LS = model.Lambda * model.Sigma.transpose();

    FilterState st;
    st.t_grid = decomposition.t_grid;
    st.P = P_trajectory;
    st.x_hat.resize(K);
    st.x_hat[0] = params.m0;
    for (std::size_t k = 1; k < K; ++k) {
        const double dt = decomposition.t_grid[k] - decomposition.t_grid[k - 1];
        const Vec& xh = st.x_hat[k - 1];
        const Mat gain = (LS + P_trajectory[k - 1] * model.A_hat.transpose()) *
                         S_inv;
        const Vec innov = (decomposition.y1[k] - decomposition.y1[k - 1]) -
                          model.A_hat * xh * dt;
        st.x_hat[k] = xh + (model.b + model.B * xh) * dt + gain * innov;
    }
    return st;
}

std::vector<Vec> innovation_increments(const ValidatedModel& model,
                                       const Decomposition& decomposition,
                                       const FilterState& state) {
    const Mat S_inv_sqrt = symmetric_inverse(
        symmetric_sqrt(model.sigma_sigma_t()));
    std::vector<Vec> du;
    du.reserve(decomposition.t_grid.size() - 1);
    for (std::size_t k = 1; k < decomposition.t_grid.size(); ++k) {
        const double dt = decomposition.t_grid[k] - decomposition.t_grid[k - 1];
        const Vec innov = (decomposition.y1[k] - decomposition.y1[k - 1]) -
                          model.A_hat * state.x_hat[k - 1] * dt;
        du.push_back(S_inv_sqrt * innov);
    }
    return du;
}

ValidatedModel build_reduced_model(const ValidatedModel& model,
                                   const std::vector<double>& times,
                                   const std::vector<Mat>& P_trajectory) {
    require_a0_zero(model, "build_reduced_model");
    if (times.size() != P_trajectory.size() || times.size() < 2)
        throw GridMismatch("build_reduced_model: times and P trajectory must "
                           "have equal length >= 2");

    const Mat S = model.sigma_sigma_t();
    const Mat S_half = symmetric_sqrt(S);
    const Mat S_inv_half = symmetric_inverse(S_half);
    const Mat LS = model.Lambda * model.Sigma.transpose();

    ValidatedModel red = model;
    // asset loading (SS')^{1/2}, padded with zero columns so M stays n + m
    red.Sigma = Mat::Zero(model.m, model.M);
    red.Sigma.leftCols(model.m) = S_half;

    red.lambda_times = times;
    red.lambda_table.clear();
    red.lambda_table.reserve(times.size());
    for (const Mat& P : P_trajectory) {
        Mat lam = Mat::Zero(model.n, model.M);
        lam.leftCols(model.m) =
            (LS + P * model.A_hat.transpose()) * S_inv_half;
        red.lambda_table.push_back(std::move(lam));
    }
    red.Lambda = red.lambda_table.front();
    return red;
}

FilterConsistency filter_consistency_study(const ValidatedModel& model,
                                           const Criterion& crit,
                                           const FilterParams& params,
                                           double horizon, int n_steps,
                                           long num_paths, std::uint64_t seed,
                                           const std::vector<double>& probe_times,
                                           Exec exec) {
    require_a0_zero(model, "filter_consistency_study");
    if (num_paths < 2) throw Error("filter_consistency_study: need >= 2 paths");

    std::vector<double> t_grid(n_steps + 1);
    for (int k = 0; k <= n_steps; ++k)
        t_grid[k] = horizon * static_cast<double>(k) / n_steps;
    const std::vector<Mat> P_traj = riccati_solve(model, params.P0, t_grid);

    std::vector<std::size_t> probe_idx;
    for (double tp : probe_times) {
        const double s = tp / horizon * n_steps;
        probe_idx.push_back(static_cast<std::size_t>(
            std::clamp<long>(std::lround(s), 0, n_steps)));
    }

    PathConfig cfg;
    cfg.num_paths = num_paths;
    cfg.dt = horizon / n_steps;
    cfg.seed = seed;
    cfg.exec = exec;

    RecordOptions opts;
    opts.factor_path = true;
    opts.log_prices = true;
    opts.jump_events = true;

    const Mat prior_chol = symmetric_sqrt(params.P0);
    const PolicyRule money_market = constant_policy(Vec::Zero(model.m));

    // accumulators per path, reduced deterministically afterwards
    std::vector<std::vector<Mat>> err_sq(
        static_cast<std::size_t>(num_paths),
        std::vector<Mat>(probe_idx.size(), Mat::Zero(model.n, model.n)));
    std::vector<double> sum_du(num_paths, 0.0);
    std::vector<double> sum_du2(num_paths, 0.0);
    std::vector<double> sum_lag(num_paths, 0.0);
    long innov_per_path = 0;

    std::string first_error;
    const bool parallel = exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (parallel)
    for (long i = 0; i < num_paths; ++i) {
        if (!first_error.empty()) continue;
        try {
            PathRng rng(seed, static_cast<std::uint64_t>(i));
            Vec z(model.n);
            for (int d = 0; d < model.n; ++d) z[d] = rng.normal();
            const Vec x0 = params.m0 + prior_chol * z;

            PathRecord rec = simulate_one_path(model, crit, money_market, x0,
                                               horizon, cfg, rng, opts);
            Decomposition dec = decompose_observations(model, rec);
            FilterState st = run_filter(model, params, dec, P_traj);

            for (std::size_t p = 0; p < probe_idx.size(); ++p) {
                const Vec err = rec.x[probe_idx[p]] - st.x_hat[probe_idx[p]];
                err_sq[static_cast<std::size_t>(i)][p] = err * err.transpose();
            }
            const std::vector<Vec> du = innovation_increments(model, dec, st);
            const double sdt = std::sqrt(cfg.dt);
            double s1 = 0.0, s2 = 0.0, sl = 0.0;
            for (std::size_t k = 0; k < du.size(); ++k) {
                for (int d = 0; d < model.m; ++d) {
                    const double z1 = du[k][d] / sdt;
                    s1 += z1;
                    s2 += z1 * z1;
                    if (k + 1 < du.size()) sl += z1 * (du[k + 1][d] / sdt);
                }
            }
            sum_du[i] = s1;
            sum_du2[i] = s2;
            sum_lag[i] = sl;
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (!first_error.empty()) throw Error(first_error);
    innov_per_path = static_cast<long>(n_steps) * model.m;

    FilterConsistency out;
    out.num_paths = num_paths;
    out.probe_times = probe_times;
    for (std::size_t p = 0; p < probe_idx.size(); ++p) {
        Mat acc = Mat::Zero(model.n, model.n);
        for (long i = 0; i < num_paths; ++i) acc += err_sq[i][p];
        acc /= static_cast<double>(num_paths);
        out.empirical_cov.push_back(acc);
        out.riccati_P.push_back(P_traj[probe_idx[p]]);
        const double denom = std::max(P_traj[probe_idx[p]].norm(), 1e-300);
        out.rel_error_frobenius.push_back(
            (acc - P_traj[probe_idx[p]]).norm() / denom);
    }

    const double n_samp = static_cast<double>(num_paths) *
                          static_cast<double>(innov_per_path);
    out.innovation_mean = pairwise_sum(sum_du) / n_samp;
    out.innovation_mean_se = 1.0 / std::sqrt(n_samp);
    out.innovation_var = pairwise_sum(sum_du2) / n_samp;
    out.innovation_var_se = std::sqrt(2.0 / n_samp);
    const double n_lag = static_cast<double>(num_paths) *
                         static_cast<double>(innov_per_path - model.m);
    out.innovation_lag1 = pairwise_sum(sum_lag) / n_lag;
    out.innovation_lag1_se = 1.0 / std::sqrt(n_lag);
    return out;
}

}  // namespace riskjump
