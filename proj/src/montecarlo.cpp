#include "riskjump/montecarlo.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

namespace riskjump {

PolicyRule constant_policy(const Vec& h) {
    return [h](double, const Vec&) { return h; };
}

PathStats stats_from_values(const std::vector<double>& values,
                            const std::string& name) {
    PathStats s;
    s.estimator_name = name;
    s.num_paths = static_cast<long>(values.size());
    if (values.empty()) return s;
    s.mean = pairwise_sum(values) / static_cast<double>(values.size());
    if (values.size() > 1) {
        std::vector<double> sq(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double d = values[i] - s.mean;
            sq[i] = d * d;
        }
        const double var =
            pairwise_sum(sq) / static_cast<double>(values.size() - 1);
        s.std_error = std::sqrt(var / static_cast<double>(values.size()));
    }
    return s;
}

namespace {

// Number of steps so that the grid lands on the horizon exactly.
int step_count(double horizon, double dt) {
    return std::max(1, static_cast<int>(std::ceil(horizon / dt - 1e-12)));
}

// One-step exact Gaussian transition of the affine factor SDE, conditioned
// on the shared Brownian increment:
//   X+ = Phi X + J b_eff + (J Lambda / dt) dW + resid,  resid ~ N(0, R).
struct OuStep {
    Mat Phi;      // exp(B dt)
    Mat J;        // int_0^dt exp(B s) ds
    Mat gain_dw;  // J Lambda / dt
    Mat resid_chol;
};

OuStep make_ou_step(const Mat& B, const Mat& Lambda, double dt) {
    const int n = static_cast<int>(B.rows());
    OuStep st;

    Mat block = Mat::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = B * dt;
    block.topRightCorner(n, n) = Mat::Identity(n, n) * dt;
    const Mat eb = block.exp();
    st.Phi = eb.topLeftCorner(n, n);
    st.J = eb.topRightCorner(n, n);

    // Van Loan block for the unconditional covariance Q
    const Mat K = Lambda * Lambda.transpose();
    Mat vl = Mat::Zero(2 * n, 2 * n);
    vl.topLeftCorner(n, n) = -B * dt;
    vl.topRightCorner(n, n) = K * dt;
    vl.bottomRightCorner(n, n) = B.transpose() * dt;
    const Mat evl = vl.exp();
    const Mat Q = evl.bottomRightCorner(n, n).transpose() *
                  evl.topRightCorner(n, n);

    const Mat C = st.J * Lambda;  // Cov(X increment noise, dW)
    st.gain_dw = C / dt;
    Mat R = Q - C * C.transpose() / dt;
    R = 0.5 * (R + R.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(R);
    Vec ev = es.eigenvalues().cwiseMax(0.0);
    st.resid_chol =
        es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
    return st;
}

std::vector<JumpEvent> draw_jump_events(const JumpMeasure& jumps, double horizon,
                                        PathRng& rng,
                                        std::vector<long>& counts) {
    std::vector<JumpEvent> events;
    counts.assign(jumps.atoms.size(), 0);
    for (std::size_t j = 0; j < jumps.atoms.size(); ++j) {
        double t = rng.exponential(jumps.atoms[j].intensity);
        while (t <= horizon) {
            events.push_back({t, static_cast<int>(j)});
            ++counts[j];
            t += rng.exponential(jumps.atoms[j].intensity);
        }
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const JumpEvent& a, const JumpEvent& b) {
                         return a.time < b.time;
                     });
    return events;
}

// Runs fn over every path with its own substream and returns the per-path
// values in path order. Exceptions raised inside a worker are re-thrown
// after the loop.
template <typename Fn>
std::vector<double> per_path_values(const PathConfig& cfg, Fn&& fn) {
    cfg.check();
    std::vector<double> vals(static_cast<std::size_t>(cfg.num_paths));
    std::string first_error;
    const bool parallel = cfg.exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (parallel)
    for (long i = 0; i < cfg.num_paths; ++i) {
        if (!first_error.empty()) continue;
        try {
            PathRng rng(cfg.seed, static_cast<std::uint64_t>(i));
            vals[static_cast<std::size_t>(i)] = fn(rng, i);
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (!first_error.empty()) throw InfeasiblePolicyOnPath(first_error);
    return vals;
}

}  // namespace

PathRecord simulate_one_path(const ValidatedModel& model, const Criterion& crit,
                             const PolicyRule& policy, const Vec& x0,
                             double horizon, const PathConfig& cfg, PathRng& rng,
                             const RecordOptions& opts) {
    if (x0.size() != model.n)
        throw DimensionMismatch("simulate_one_path: x0 must have length n");
    const double theta = crit.theta;
    const int K = step_count(horizon, cfg.dt);
    const double dt = horizon / K;
    const Mat ss = model.sigma_sigma_t();

    PathRecord rec;
    std::vector<JumpEvent> events =
        draw_jump_events(model.jumps, horizon, rng, rec.arrival_counts);
    if (opts.jump_events) rec.jumps = events;

    // compensated-atom drift correction entering the log prices:
    // sum over compensated atoms of lambda * psi
    Vec logp_comp_psi = Vec::Zero(model.m);
    for (const JumpAtom& atom : model.jumps.atoms)
        if (atom.compensated) logp_comp_psi += atom.intensity * atom.mark;

    const bool constant_dyn = !model.has_time_varying_lambda();
    OuStep ou;
    if (cfg.scheme == FactorScheme::exact_ou && constant_dyn)
        ou = make_ou_step(model.B, model.Lambda, dt);

    Vec x = x0;
    double ln_v = std::log(crit.v);
    double ln_chi = 0.0;
    double g_int = 0.0;
    Vec log_price = Vec::Zero(model.m);

    if (opts.factor_path) {
        rec.x.reserve(K + 1);
        rec.x.push_back(x);
    }
    if (opts.wealth_path) {
        rec.ln_v.reserve(K + 1);
        rec.ln_v.push_back(ln_v);
    }
    if (opts.log_prices) {
        rec.log_price.reserve(K + 1);
        rec.log_price.push_back(log_price);
    }
    rec.times.reserve(K + 1);
    rec.times.push_back(0.0);

    std::size_t ev = 0;
    Vec dw(model.M);
    for (int k = 0; k < K; ++k) {
        const double t = k * dt;
        const Vec h = policy(t, x);
        if (h.size() != model.m)
            throw DimensionMismatch("policy rule returned wrong length");
        const double margin = feasible_margin(model, h);
        if (!(margin > 0.0)) {
            std::ostringstream os;
            os << "infeasible policy on path: margin " << margin << " at t = "
               << t << ", x = " << x.transpose();
            throw InfeasiblePolicyOnPath(os.str());
        }

        for (int c = 0; c < model.M; ++c) dw[c] = std::sqrt(dt) * rng.normal();

        const double quad = h.dot(ss * h);
        const Vec sig_dw = model.Sigma * dw;

        // deterministic parts of the accumulators over this step
        double lnv_drift = model.a0 + model.A0.dot(x) +
                           h.dot(model.a_hat + model.A_hat * x) - 0.5 * quad;
        double chi_drift = -0.5 * theta * theta * quad;
        double lnv_comp = 0.0;
        for (const JumpAtom& atom : model.jumps.atoms) {
            const double u = h.dot(atom.mark);
            if (atom.compensated) lnv_comp += atom.intensity * u;
            chi_drift += atom.intensity * (1.0 - pow_one_plus(u, theta));
        }
        ln_v += (lnv_drift - lnv_comp) * dt + h.dot(sig_dw);
        ln_chi += chi_drift * dt - theta * h.dot(sig_dw);
        g_int += g_value(model, crit, x, h) * dt;

        if (opts.log_prices) {
            Vec drift = Vec::Constant(model.m, model.a0) + model.a_hat +
                        model.A_hat * x - 0.5 * ss.diagonal() - logp_comp_psi;
            log_price += drift * dt + sig_dw;
        }

        // jumps that land inside this step, applied with the prevailing h
        const double t_next = (k + 1 == K) ? horizon : (k + 1) * dt;
        while (ev < events.size() && events[ev].time <= t_next) {
            const JumpAtom& atom = model.jumps.atoms[events[ev].atom];
            const double lj = std::log1p(h.dot(atom.mark));
            ln_v += lj;
            ln_chi -= theta * lj;
            if (opts.log_prices)
                log_price += atom.mark.array().log1p().matrix();
            ++ev;
        }

        // factor update shares the same Brownian increment
        if (cfg.scheme == FactorScheme::euler) {
            x += (model.b + model.B * x) * dt + model.lambda(t) * dw;
        } else {
            if (!constant_dyn) ou = make_ou_step(model.B, model.lambda(t), dt);
            Vec eta(model.n);
            for (int c = 0; c < model.n; ++c) eta[c] = rng.normal();
            x = ou.Phi * x + ou.J * model.b + ou.gain_dw * dw +
                ou.resid_chol * eta;
        }

        rec.times.push_back(t_next);
        if (opts.factor_path) rec.x.push_back(x);
        if (opts.wealth_path) rec.ln_v.push_back(ln_v);
        if (opts.log_prices) rec.log_price.push_back(log_price);
    }

    rec.ln_v_terminal = ln_v;
    rec.ln_chi_terminal = ln_chi;
    rec.g_integral = g_int;
    rec.x_terminal = x;
    return rec;
}

std::vector<PathRecord> simulate_physical(const ValidatedModel& model,
                                          const Criterion& crit,
                                          const PolicyRule& policy, const Vec& x0,
                                          double horizon, const PathConfig& cfg,
                                          const RecordOptions& opts) {
    cfg.check();
    std::vector<PathRecord> records(static_cast<std::size_t>(cfg.num_paths));
    std::string first_error;
    const bool parallel = cfg.exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (parallel)
    for (long i = 0; i < cfg.num_paths; ++i) {
        if (!first_error.empty()) continue;
        try {
            PathRng rng(cfg.seed, static_cast<std::uint64_t>(i));
            records[static_cast<std::size_t>(i)] = simulate_one_path(
                model, crit, policy, x0, horizon, cfg, rng, opts);
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (!first_error.empty()) throw InfeasiblePolicyOnPath(first_error);
    return records;
}

ValueEstimate estimate_value_direct(const ValidatedModel& model,
                                    const Criterion& crit,
                                    const PolicyRule& policy, const Vec& x0,
                                    double horizon, const PathConfig& cfg) {
    const double theta = crit.theta;
    std::vector<double> vals =
        per_path_values(cfg, [&](PathRng& rng, long) {
            PathRecord rec = simulate_one_path(model, crit, policy, x0, horizon,
                                               cfg, rng);
            return std::exp(-theta * rec.ln_v_terminal);
        });
    const PathStats raw = stats_from_values(vals, "value_direct_raw");

    ValueEstimate est;
    est.raw_mean = raw.mean;
    est.raw_std_error = raw.std_error;
    est.num_paths = raw.num_paths;
    est.j_value = -std::log(raw.mean) / theta;
    est.j_std_error = raw.std_error / (theta * raw.mean);
    return est;
}

PathStats simulate_changed_measure(const ValidatedModel& model,
                                   const Criterion& crit,
                                   const PolicyRule& policy, const Vec& x0,
                                   double horizon, const PathConfig& cfg) {
    const double theta = crit.theta;
    const int K = step_count(horizon, cfg.dt);
    const double dt = horizon / K;
    const bool constant_dyn = !model.has_time_varying_lambda();

    OuStep ou;
    if (cfg.scheme == FactorScheme::exact_ou && constant_dyn)
        ou = make_ou_step(model.B, model.Lambda, dt);

    std::vector<double> vals = per_path_values(cfg, [&](PathRng& rng, long) {
        Vec x = x0;
        double acc = 0.0;  // theta * int g
        OuStep ou_local = ou;
        for (int k = 0; k < K; ++k) {
            const double t = k * dt;
            const Vec h = policy(t, x);
            const double margin = feasible_margin(model, h);
            if (!(margin > 0.0)) {
                std::ostringstream os;
                os << "infeasible policy on path: margin " << margin
                   << " at t = " << t << ", x = " << x.transpose();
                throw InfeasiblePolicyOnPath(os.str());
            }
            acc += theta * g_value(model, crit, x, h) * dt;

            if (cfg.scheme == FactorScheme::euler) {
                Vec dw(model.M);
                for (int c = 0; c < model.M; ++c)
                    dw[c] = std::sqrt(dt) * rng.normal();
                x += effective_drift(model, crit, t, x, h) * dt +
                     model.lambda(t) * dw;
            } else {
                if (!constant_dyn)
                    ou_local = make_ou_step(model.B, model.lambda(t), dt);
                // drift intercept shifted by the measure change, h frozen
                const Vec b_eff =
                    model.b - theta * (model.lambda(t) *
                                       (model.Sigma.transpose() * h));
                Vec dw(model.M);
                for (int c = 0; c < model.M; ++c)
                    dw[c] = std::sqrt(dt) * rng.normal();
                Vec eta(model.n);
                for (int c = 0; c < model.n; ++c) eta[c] = rng.normal();
                x = ou_local.Phi * x + ou_local.J * b_eff +
                    ou_local.gain_dw * dw + ou_local.resid_chol * eta;
            }
        }
        return std::exp(acc - theta * std::log(crit.v));
    });
    return stats_from_values(vals, "changed_measure_phi_tilde");
}

PathStats martingale_check(const ValidatedModel& model, const Criterion& crit,
                           const PolicyRule& policy, const Vec& x0,
                           double horizon, const PathConfig& cfg) {
    std::vector<double> vals = per_path_values(cfg, [&](PathRng& rng, long) {
        PathRecord rec =
            simulate_one_path(model, crit, policy, x0, horizon, cfg, rng);
        return std::exp(rec.ln_chi_terminal);
    });
    return stats_from_values(vals, "doleans_mean");
}

PathStats feynman_kac_estimate(const FkProblem& problem, double t0,
                               const Vec& x0, double horizon,
                               const PathConfig& cfg) {
    const int n = static_cast<int>(x0.size());
    const double span = horizon - t0;
    if (!(span > 0.0)) throw Error("feynman_kac_estimate: need horizon > t0");
    const int K = step_count(span, cfg.dt);
    const double dt = span / K;

    std::vector<double> vals = per_path_values(cfg, [&](PathRng& rng, long) {
        Vec x = x0;
        double acc = 0.0;  // theta * int g
        double src = 0.0;  // int ell * exp(acc)
        for (int k = 0; k < K; ++k) {
            const double t = t0 + k * dt;
            const Mat L = problem.diffusion(t);
            Vec dw(L.cols());
            for (int c = 0; c < L.cols(); ++c)
                dw[c] = std::sqrt(dt) * rng.normal();
            const Vec x_next = x + problem.drift(t, x) * dt + L * dw;

            // first exit from the box inside this step, by linear
            // interpolation of the crossing fraction
            double alpha = 1.0;
            bool exited = false;
            for (int d = 0; d < n; ++d) {
                const double lo = problem.box_center[d] - problem.box_half_width[d];
                const double hi = problem.box_center[d] + problem.box_half_width[d];
                if (x_next[d] > hi) {
                    alpha = std::min(alpha, (hi - x[d]) / (x_next[d] - x[d]));
                    exited = true;
                } else if (x_next[d] < lo) {
                    alpha = std::min(alpha, (lo - x[d]) / (x_next[d] - x[d]));
                    exited = true;
                }
            }
            if (exited) {
                const double dte = alpha * dt;
                src += problem.source(t, x) * std::exp(acc) * dte;
                acc += problem.theta * problem.zero_order(t, x) * dte;
                const double tau = t + dte;
                const Vec x_tau = x + alpha * (x_next - x);
                return problem.boundary(tau, x_tau) * std::exp(acc) + src;
            }
            src += problem.source(t, x) * std::exp(acc) * dt;
            acc += problem.theta * problem.zero_order(t, x) * dt;
            x = x_next;
        }
        return problem.boundary(horizon, x) * std::exp(acc) + src;
    });
    return stats_from_values(vals, "feynman_kac");
}

}  // namespace riskjump
