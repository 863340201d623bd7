#include "riskjump/hjb.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "riskjump/rng.hpp"

namespace riskjump {

void Grid::check() const {
    if (dim != 1 && dim != 2)
        throw Error(
            "grid: only dim 1 and 2 are supported by the grid solver; use the "
            "Monte Carlo estimators for higher-dimensional factors");
    if (center.size() != dim || half_width.size() != dim)
        throw DimensionMismatch("grid: center/half_width must have length dim");
    for (int d = 0; d < dim; ++d)
        if (!(half_width[d] > 0.0)) throw Error("grid: half_width must be > 0");
    if (nodes_per_axis < 16) throw Error("grid: nodes_per_axis must be >= 16");
    if (time_steps < 16) throw Error("grid: time_steps must be >= 16");
    if (!(T > t0)) throw Error("grid: need T > t0");
}

Vec Grid::node(int flat) const {
    Vec x(dim);
    if (dim == 1) {
        x[0] = coord(0, flat);
    } else {
        x[0] = coord(0, flat / nodes_per_axis);
        x[1] = coord(1, flat % nodes_per_axis);
    }
    return x;
}

bool Grid::interior(int flat) const {
    if (dim == 1) return flat > 0 && flat < nodes_per_axis - 1;
    const int ix = flat / nodes_per_axis;
    const int iy = flat % nodes_per_axis;
    return ix > 0 && ix < nodes_per_axis - 1 && iy > 0 && iy < nodes_per_axis - 1;
}

double boundary_value(const Criterion& crit, const ZeroBetaPolicy& zb, double t,
                      double T) {
    return std::pow(crit.v, -crit.theta) *
           std::exp(crit.theta * zb.g_check * (T - t));
}

namespace {

struct NodeCoeffs {
    Vec f;     // drift at the node for the slice's allocation
    double g;  // running cost at the node
};

NodeCoeffs node_coeffs(const ValidatedModel& model, const Criterion& crit,
                       double t, const Vec& x, const Vec& h) {
    NodeCoeffs c;
    c.f = effective_drift(model, crit, t, x, h);
    c.g = g_value(model, crit, x, h);
    return c;
}

// A u at one interior node, with neighbours read from the full slice.
// Row sums over the drift/diffusion part vanish on constants.
double apply_operator_at(const ValidatedModel& model, const Criterion& crit,
                         const Grid& grid, const Mat& policy_slice,
                         const Vec& u, double t, int flat, bool upwind) {
    const Vec x = grid.node(flat);
    const Vec h = policy_slice.row(flat).transpose();
    const NodeCoeffs c = node_coeffs(model, crit, t, x, h);
    const Mat K = model.lambda_lambda_t(t);
    const double theta = crit.theta;

    double val = theta * c.g * u[flat];
    if (grid.dim == 1) {
        const double dx = grid.dx(0);
        const double diff = 0.5 * K(0, 0) / (dx * dx);
        val += diff * (u[flat + 1] - 2.0 * u[flat] + u[flat - 1]);
        if (upwind) {
            const double fp = std::max(c.f[0], 0.0);
            const double fm = std::min(c.f[0], 0.0);
            val += fp * (u[flat + 1] - u[flat]) / dx +
                   fm * (u[flat] - u[flat - 1]) / dx;
        } else {
            val += c.f[0] * (u[flat + 1] - u[flat - 1]) / (2.0 * dx);
        }
        return val;
    }

    const int N = grid.nodes_per_axis;
    const double dx = grid.dx(0);
    const double dy = grid.dx(1);
    const int xp = flat + N, xm = flat - N, yp = flat + 1, ym = flat - 1;
    val += 0.5 * K(0, 0) / (dx * dx) * (u[xp] - 2.0 * u[flat] + u[xm]);
    val += 0.5 * K(1, 1) / (dy * dy) * (u[yp] - 2.0 * u[flat] + u[ym]);
    val += K(0, 1) / (4.0 * dx * dy) *
           (u[xp + 1] - u[xp - 1] - u[xm + 1] + u[xm - 1]);
    if (upwind) {
        val += std::max(c.f[0], 0.0) * (u[xp] - u[flat]) / dx +
               std::min(c.f[0], 0.0) * (u[flat] - u[xm]) / dx;
        val += std::max(c.f[1], 0.0) * (u[yp] - u[flat]) / dy +
               std::min(c.f[1], 0.0) * (u[flat] - u[ym]) / dy;
    } else {
        val += c.f[0] * (u[xp] - u[xm]) / (2.0 * dx);
        val += c.f[1] * (u[yp] - u[ym]) / (2.0 * dy);
    }
    return val;
}

void check_positive(const Vec& u, int j) {
    int idx = -1;
    const double mn = u.minCoeff(&idx);
    if (!(mn > 0.0)) {
        std::ostringstream os;
        os << "solve_linear_pde: phi_tilde = " << mn << " at t index " << j
           << ", node " << idx << "; the scheme broke down, use a smaller "
           << "time step";
        throw NonPositiveValue(os.str());
    }
}

void march_1d(const ValidatedModel& model, const Criterion& crit,
              const PolicyField& policy, const Grid& grid,
              const SolverConfig& cfg, const ZeroBetaPolicy& zb,
              std::vector<Vec>& u) {
    const int N = grid.nodes_per_axis;
    const int K = grid.time_steps;
    const double dt = grid.dt();
    const double dx = grid.dx(0);
    const double w = cfg.time_weight;

    std::vector<double> lower(N), diag(N), upper(N), rhs(N);

    for (int j = K - 1; j >= 0; --j) {
        const double t = grid.time_at(j);
        const double bv = boundary_value(crit, zb, t, grid.T);
        Vec& un = u[j];
        const Vec& up = u[j + 1];

        // explicit contribution at t_{j+1}
        Vec expl = Vec::Zero(N);
        if (w < 1.0) {
            const double tp = grid.time_at(j + 1);
            for (int i = 1; i < N - 1; ++i)
                expl[i] = apply_operator_at(model, crit, grid, policy[j + 1], up,
                                            tp, i, cfg.upwind_drift);
        }

        const Mat Kmat = model.lambda_lambda_t(t);
        const double diff = 0.5 * Kmat(0, 0) / (dx * dx);
        for (int i = 1; i < N - 1; ++i) {
            const Vec x = grid.node(i);
            const Vec h = policy[j].row(i).transpose();
            const NodeCoeffs c = node_coeffs(model, crit, t, x, h);
            double cp, cm;
            if (cfg.upwind_drift) {
                cp = diff + std::max(c.f[0], 0.0) / dx;
                cm = diff - std::min(c.f[0], 0.0) / dx;
            } else {
                cp = diff + c.f[0] / (2.0 * dx);
                cm = diff - c.f[0] / (2.0 * dx);
            }
            const double cd = -(cp + cm) + crit.theta * c.g;

            lower[i] = -w * dt * cm;
            diag[i] = 1.0 - w * dt * cd;
            upper[i] = -w * dt * cp;
            rhs[i] = up[i] + (1.0 - w) * dt * expl[i];
        }
        // boundary values are known; fold them into the first/last rows
        rhs[1] -= lower[1] * bv;
        rhs[N - 2] -= upper[N - 2] * bv;

        // Thomas sweep over interior unknowns
        for (int i = 2; i < N - 1; ++i) {
            if (std::abs(diag[i - 1]) < 1e-300)
                throw LinearSolveFailure("solve_linear_pde: zero pivot");
            const double m = lower[i] / diag[i - 1];
            diag[i] -= m * upper[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        un[N - 1] = bv;
        un[0] = bv;
        if (std::abs(diag[N - 2]) < 1e-300)
            throw LinearSolveFailure("solve_linear_pde: zero pivot");
        un[N - 2] = rhs[N - 2] / diag[N - 2];
        for (int i = N - 3; i >= 1; --i)
            un[i] = (rhs[i] - upper[i] * un[i + 1]) / diag[i];

        check_positive(un, j);
    }
}

void march_2d(const ValidatedModel& model, const Criterion& crit,
              const PolicyField& policy, const Grid& grid,
              const SolverConfig& cfg, const ZeroBetaPolicy& zb,
              std::vector<Vec>& u) {
    const int N = grid.nodes_per_axis;
    const int K = grid.time_steps;
    const double dt = grid.dt();
    const double dx = grid.dx(0);
    const double dy = grid.dx(1);
    const double w = cfg.time_weight;
    const int n_int = (N - 2) * (N - 2);

    auto int_index = [N](int ix, int iy) { return (ix - 1) * (N - 2) + (iy - 1); };

    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(n_int) * 9);

    for (int j = K - 1; j >= 0; --j) {
        const double t = grid.time_at(j);
        const double bv = boundary_value(crit, zb, t, grid.T);
        Vec& un = u[j];
        const Vec& up = u[j + 1];

        Vec rhs(n_int);
        if (w < 1.0) {
            const double tp = grid.time_at(j + 1);
            for (int ix = 1; ix < N - 1; ++ix)
                for (int iy = 1; iy < N - 1; ++iy) {
                    const int flat = grid.flatten(ix, iy);
                    rhs[int_index(ix, iy)] =
                        up[flat] + (1.0 - w) * dt *
                                       apply_operator_at(model, crit, grid,
                                                         policy[j + 1], up, tp,
                                                         flat, cfg.upwind_drift);
                }
        } else {
            for (int ix = 1; ix < N - 1; ++ix)
                for (int iy = 1; iy < N - 1; ++iy)
                    rhs[int_index(ix, iy)] = up[grid.flatten(ix, iy)];
        }

        const Mat Kmat = model.lambda_lambda_t(t);
        const double dxx = 0.5 * Kmat(0, 0) / (dx * dx);
        const double dyy = 0.5 * Kmat(1, 1) / (dy * dy);
        const double dxy = Kmat(0, 1) / (4.0 * dx * dy);

        trips.clear();
        for (int ix = 1; ix < N - 1; ++ix) {
            for (int iy = 1; iy < N - 1; ++iy) {
                const int flat = grid.flatten(ix, iy);
                const int row = int_index(ix, iy);
                const Vec x = grid.node(flat);
                const Vec h = policy[j].row(flat).transpose();
                const NodeCoeffs c = node_coeffs(model, crit, t, x, h);

                double cxp = dxx, cxm = dxx, cyp = dyy, cym = dyy;
                if (cfg.upwind_drift) {
                    cxp += std::max(c.f[0], 0.0) / dx;
                    cxm -= std::min(c.f[0], 0.0) / dx;
                    cyp += std::max(c.f[1], 0.0) / dy;
                    cym -= std::min(c.f[1], 0.0) / dy;
                } else {
                    cxp += c.f[0] / (2.0 * dx);
                    cxm -= c.f[0] / (2.0 * dx);
                    cyp += c.f[1] / (2.0 * dy);
                    cym -= c.f[1] / (2.0 * dy);
                }
                const double cd =
                    -(cxp + cxm + cyp + cym) + crit.theta * c.g;

                auto add = [&](int jx, int jy, double coeff) {
                    // off-grid-interior neighbours carry the known datum
                    if (jx == 0 || jx == N - 1 || jy == 0 || jy == N - 1)
                        rhs[row] += w * dt * coeff * bv;
                    else
                        trips.emplace_back(row, int_index(jx, jy),
                                           -w * dt * coeff);
                };

                trips.emplace_back(row, row, 1.0 - w * dt * cd);
                add(ix + 1, iy, cxp);
                add(ix - 1, iy, cxm);
                add(ix, iy + 1, cyp);
                add(ix, iy - 1, cym);
                if (dxy != 0.0) {
                    add(ix + 1, iy + 1, dxy);
                    add(ix - 1, iy - 1, dxy);
                    add(ix + 1, iy - 1, -dxy);
                    add(ix - 1, iy + 1, -dxy);
                }
            }
        }

        Eigen::SparseMatrix<double> lhs(n_int, n_int);
        lhs.setFromTriplets(trips.begin(), trips.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(lhs);
        if (lu.info() != Eigen::Success)
            throw LinearSolveFailure("solve_linear_pde: sparse factorisation failed");
        const Vec sol = lu.solve(rhs);
        if (lu.info() != Eigen::Success)
            throw LinearSolveFailure("solve_linear_pde: sparse solve failed");

        un.setConstant(bv);
        for (int ix = 1; ix < N - 1; ++ix)
            for (int iy = 1; iy < N - 1; ++iy)
                un[grid.flatten(ix, iy)] = sol[int_index(ix, iy)];
        check_positive(un, j);
    }
}

}  // namespace

std::vector<Vec> solve_linear_pde(const ValidatedModel& model,
                                  const Criterion& crit,
                                  const PolicyField& policy, const Grid& grid,
                                  const SolverConfig& cfg) {
    grid.check();
    crit.check();
    if (cfg.time_weight < 0.5 || cfg.time_weight > 1.0)
        throw Error("solve_linear_pde: time_weight must lie in [0.5, 1]");
    if (static_cast<int>(policy.size()) != grid.time_steps + 1)
        throw DimensionMismatch("solve_linear_pde: policy field has wrong "
                                "number of time slices");
    const ZeroBetaPolicy zb = zero_beta(model, crit);

    const int K = grid.time_steps;
    std::vector<Vec> u(K + 1);
    for (int j = 0; j <= K; ++j) u[j] = Vec::Zero(grid.nodes_total());
    u[K].setConstant(std::pow(crit.v, -crit.theta));

    if (grid.dim == 1)
        march_1d(model, crit, policy, grid, cfg, zb, u);
    else
        march_2d(model, crit, policy, grid, cfg, zb, u);
    return u;
}

namespace {

// Discrete Hamiltonian value of allocation h at one node: the h-dependent
// part of the scheme's spatial operator. Used to compare a candidate
// allocation against the incumbent on equal terms.
double discrete_hamiltonian(const ValidatedModel& model, const Criterion& crit,
                            const Grid& grid, const Vec& u_slice, double t,
                            int flat, const Vec& h, bool upwind) {
    const Vec x = grid.node(flat);
    const Vec f = effective_drift(model, crit, t, x, h);
    const double g = g_value(model, crit, x, h);
    double val = crit.theta * g * u_slice[flat];
    for (int d = 0; d < grid.dim; ++d) {
        const int stride = (grid.dim == 1 || d == 1) ? 1 : grid.nodes_per_axis;
        const double dxa = grid.dx(d);
        const double uplus = u_slice[flat + stride];
        const double uminus = u_slice[flat - stride];
        if (upwind) {
            val += std::max(f[d], 0.0) * (uplus - u_slice[flat]) / dxa +
                   std::min(f[d], 0.0) * (u_slice[flat] - uminus) / dxa;
        } else {
            val += f[d] * (uplus - uminus) / (2.0 * dxa);
        }
    }
    return val;
}

}  // namespace

PolicyField improve_policy(const ValidatedModel& model, const Criterion& crit,
                           const std::vector<Vec>& phi_tilde, const Grid& grid,
                           const SolverConfig& cfg, const PolicyField* previous) {
    grid.check();
    if (static_cast<int>(phi_tilde.size()) != grid.time_steps + 1)
        throw DimensionMismatch("improve_policy: field has wrong number of "
                                "time slices");
    const ZeroBetaPolicy zb = zero_beta(model, crit);
    const int K = grid.time_steps;
    const int nodes = grid.nodes_total();
    const double theta = crit.theta;

    PolicyField out(K + 1, Mat(nodes, model.m));
    for (int j = 0; j <= K; ++j)
        out[j].rowwise() = zb.h_check.transpose();

    std::string first_error;

    for (int j = 0; j < K; ++j) {
        const double t = grid.time_at(j);
        const Vec& u = phi_tilde[j];
        for (int i = 0; i < nodes; ++i) {
            const double v = u[i];
            if (!(v > 0.0)) {
                std::ostringstream os;
                os << "improve_policy: phi_tilde <= 0 at t index " << j
                   << ", node " << i;
                throw NonPositiveValue(os.str());
            }
        }

        // value gradient p from central differences of phi
        Vec phi_slice(nodes);
        for (int i = 0; i < nodes; ++i) phi_slice[i] = -std::log(u[i]) / theta;

        const bool parallel = cfg.exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (parallel)
        for (int i = 0; i < nodes; ++i) {
            if (!grid.interior(i)) continue;
            if (!first_error.empty()) continue;
            try {
                Vec p(grid.dim);
                for (int d = 0; d < grid.dim; ++d) {
                    const int stride =
                        (grid.dim == 1 || d == 1) ? 1 : grid.nodes_per_axis;
                    p[d] = (phi_slice[i + stride] - phi_slice[i - stride]) /
                           (2.0 * grid.dx(d));
                }
                const Vec x = grid.node(i);
                InnerSolution sol =
                    maximize_inner(model, crit, x, p, cfg.newton, t);
                Vec h = sol.h_star;
                if (previous != nullptr) {
                    // keep the incumbent unless the candidate strictly lowers
                    // the discrete Hamiltonian
                    const Vec h_prev = (*previous)[j].row(i).transpose();
                    const double hd_new = discrete_hamiltonian(
                        model, crit, grid, u, t, i, h, cfg.upwind_drift);
                    const double hd_old = discrete_hamiltonian(
                        model, crit, grid, u, t, i, h_prev, cfg.upwind_drift);
                    if (!(hd_new < hd_old)) h = h_prev;
                }
                out[j].row(i) = h.transpose();
            } catch (const std::exception& e) {
#pragma omp critical
                if (first_error.empty()) {
                    std::ostringstream os;
                    os << e.what() << " [at t = " << t << ", node " << i
                       << ", x = " << grid.node(i).transpose() << "]";
                    first_error = os.str();
                }
            }
        }
        if (!first_error.empty()) throw Error(first_error);
    }
    return out;
}

namespace {

double hamiltonian_residual_sup(const ValidatedModel& model,
                                const Criterion& crit, const Grid& grid,
                                const std::vector<Vec>& u,
                                const PolicyField& policy) {
    const int K = grid.time_steps;
    const double dt = grid.dt();
    double sup = 0.0;
    for (int j = 0; j < K; ++j) {
        const double t = grid.time_at(j);
        const Mat Kmat = model.lambda_lambda_t(t);
        for (int i = 0; i < grid.nodes_total(); ++i) {
            if (!grid.interior(i)) continue;
            const Vec x = grid.node(i);
            const Vec h = policy[j].row(i).transpose();
            const Vec f = effective_drift(model, crit, t, x, h);
            const double g = g_value(model, crit, x, h);
            double r = (u[j + 1][i] - u[j][i]) / dt +
                       crit.theta * g * u[j][i];
            for (int d = 0; d < grid.dim; ++d) {
                const int stride =
                    (grid.dim == 1 || d == 1) ? 1 : grid.nodes_per_axis;
                const double dxa = grid.dx(d);
                r += 0.5 * Kmat(d, d) *
                     (u[j][i + stride] - 2.0 * u[j][i] + u[j][i - stride]) /
                     (dxa * dxa);
                r += f[d] * (u[j][i + stride] - u[j][i - stride]) / (2.0 * dxa);
            }
            if (grid.dim == 2) {
                const int N = grid.nodes_per_axis;
                r += Kmat(0, 1) / (4.0 * grid.dx(0) * grid.dx(1)) *
                     (u[j][i + N + 1] - u[j][i + N - 1] - u[j][i - N + 1] +
                      u[j][i - N - 1]);
            }
            sup = std::max(sup, std::abs(r));
        }
    }
    return sup;
}

}  // namespace

ValueField policy_iteration(const ValidatedModel& model, const Criterion& crit,
                            const Grid& grid, const SolverConfig& cfg) {
    grid.check();
    crit.check();
    const ZeroBetaPolicy zb = zero_beta(model, crit);
    const double scale = std::pow(crit.v, -crit.theta);
    const double tol = cfg.policy_tol_scale * scale;

    const int K = grid.time_steps;
    const int nodes = grid.nodes_total();

    PolicyField policy(K + 1, Mat(nodes, model.m));
    for (int j = 0; j <= K; ++j) policy[j].rowwise() = zb.h_check.transpose();

    std::vector<Vec> u = solve_linear_pde(model, crit, policy, grid, cfg);
    SolveDiagnostics diag;
    diag.iterations = 1;
    diag.g_check = zb.g_check;

    bool converged = false;
    while (diag.iterations < cfg.max_policy_iters) {
        policy = improve_policy(model, crit, u, grid, cfg, &policy);
        std::vector<Vec> u_next = solve_linear_pde(model, crit, policy, grid, cfg);
        ++diag.iterations;

        double delta = 0.0;
        double excess = 0.0;
        for (int j = 0; j <= K; ++j) {
            delta = std::max(delta, (u_next[j] - u[j]).cwiseAbs().maxCoeff());
            excess = std::max(excess, (u_next[j] - u[j]).maxCoeff());
        }
        diag.deltas.push_back(delta);
        diag.monotonicity_excess.push_back(std::max(excess, 0.0));
        u = std::move(u_next);
        if (delta <= tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream os;
        os << "policy_iteration: no convergence after " << diag.iterations
           << " iterations; deltas:";
        for (double d : diag.deltas) os << ' ' << d;
        throw NoPolicyConvergence(os.str());
    }
    diag.converged = true;

    // final maximiser consistent with the converged field
    policy = improve_policy(model, crit, u, grid, cfg, &policy);

    ValueField field;
    field.grid = grid;
    field.phi_tilde = std::move(u);
    field.policy = std::move(policy);
    field.phi.resize(K + 1);
    for (int j = 0; j <= K; ++j) {
        field.phi[j] = Vec(nodes);
        for (int i = 0; i < nodes; ++i)
            field.phi[j][i] = -std::log(field.phi_tilde[j][i]) / crit.theta;
    }

    diag.hamiltonian_residual_sup = hamiltonian_residual_sup(
        model, crit, grid, field.phi_tilde, field.policy);
    double bound_excess = -std::numeric_limits<double>::infinity();
    double mn = std::numeric_limits<double>::infinity();
    for (int j = 0; j <= K; ++j) {
        const double bv = boundary_value(crit, zb, grid.time_at(j), grid.T);
        bound_excess =
            std::max(bound_excess, field.phi_tilde[j].maxCoeff() - bv);
        mn = std::min(mn, field.phi_tilde[j].minCoeff());
    }
    diag.upper_bound_excess = bound_excess;
    diag.min_phi_tilde = mn;
    field.diagnostics = std::move(diag);
    return field;
}

ConvexityReport convexity_report(const ValueField& field, int midpoint_pairs) {
    const Grid& grid = field.grid;
    const int K = grid.time_steps;
    const int nodes = grid.nodes_total();

    ConvexityReport rep;
    double phi_scale = 0.0;
    double tilde_scale = 0.0;
    for (int j = 0; j <= K; ++j) {
        phi_scale = std::max(phi_scale, field.phi[j].cwiseAbs().maxCoeff());
        tilde_scale = std::max(tilde_scale, field.phi_tilde[j].maxCoeff());
    }
    rep.tolerance = 1e-8 * (1.0 + phi_scale);

    rep.min_second_difference = std::numeric_limits<double>::infinity();
    for (int j = 0; j <= K; ++j) {
        for (int i = 0; i < nodes; ++i) {
            if (!grid.interior(i)) continue;
            for (int d = 0; d < grid.dim; ++d) {
                const int stride =
                    (grid.dim == 1 || d == 1) ? 1 : grid.nodes_per_axis;
                const double dd = field.phi[j][i + stride] -
                                  2.0 * field.phi[j][i] +
                                  field.phi[j][i - stride];
                if (dd < rep.min_second_difference) {
                    rep.min_second_difference = dd;
                    rep.worst_time_index = j;
                    rep.worst_node = i;
                    rep.worst_axis = d;
                }
            }
        }
    }

    // multiplicative midpoint inequality on phi_tilde at sampled node pairs
    const double mid_tol = 1e-8 * (1.0 + tilde_scale);
    rep.midpoint_min_slack = std::numeric_limits<double>::infinity();
    PathRng rng(0x5EEDBA5EULL, 0);
    const int N = grid.nodes_per_axis;
    int checked = 0;
    int guard = 0;
    while (checked < midpoint_pairs && guard < 100 * midpoint_pairs) {
        ++guard;
        const int j = static_cast<int>(rng.next_u64() % (K + 1));
        if (grid.dim == 1) {
            int i1 = static_cast<int>(rng.next_u64() % N);
            int i2 = static_cast<int>(rng.next_u64() % N);
            if ((i1 + i2) % 2 != 0) continue;
            const int mid = (i1 + i2) / 2;
            const double slack =
                field.phi_tilde[j][mid] -
                std::sqrt(field.phi_tilde[j][i1] * field.phi_tilde[j][i2]);
            rep.midpoint_min_slack = std::min(rep.midpoint_min_slack, slack);
            if (slack < -mid_tol) ++rep.midpoint_violations;
            ++checked;
        } else {
            int x1 = static_cast<int>(rng.next_u64() % N);
            int y1 = static_cast<int>(rng.next_u64() % N);
            int x2 = static_cast<int>(rng.next_u64() % N);
            int y2 = static_cast<int>(rng.next_u64() % N);
            if ((x1 + x2) % 2 != 0 || (y1 + y2) % 2 != 0) continue;
            const int f1 = grid.flatten(x1, y1);
            const int f2 = grid.flatten(x2, y2);
            const int fm = grid.flatten((x1 + x2) / 2, (y1 + y2) / 2);
            const double slack =
                field.phi_tilde[j][fm] -
                std::sqrt(field.phi_tilde[j][f1] * field.phi_tilde[j][f2]);
            rep.midpoint_min_slack = std::min(rep.midpoint_min_slack, slack);
            if (slack < -mid_tol) ++rep.midpoint_violations;
            ++checked;
        }
    }
    rep.midpoint_pairs_checked = checked;

    rep.pass = rep.min_second_difference >= -rep.tolerance &&
               rep.midpoint_violations == 0;
    return rep;
}

std::function<Vec(double, const Vec&)> make_grid_policy(const ValueField& field) {
    // capture by value: the rule must outlive the field it was built from
    const Grid grid = field.grid;
    const PolicyField policy = field.policy;

    return [grid, policy](double t, const Vec& x) -> Vec {
        const int K = grid.time_steps;
        double tt = std::clamp(t, grid.t0, grid.T);
        const double tau = (tt - grid.t0) / grid.dt();
        int j = std::min(static_cast<int>(tau), K - 1);
        const double wt = std::clamp(tau - j, 0.0, 1.0);

        // clamped cell lookup per axis
        int idx[2] = {0, 0};
        double wx[2] = {0.0, 0.0};
        for (int d = 0; d < grid.dim; ++d) {
            const double lo = grid.center[d] - grid.half_width[d];
            double s = (std::clamp(x[d], lo, grid.center[d] + grid.half_width[d]) -
                        lo) / grid.dx(d);
            int i = std::min(static_cast<int>(s), grid.nodes_per_axis - 2);
            idx[d] = i;
            wx[d] = std::clamp(s - i, 0.0, 1.0);
        }

        auto slice_value = [&](int slice) -> Vec {
            if (grid.dim == 1) {
                const Vec h0 = policy[slice].row(idx[0]).transpose();
                const Vec h1 = policy[slice].row(idx[0] + 1).transpose();
                return (1.0 - wx[0]) * h0 + wx[0] * h1;
            }
            const Vec h00 = policy[slice].row(grid.flatten(idx[0], idx[1])).transpose();
            const Vec h01 = policy[slice].row(grid.flatten(idx[0], idx[1] + 1)).transpose();
            const Vec h10 = policy[slice].row(grid.flatten(idx[0] + 1, idx[1])).transpose();
            const Vec h11 = policy[slice].row(grid.flatten(idx[0] + 1, idx[1] + 1)).transpose();
            return (1.0 - wx[0]) * ((1.0 - wx[1]) * h00 + wx[1] * h01) +
                   wx[0] * ((1.0 - wx[1]) * h10 + wx[1] * h11);
        };

        return (1.0 - wt) * slice_value(j) + wt * slice_value(j + 1);
    };
}

}  // namespace riskjump
