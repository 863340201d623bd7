#pragma once

#include <functional>
#include <vector>

#include "riskjump/criterion.hpp"
#include "riskjump/model.hpp"
#include "riskjump/optimizer.hpp"
#include "riskjump/parallel.hpp"
#include "riskjump/types.hpp"

namespace riskjump {

// Uniform space-time box. The box stands in for the bounded region on which
// the value function is computed; the lateral boundary carries the zero-beta
// datum. Supports dim 1 and 2; higher dimensions are refused (the Monte
// Carlo estimators cover those).
struct Grid {
    int dim = 1;
    Vec center;       // dim
    Vec half_width;   // dim, > 0 per axis
    int nodes_per_axis = 64;
    double t0 = 0.0;
    double T = 1.0;
    int time_steps = 64;

    void check() const;

    int nodes_total() const {
        int n = 1;
        for (int d = 0; d < dim; ++d) n *= nodes_per_axis;
        return n;
    }
    double dx(int axis) const {
        return 2.0 * half_width[axis] / (nodes_per_axis - 1);
    }
    double dt() const { return (T - t0) / time_steps; }
    double time_at(int j) const { return t0 + j * dt(); }
    double coord(int axis, int idx) const {
        return center[axis] - half_width[axis] + idx * dx(axis);
    }

    // dim 2 flattening: flat = ix * nodes_per_axis + iy
    int flatten(int ix, int iy) const { return ix * nodes_per_axis + iy; }
    Vec node(int flat) const;
    bool interior(int flat) const;
};

struct SolverConfig {
    double policy_tol_scale = 1e-8;  // stopping tolerance = scale * v^-theta
    int max_policy_iters = 50;
    double time_weight = 1.0;        // implicit weight in [0.5, 1]
    bool upwind_drift = true;
    NewtonConfig newton;
    Exec exec = Exec::parallel;
};

// Allocation per node, one matrix (nodes x m) per time slice.
using PolicyField = std::vector<Mat>;

struct SolveDiagnostics {
    std::vector<double> deltas;               // sup-norm change per iterate
    std::vector<double> monotonicity_excess;  // max positive increase per iterate
    int iterations = 0;
    bool converged = false;
    double hamiltonian_residual_sup = 0.0;
    double upper_bound_excess = 0.0;  // max of phi_tilde minus the zero-beta bound
    double min_phi_tilde = 0.0;
    double g_check = 0.0;
};

// Transformed value phi_tilde, value phi = -(1/theta) ln phi_tilde, and the
// pointwise maximising allocation on the grid.
struct ValueField {
    Grid grid;
    std::vector<Vec> phi_tilde;  // (time_steps+1) slices of nodes_total values
    std::vector<Vec> phi;
    PolicyField policy;          // (time_steps+1) slices, nodes x m
    SolveDiagnostics diagnostics;
};

// Lateral and terminal datum: v^-theta * exp(theta * g_check * (T - t)).
// Consistent at t = T with the terminal condition v^-theta for every v.
double boundary_value(const Criterion& crit, const ZeroBetaPolicy& zb, double t,
                      double T);

// One backward parabolic solve with the policy frozen: theta-scheme in time,
// central diffusion, upwind (or central) drift, implicit zeroth-order term,
// lateral nodes pinned to boundary_value. Tridiagonal in 1D, sparse LU in 2D.
std::vector<Vec> solve_linear_pde(const ValidatedModel& model,
                                  const Criterion& crit,
                                  const PolicyField& policy, const Grid& grid,
                                  const SolverConfig& cfg);

// Pointwise policy update: at each interior node take p as the central
// difference of phi and maximise the inner objective. When `previous` is
// given, the update keeps the incumbent allocation wherever the candidate
// does not lower the discrete Hamiltonian, which makes the iteration
// monotone in exact arithmetic. Lateral and terminal nodes carry the
// zero-beta allocation.
PolicyField improve_policy(const ValidatedModel& model, const Criterion& crit,
                           const std::vector<Vec>& phi_tilde, const Grid& grid,
                           const SolverConfig& cfg = {},
                           const PolicyField* previous = nullptr);

// Alternates solve_linear_pde and improve_policy from the zero-beta start
// until the sup-norm change drops below tolerance. Throws
// NoPolicyConvergence when the iteration cap is hit.
ValueField policy_iteration(const ValidatedModel& model, const Criterion& crit,
                            const Grid& grid, const SolverConfig& cfg = {});

struct ConvexityReport {
    bool pass = false;
    double min_second_difference = 0.0;
    int worst_time_index = -1;
    int worst_node = -1;
    int worst_axis = -1;
    double tolerance = 0.0;
    // multiplicative midpoint inequality on phi_tilde
    int midpoint_pairs_checked = 0;
    int midpoint_violations = 0;
    double midpoint_min_slack = 0.0;
};

// Discrete convexity of phi in x plus spot checks of the multiplicative
// midpoint inequality satisfied by phi_tilde.
ConvexityReport convexity_report(const ValueField& field,
                                 int midpoint_pairs = 100);

// Feedback rule backed by the solved field: multilinear interpolation in
// (t, x), clamped to the grid box.
std::function<Vec(double, const Vec&)> make_grid_policy(const ValueField& field);

}  // namespace riskjump
