#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "riskjump/criterion.hpp"
#include "riskjump/model.hpp"
#include "riskjump/parallel.hpp"
#include "riskjump/rng.hpp"
#include "riskjump/types.hpp"

namespace riskjump {

enum class FactorScheme { euler, exact_ou };

struct PathConfig {
    long num_paths = 10000;
    double dt = 1.0 / 256.0;
    std::uint64_t seed = 12345;
    FactorScheme scheme = FactorScheme::euler;
    Exec exec = Exec::parallel;

    void check() const {
        if (num_paths < 1) throw Error("path config: num_paths must be >= 1");
        if (!(dt > 0.0)) throw Error("path config: dt must be > 0");
    }
};

struct PathStats {
    double mean = 0.0;
    double std_error = 0.0;
    long num_paths = 0;
    std::string estimator_name;
};

// Feedback allocation rule h(t, x).
using PolicyRule = std::function<Vec(double, const Vec&)>;

PolicyRule constant_policy(const Vec& h);

struct JumpEvent {
    double time;
    int atom;
};

struct RecordOptions {
    bool factor_path = false;
    bool wealth_path = false;
    bool log_prices = false;
    bool jump_events = false;
};

// One simulated path under the physical measure. Log wealth and the log
// change-of-measure density are accumulated in closed form step by step, so
// wealth stays positive by construction.
struct PathRecord {
    std::vector<double> times;
    std::vector<Vec> x;          // factor path (when recorded)
    std::vector<double> ln_v;    // log wealth path (when recorded)
    std::vector<Vec> log_price;  // per-asset log prices (when recorded)
    std::vector<JumpEvent> jumps;
    std::vector<long> arrival_counts;  // per atom, always filled
    double ln_v_terminal = 0.0;
    double ln_chi_terminal = 0.0;
    double g_integral = 0.0;  // int_0^T g(X_s, h_s) ds along the path
    Vec x_terminal;
};

// Core single-path simulation; the batch operations below are built on it.
PathRecord simulate_one_path(const ValidatedModel& model, const Criterion& crit,
                             const PolicyRule& policy, const Vec& x0,
                             double horizon, const PathConfig& cfg, PathRng& rng,
                             const RecordOptions& opts = {});

// Batch simulation keeping full records; memory scales with
// num_paths x steps, intended for filter studies and diagnostics.
std::vector<PathRecord> simulate_physical(const ValidatedModel& model,
                                          const Criterion& crit,
                                          const PolicyRule& policy, const Vec& x0,
                                          double horizon, const PathConfig& cfg,
                                          const RecordOptions& opts = {});

struct ValueEstimate {
    double j_value = 0.0;  // -(1/theta) ln(raw_mean)
    double j_std_error = 0.0;
    double raw_mean = 0.0;  // mean of exp(-theta lnV(T)); comparable to phi_tilde
    double raw_std_error = 0.0;
    long num_paths = 0;
};

// Direct estimator of the criterion under the physical measure.
ValueEstimate estimate_value_direct(const ValidatedModel& model,
                                    const Criterion& crit,
                                    const PolicyRule& policy, const Vec& x0,
                                    double horizon, const PathConfig& cfg);

// Estimator of phi_tilde under the changed measure: the factor diffuses with
// the effective drift, no jumps, and the payoff is exp(theta int g - theta ln v).
PathStats simulate_changed_measure(const ValidatedModel& model,
                                   const Criterion& crit,
                                   const PolicyRule& policy, const Vec& x0,
                                   double horizon, const PathConfig& cfg);

// Mean of the change-of-measure density at the horizon; 1 for admissible
// policies.
PathStats martingale_check(const ValidatedModel& model, const Criterion& crit,
                           const PolicyRule& policy, const Vec& x0,
                           double horizon, const PathConfig& cfg);

// Generic parabolic problem for the stopped-diffusion representation:
//   u_t + 1/2 tr(LL' D2 u) + f'Du + theta g u + ell = 0 on the box,
//   u = psi on the lateral boundary and at the horizon.
struct FkProblem {
    std::function<Vec(double, const Vec&)> drift;
    std::function<Mat(double)> diffusion;  // n x k loading
    std::function<double(double, const Vec&)> zero_order;  // g
    std::function<double(double, const Vec&)> source;      // ell
    std::function<double(double, const Vec&)> boundary;    // psi
    Vec box_center;
    Vec box_half_width;
    double theta = 1.0;
};

// Monte Carlo evaluation of the representation above at (t0, x0): paths are
// stopped at the first box exit, with the crossing time found by linear
// interpolation inside the step.
PathStats feynman_kac_estimate(const FkProblem& problem, double t0,
                               const Vec& x0, double horizon,
                               const PathConfig& cfg);

// Deterministic mean / standard error over per-path values (pairwise sums,
// independent of thread count).
PathStats stats_from_values(const std::vector<double>& values,
                            const std::string& name);

}  // namespace riskjump
