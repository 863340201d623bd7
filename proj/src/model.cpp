#include "riskjump/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace riskjump {

Mat ValidatedModel::lambda(double t) const {
    if (lambda_times.empty()) return Lambda;
    if (t <= lambda_times.front()) return lambda_table.front();
    if (t >= lambda_times.back()) return lambda_table.back();
    // piecewise linear between tabulated instants
    std::size_t hi = 1;
    while (hi + 1 < lambda_times.size() && lambda_times[hi] < t) ++hi;
    const double t0 = lambda_times[hi - 1];
    const double t1 = lambda_times[hi];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * lambda_table[hi - 1] + w * lambda_table[hi];
}

namespace {

void check_dims(const MarketModel& r, std::vector<ValidationIssue>& issues) {
    auto bad = [&](const std::string& what) {
        issues.push_back({"DimensionMismatch", what});
    };
    if (r.n < 1) bad("factor count n must be >= 1");
    if (r.m < 1) bad("asset count m must be >= 1");
    if (r.M != r.n + r.m) {
        std::ostringstream os;
        os << "noise dimension M = " << r.M << " but n + m = " << r.n + r.m;
        bad(os.str());
    }
    if (r.b.size() != r.n) bad("b must have length n");
    if (r.B.rows() != r.n || r.B.cols() != r.n) bad("B must be n x n");
    if (r.Lambda.rows() != r.n || r.Lambda.cols() != r.M) bad("Lambda must be n x M");
    if (r.A0.size() != r.n) bad("A0 must have length n");
    if (r.a.size() != r.m) bad("a must have length m");
    if (r.A.rows() != r.m || r.A.cols() != r.n) bad("A must be m x n");
    if (r.Sigma.rows() != r.m || r.Sigma.cols() != r.M) bad("Sigma must be m x M");
    for (std::size_t j = 0; j < r.jumps.atoms.size(); ++j) {
        if (r.jumps.atoms[j].mark.size() != r.m) {
            std::ostringstream os;
            os << "atom " << j << ": mark must have length m";
            bad(os.str());
        }
    }
}

}  // namespace

ValidationResult validate_model(const MarketModel& raw) {
    ValidationResult result;
    auto& issues = result.issues;

    check_dims(raw, issues);
    if (!issues.empty()) return result;  // later checks assume shapes line up

    // Sigma Sigma' must be positive definite; tolerance scales with trace.
    const Mat ss = raw.Sigma * raw.Sigma.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(ss);
    const double min_eig = es.eigenvalues().minCoeff();
    const double pd_floor = 1e-12 * ss.trace() / static_cast<double>(raw.m);
    if (!(min_eig > pd_floor)) {
        std::ostringstream os;
        os << "smallest eigenvalue of Sigma*Sigma' is " << min_eig
           << " (floor " << pd_floor << ")";
        issues.push_back({"SigmaNotPositiveDefinite", os.str()});
    }

    for (std::size_t j = 0; j < raw.jumps.atoms.size(); ++j) {
        const JumpAtom& atom = raw.jumps.atoms[j];
        if (!(atom.intensity > 0.0)) {
            std::ostringstream os;
            os << "atom " << j << ": intensity must be > 0";
            issues.push_back({"NonPositiveIntensity", os.str()});
        }
        for (int i = 0; i < atom.mark.size(); ++i) {
            if (atom.mark[i] < -1.0) {
                std::ostringstream os;
                os << "atom " << j << ", asset " << i << ": mark " << atom.mark[i]
                   << " below -1";
                issues.push_back({"MarkBelowMinusOne", os.str()});
            }
        }
    }

    // Every asset needs both an upward and a downward jump; this is what
    // keeps the feasible set bounded. Skipped entirely in pure-diffusion
    // mode (empty atom list).
    if (!raw.jumps.empty()) {
        for (int i = 0; i < raw.m; ++i) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (const JumpAtom& atom : raw.jumps.atoms) {
                lo = std::min(lo, atom.mark[i]);
                hi = std::max(hi, atom.mark[i]);
            }
            if (!(lo < 0.0 && hi > 0.0)) {
                std::ostringstream os;
                os << "asset " << i << ": jump marks span [" << lo << ", " << hi
                   << "], need a negative and a positive mark";
                issues.push_back({"JumpSignCoverageViolated", os.str()});
            }
        }
    }

    if (!issues.empty()) return result;

    ValidatedModel vm;
    vm.n = raw.n;
    vm.m = raw.m;
    vm.M = raw.M;
    vm.b = raw.b;
    vm.B = raw.B;
    vm.Lambda = raw.Lambda;
    vm.a0 = raw.a0;
    vm.A0 = raw.A0;
    vm.a = raw.a;
    vm.A = raw.A;
    vm.Sigma = raw.Sigma;
    vm.jumps = raw.jumps;

    vm.a_hat = raw.a - raw.a0 * Vec::Ones(raw.m);
    vm.A_hat = raw.A - Vec::Ones(raw.m) * raw.A0.transpose();

    Eigen::JacobiSVD<Mat> svd(vm.A_hat);
    const double sv_max = svd.singularValues().size() > 0
                              ? svd.singularValues()(0)
                              : 0.0;
    const double sv_floor = 1e-10 * sv_max;
    int rank = 0;
    for (int k = 0; k < svd.singularValues().size(); ++k) {
        if (svd.singularValues()(k) > sv_floor && svd.singularValues()(k) > 0.0)
            ++rank;
    }
    vm.rank_A_hat_is_n = (rank == raw.n);

    result.model = std::move(vm);
    return result;
}

ValidatedModel validate_model_or_throw(const MarketModel& raw) {
    ValidationResult res = validate_model(raw);
    if (res.ok()) return *std::move(res.model);
    const ValidationIssue& first = res.issues.front();
    const std::string msg = first.code + ": " + first.message;
    if (first.code == "DimensionMismatch") throw DimensionMismatch(msg);
    if (first.code == "SigmaNotPositiveDefinite") throw SigmaNotPositiveDefinite(msg);
    if (first.code == "JumpSignCoverageViolated") throw JumpSignCoverageViolated(msg);
    if (first.code == "MarkBelowMinusOne") throw MarkBelowMinusOne(msg);
    if (first.code == "NonPositiveIntensity") throw NonPositiveIntensity(msg);
    throw Error(msg);
}

double feasible_margin(const ValidatedModel& model, const Vec& h) {
    if (h.size() != model.m)
        throw DimensionMismatch("feasible_margin: h must have length m");
    if (model.jumps.empty()) return std::numeric_limits<double>::infinity();
    double margin = std::numeric_limits<double>::infinity();
    for (const JumpAtom& atom : model.jumps.atoms)
        margin = std::min(margin, 1.0 + h.dot(atom.mark));
    return margin;
}

}  // namespace riskjump
