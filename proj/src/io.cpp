#include "riskjump/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace riskjump {

using nlohmann::json;

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty())
        throw IoError("expected a non-empty array of arrays for a matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Mat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j[r].size() != cols)
            throw IoError("ragged matrix rows in model document");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

namespace {

Vec vec_from_json(const json& j, const char* name) {
    if (!j.is_array()) {
        std::ostringstream os;
        os << "field '" << name << "' must be an array";
        throw IoError(os.str());
    }
    Vec v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

const json& require(const json& j, const char* key) {
    if (!j.contains(key)) {
        std::ostringstream os;
        os << "model document is missing required key '" << key << "'";
        throw IoError(os.str());
    }
    return j.at(key);
}

}  // namespace

ModelFile model_from_json(const json& j) {
    ModelFile mf;
    mf.market.n = require(j, "n").get<int>();
    mf.market.m = require(j, "m").get<int>();
    mf.market.M = mf.market.n + mf.market.m;
    mf.market.b = vec_from_json(require(j, "b"), "b");
    mf.market.B = mat_from_json(require(j, "B"));
    mf.market.Lambda = mat_from_json(require(j, "Lambda"));
    mf.market.a0 = require(j, "a0").get<double>();
    mf.market.A0 = vec_from_json(require(j, "A0"), "A0");
    mf.market.a = vec_from_json(require(j, "a"), "a");
    mf.market.A = mat_from_json(require(j, "A"));
    mf.market.Sigma = mat_from_json(require(j, "Sigma"));

    const json& atoms = require(j, "atoms");
    if (!atoms.is_array()) throw IoError("field 'atoms' must be an array");
    for (const json& ja : atoms) {
        JumpAtom atom;
        atom.mark = vec_from_json(require(ja, "mark"), "mark");
        atom.intensity = require(ja, "intensity").get<double>();
        atom.compensated = require(ja, "compensated").get<bool>();
        mf.market.jumps.atoms.push_back(std::move(atom));
    }

    mf.criterion.theta = require(j, "theta").get<double>();
    mf.criterion.v = require(j, "v").get<double>();
    mf.horizon = require(j, "T").get<double>();

    if (j.contains("Lambda_eff")) {
        const json& le = j.at("Lambda_eff");
        for (const auto& t : require(le, "times")) mf.lambda_times.push_back(t);
        for (const auto& m : require(le, "matrices"))
            mf.lambda_table.push_back(mat_from_json(m));
        if (mf.lambda_times.size() != mf.lambda_table.size())
            throw IoError("Lambda_eff: times and matrices differ in length");
    }
    return mf;
}

json model_to_json(const ModelFile& mf) {
    json j;
    j["n"] = mf.market.n;
    j["m"] = mf.market.m;
    j["b"] = vec_to_json(mf.market.b);
    j["B"] = mat_to_json(mf.market.B);
    j["Lambda"] = mat_to_json(mf.market.Lambda);
    j["a0"] = mf.market.a0;
    j["A0"] = vec_to_json(mf.market.A0);
    j["a"] = vec_to_json(mf.market.a);
    j["A"] = mat_to_json(mf.market.A);
    j["Sigma"] = mat_to_json(mf.market.Sigma);
    json atoms = json::array();
    for (const JumpAtom& atom : mf.market.jumps.atoms) {
        json ja;
        ja["mark"] = vec_to_json(atom.mark);
        ja["intensity"] = atom.intensity;
        ja["compensated"] = atom.compensated;
        atoms.push_back(std::move(ja));
    }
    j["atoms"] = std::move(atoms);
    j["theta"] = mf.criterion.theta;
    j["v"] = mf.criterion.v;
    j["T"] = mf.horizon;
    if (!mf.lambda_times.empty()) {
        json le;
        le["times"] = mf.lambda_times;
        json mats = json::array();
        for (const Mat& m : mf.lambda_table) mats.push_back(mat_to_json(m));
        le["matrices"] = std::move(mats);
        j["Lambda_eff"] = std::move(le);
    }
    return j;
}

ModelFile load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("model file " + path + ": " + e.what());
    }
    return model_from_json(j);
}

void save_model_file(const ModelFile& mf, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model file: " + path);
    out << model_to_json(mf).dump(2) << '\n';
}

ValidatedModel validated_from_file(const ModelFile& mf) {
    ValidatedModel vm = validate_model_or_throw(mf.market);
    vm.lambda_times = mf.lambda_times;
    vm.lambda_table = mf.lambda_table;
    if (!vm.lambda_table.empty()) vm.Lambda = vm.lambda_table.front();
    return vm;
}

json model_export_json(const ValidatedModel& model, const Criterion& crit,
                       double horizon) {
    ModelFile mf;
    mf.market.n = model.n;
    mf.market.m = model.m;
    mf.market.M = model.M;
    mf.market.b = model.b;
    mf.market.B = model.B;
    mf.market.Lambda = model.Lambda;
    mf.market.a0 = model.a0;
    mf.market.A0 = model.A0;
    mf.market.a = model.a;
    mf.market.A = model.A;
    mf.market.Sigma = model.Sigma;
    mf.market.jumps = model.jumps;
    mf.criterion = crit;
    mf.horizon = horizon;
    mf.lambda_times = model.lambda_times;
    mf.lambda_table = model.lambda_table;
    return model_to_json(mf);
}

void save_value_field_csv(const ValueField& field, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write CSV: " + path);
    out << std::setprecision(17);

    const Grid& grid = field.grid;
    const int m = static_cast<int>(field.policy.front().cols());
    out << "t";
    for (int d = 0; d < grid.dim; ++d) out << ",x" << d + 1;
    out << ",phi_tilde,phi";
    for (int c = 0; c < m; ++c) out << ",h" << c + 1;
    out << '\n';

    for (int j = 0; j <= grid.time_steps; ++j) {
        const double t = grid.time_at(j);
        for (int i = 0; i < grid.nodes_total(); ++i) {
            out << t;
            const Vec x = grid.node(i);
            for (int d = 0; d < grid.dim; ++d) out << ',' << x[d];
            out << ',' << field.phi_tilde[j][i] << ',' << field.phi[j][i];
            for (int c = 0; c < m; ++c) out << ',' << field.policy[j](i, c);
            out << '\n';
        }
    }
}

ValueField load_value_field_csv(const std::string& path, double theta) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV: " + path);

    std::string header;
    if (!std::getline(in, header)) throw IoError("empty CSV: " + path);
    int dim = 0;
    int m = 0;
    {
        std::stringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.size() > 1 && col[0] == 'x') ++dim;
            if (col.size() > 1 && col[0] == 'h') ++m;
        }
        if (dim < 1 || dim > 2 || m < 1)
            throw IoError("CSV header does not look like a grid export");
    }

    struct Row {
        double t;
        double x[2];
        double phi_tilde;
        double phi;
        std::vector<double> h;
    };
    std::vector<Row> rows;
    std::set<double> times;
    std::set<double> coords[2];
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        Row r;
        r.h.resize(m);
        auto next = [&]() {
            if (!std::getline(ls, cell, ',')) throw IoError("short CSV row");
            return std::stod(cell);
        };
        r.t = next();
        for (int d = 0; d < dim; ++d) r.x[d] = next();
        r.phi_tilde = next();
        r.phi = next();
        for (int c = 0; c < m; ++c) r.h[c] = next();
        times.insert(r.t);
        for (int d = 0; d < dim; ++d) coords[d].insert(r.x[d]);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw IoError("CSV has no data rows: " + path);

    ValueField field;
    Grid& grid = field.grid;
    grid.dim = dim;
    grid.nodes_per_axis = static_cast<int>(coords[0].size());
    grid.center = Vec(dim);
    grid.half_width = Vec(dim);
    for (int d = 0; d < dim; ++d) {
        if (static_cast<int>(coords[d].size()) != grid.nodes_per_axis)
            throw IoError("CSV grid is not square across axes");
        const double lo = *coords[d].begin();
        const double hi = *coords[d].rbegin();
        grid.center[d] = 0.5 * (lo + hi);
        grid.half_width[d] = 0.5 * (hi - lo);
    }
    grid.t0 = *times.begin();
    grid.T = *times.rbegin();
    grid.time_steps = static_cast<int>(times.size()) - 1;

    const int nodes = grid.nodes_total();
    if (static_cast<int>(rows.size()) != (grid.time_steps + 1) * nodes)
        throw IoError("CSV row count does not match the grid dimensions");

    field.phi_tilde.assign(grid.time_steps + 1, Vec::Zero(nodes));
    field.phi.assign(grid.time_steps + 1, Vec::Zero(nodes));
    field.policy.assign(grid.time_steps + 1, Mat::Zero(nodes, m));

    std::map<double, int> time_index;
    int ti = 0;
    for (double t : times) time_index[t] = ti++;
    std::map<double, int> coord_index[2];
    for (int d = 0; d < dim; ++d) {
        int ci = 0;
        for (double c : coords[d]) coord_index[d][c] = ci++;
    }

    for (const Row& r : rows) {
        const int j = time_index.at(r.t);
        int flat = coord_index[0].at(r.x[0]);
        if (dim == 2)
            flat = grid.flatten(flat, coord_index[1].at(r.x[1]));
        field.phi_tilde[j][flat] = r.phi_tilde;
        field.phi[j][flat] = r.phi;
        for (int c = 0; c < m; ++c) field.policy[j](flat, c) = r.h[c];
    }

    // internal consistency of the two value columns
    for (int j = 0; j <= grid.time_steps; ++j)
        for (int i = 0; i < nodes; ++i) {
            if (!(field.phi_tilde[j][i] > 0.0))
                throw IoError("CSV contains a non-positive phi_tilde value");
            const double expect = -std::log(field.phi_tilde[j][i]) / theta;
            if (std::abs(expect - field.phi[j][i]) >
                1e-9 * (1.0 + std::abs(expect)))
                throw IoError("CSV phi column is inconsistent with phi_tilde");
        }
    return field;
}

json value_field_summary(const ValueField& field) {
    json j;
    j["format_version"] = kFormatVersion;
    j["iterations"] = field.diagnostics.iterations;
    j["converged"] = field.diagnostics.converged;
    j["deltas"] = field.diagnostics.deltas;
    j["monotonicity_excess"] = field.diagnostics.monotonicity_excess;
    j["hamiltonian_residual_sup"] = field.diagnostics.hamiltonian_residual_sup;
    j["upper_bound_excess"] = field.diagnostics.upper_bound_excess;
    j["min_phi_tilde"] = field.diagnostics.min_phi_tilde;
    j["g_check"] = field.diagnostics.g_check;
    json g;
    g["dim"] = field.grid.dim;
    g["center"] = vec_to_json(field.grid.center);
    g["half_width"] = vec_to_json(field.grid.half_width);
    g["nodes_per_axis"] = field.grid.nodes_per_axis;
    g["t0"] = field.grid.t0;
    g["T"] = field.grid.T;
    g["time_steps"] = field.grid.time_steps;
    j["grid"] = std::move(g);
    return j;
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace riskjump
