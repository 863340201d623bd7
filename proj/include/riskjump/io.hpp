#pragma once

#include <string>

#include <json.hpp>

#include "riskjump/criterion.hpp"
#include "riskjump/hjb.hpp"
#include "riskjump/model.hpp"

namespace riskjump {

inline constexpr int kFormatVersion = 1;

// A model document bundles the market coefficients with the criterion
// parameters and the horizon. Top-level keys:
//   n, m, b, B, Lambda, a0, A0, a, A, Sigma,
//   atoms: [{mark, intensity, compensated}], theta, v, T
// Matrices are row-major arrays of arrays. A reduced model additionally
// carries Lambda_eff: {times, matrices}.
struct ModelFile {
    MarketModel market;
    Criterion criterion;
    double horizon = 1.0;
    // tabulated loading, present only for reduced models
    std::vector<double> lambda_times;
    std::vector<Mat> lambda_table;
};

ModelFile model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ModelFile& mf);
ModelFile load_model_file(const std::string& path);
void save_model_file(const ModelFile& mf, const std::string& path);

// Applies the validated fields plus any tabulated loading from the file.
ValidatedModel validated_from_file(const ModelFile& mf);

nlohmann::json model_export_json(const ValidatedModel& model,
                                 const Criterion& crit, double horizon);

// Grid results as CSV, one row per (time, node):
//   t, x1[, x2], phi_tilde, phi, h1[, h2, ...]
// Row count is (time_steps + 1) * nodes_total.
void save_value_field_csv(const ValueField& field, const std::string& path);
ValueField load_value_field_csv(const std::string& path, double theta);

nlohmann::json value_field_summary(const ValueField& field);

// Small helpers shared by the CLI.
nlohmann::json mat_to_json(const Mat& m);
Mat mat_from_json(const nlohmann::json& j);
std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace riskjump
