#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crtfrag/mechanism.hpp"

namespace crtfrag {

/// Experiment configuration. The mechanism fields (alpha, beta, levy) sit at
/// the top level next to the run parameters.
struct ExperimentConfig {
    BranchingMechanism mechanism = BranchingMechanism::brownian();
    double dt = 1e-3;
    double da = 0.0;         // <= 0: max(H)/256 per excursion
    double horizon = 10.0;   // local time per block
    std::size_t blocks = 100;
    double epsilon = -1.0;   // jump truncation, < 0 automatic
    bool small_jump_gaussian = false;
    double length_cap = 0.0; // excursion cap, <= 0 automatic
    double theta_max = 1.0;
    std::vector<double> theta_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> lambdas{1.0, 2.0};
    std::vector<std::pair<double, double>> lambda_pairs{{2.0, 2.0}, {1.0, 4.0}, {4.0, 1.0}};
    std::vector<double> tail_levels{0.01, 0.1, 1.0};
    double start = 1.0;       // passage level / starting point x
    double min_sigma = 0.0;   // fragmentation property selection
    double min_pruned = 0.2;  // special-Markov selection on sigma^(theta)
    double cut_threshold = 0.1;
    std::size_t n = 10000;
    std::size_t export_fragments = 20;
    double z_max = 3.0;
    std::vector<std::string> estimators; // empty: all applicable
    std::uint64_t seed = 1;
    std::string out = ".";

    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
std::string serialize_config(const ExperimentConfig& c);

struct ResultRow {
    std::vector<double> query;
    double estimate = 0.0;
    double stderr_ = 0.0;
    double oracle = 0.0;
    double z = 0.0;
    std::size_t n = 0;
    double error = 0.0;     // |z| for statistical rows, relative error or count otherwise
    double tolerance = 0.0; // pass iff error <= tolerance (strict < for |z|)
    bool pass = false;
};

struct EstimatorTable {
    std::string name;
    std::vector<std::string> columns; // query column names
    std::vector<ResultRow> rows;
    bool statistical = false;
    bool pass() const;
};

struct SuiteReport {
    std::string suite;
    std::vector<EstimatorTable> tables;
    nlohmann::json notes = nlohmann::json::object();
    /// (excursion id, theta, rank, mass), written only by the fragmentation suite
    std::vector<std::vector<double>> fragments;
    bool pass() const;
    const EstimatorTable* table(const std::string& name) const;
};

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"mechanism-check", "excursions",     "fragmentation",
                                                "dislocation-ske", "dislocation-nod", "special-markov"};
    return names;
}

struct RunOptions {
    unsigned threads = 1;
};

/// Runs one suite. Throws SuiteMismatch (or a mechanism error) when the
/// suite cannot run on the configured mechanism.
SuiteReport run_suite(const ExperimentConfig& config, const std::string& suite, const RunOptions& opts = {});

/// Writes <suite>_<estimator>.csv per table, <suite>_fragments.csv when
/// present, and <suite>.json. Throws Io on failure.
void emit_report(const SuiteReport& report, const ExperimentConfig& config, const std::filesystem::path& dir);

std::string csv_header(const EstimatorTable& t);
std::string csv_row(const ResultRow& r);
/// Parses one data line written by csv_row for a table with `query_columns` query fields.
ResultRow parse_csv_row(const std::string& line, std::size_t query_columns);

/// JSON text with every floating-point number printed as %.17g.
std::string dump_json(const nlohmann::json& j, int indent = 2);

} // namespace crtfrag
