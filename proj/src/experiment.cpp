#include "crtfrag/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "crtfrag/error.hpp"

namespace crtfrag {

using nlohmann::json;

namespace {

const std::vector<std::string> kConfigKeys{
    "alpha",     "beta",        "levy",         "dt",          "da",          "horizon",     "blocks",
    "epsilon",   "small_jump_gaussian",         "length_cap",  "theta_max",   "theta_grid",  "lambdas",
    "lambda_pairs", "tail_levels", "start",     "min_sigma",   "min_pruned",  "cut_threshold", "n",
    "export_fragments", "z_max", "estimators",  "seed",        "out"};

double number(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number()) fail(Errc::InvalidField, std::string(key) + ": expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) fail(Errc::InvalidField, std::string(key) + ": must be finite");
    return x;
}

std::size_t count(const json& j, const char* key, std::size_t min) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() < min)
        fail(Errc::InvalidField, std::string(key) + ": expected an integer >= " + std::to_string(min));
    return std::size_t(v.get<std::uint64_t>());
}

std::vector<double> numbers(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array()) fail(Errc::InvalidField, std::string(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) fail(Errc::InvalidField, std::string(key) + ": expected an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

void require(bool ok, const char* field, const char* what) {
    if (!ok) fail(Errc::InvalidField, std::string(field) + ": " + what);
}

} // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) fail(Errc::InvalidField, "config: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(kConfigKeys.begin(), kConfigKeys.end(), it.key()) == kConfigKeys.end())
            fail(Errc::UnknownKey, "unknown key: " + it.key());

    ExperimentConfig c;
    json mech = json::object();
    for (const char* k : {"alpha", "beta", "levy"})
        if (j.contains(k)) mech[k] = j.at(k);
    if (!mech.empty()) c.mechanism = mechanism_from_json(mech);

    if (j.contains("dt")) c.dt = number(j, "dt");
    require(c.dt > 0.0, "dt", "must be > 0");
    if (j.contains("da")) c.da = number(j, "da");
    require(c.da >= 0.0, "da", "must be >= 0 (0 selects max(H)/256)");
    if (j.contains("horizon")) c.horizon = number(j, "horizon");
    require(c.horizon > 0.0, "horizon", "must be > 0");
    if (j.contains("blocks")) c.blocks = count(j, "blocks", 2);
    if (j.contains("epsilon")) c.epsilon = number(j, "epsilon");
    require(c.epsilon < 0.0 || c.epsilon > 0.0, "epsilon", "must be > 0 (or negative for automatic)");
    if (j.contains("small_jump_gaussian")) {
        require(j.at("small_jump_gaussian").is_boolean(), "small_jump_gaussian", "expected a boolean");
        c.small_jump_gaussian = j.at("small_jump_gaussian").get<bool>();
    }
    if (j.contains("length_cap")) c.length_cap = number(j, "length_cap");
    require(c.length_cap >= 0.0, "length_cap", "must be >= 0 (0 selects automatic)");
    if (j.contains("theta_max")) c.theta_max = number(j, "theta_max");
    require(c.theta_max >= 0.0, "theta_max", "must be >= 0");
    if (j.contains("theta_grid")) c.theta_grid = numbers(j, "theta_grid");
    for (std::size_t i = 0; i < c.theta_grid.size(); ++i) {
        require(c.theta_grid[i] >= 0.0 && c.theta_grid[i] <= c.theta_max, "theta_grid", "must lie in [0, theta_max]");
        require(i == 0 || c.theta_grid[i] > c.theta_grid[i - 1], "theta_grid", "must be increasing");
    }
    if (j.contains("lambdas")) c.lambdas = numbers(j, "lambdas");
    for (double l : c.lambdas) require(l > 0.0, "lambdas", "must be > 0");
    if (j.contains("lambda_pairs")) {
        const auto& v = j.at("lambda_pairs");
        require(v.is_array(), "lambda_pairs", "expected an array of [l1, l2] pairs");
        c.lambda_pairs.clear();
        for (const auto& p : v) {
            require(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number(), "lambda_pairs",
                    "expected an array of [l1, l2] pairs");
            c.lambda_pairs.emplace_back(p[0].get<double>(), p[1].get<double>());
            require(p[0].get<double>() > 0.0 && p[1].get<double>() > 0.0, "lambda_pairs", "must be > 0");
        }
    }
    if (j.contains("tail_levels")) c.tail_levels = numbers(j, "tail_levels");
    for (double l : c.tail_levels) require(l > 0.0, "tail_levels", "must be > 0");
    if (j.contains("start")) c.start = number(j, "start");
    require(c.start > 0.0, "start", "must be > 0");
    if (j.contains("min_sigma")) c.min_sigma = number(j, "min_sigma");
    require(c.min_sigma >= 0.0, "min_sigma", "must be >= 0");
    if (j.contains("min_pruned")) c.min_pruned = number(j, "min_pruned");
    require(c.min_pruned >= 0.0, "min_pruned", "must be >= 0");
    if (j.contains("cut_threshold")) c.cut_threshold = number(j, "cut_threshold");
    require(c.cut_threshold > 0.0, "cut_threshold", "must be > 0");
    if (j.contains("n")) c.n = count(j, "n", 1);
    if (j.contains("export_fragments")) c.export_fragments = count(j, "export_fragments", 0);
    if (j.contains("z_max")) c.z_max = number(j, "z_max");
    require(c.z_max > 0.0, "z_max", "must be > 0");
    if (j.contains("estimators")) {
        const auto& v = j.at("estimators");
        require(v.is_array(), "estimators", "expected an array of names");
        for (const auto& s : v) {
            require(s.is_string(), "estimators", "expected an array of names");
            c.estimators.push_back(s.get<std::string>());
        }
    }
    if (j.contains("seed")) {
        require(j.at("seed").is_number_unsigned(), "seed", "expected an unsigned 64-bit integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("out")) {
        require(j.at("out").is_string(), "out", "expected a path string");
        c.out = j.at("out").get<std::string>();
    }
    return c;
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(Errc::InvalidField, std::string("config: not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

json to_json(const ExperimentConfig& c) {
    json j = to_json(c.mechanism);
    json pairs = json::array();
    for (const auto& [a, b] : c.lambda_pairs) pairs.push_back({a, b});
    j["dt"] = c.dt;
    j["da"] = c.da;
    j["horizon"] = c.horizon;
    j["blocks"] = c.blocks;
    j["epsilon"] = c.epsilon;
    j["small_jump_gaussian"] = c.small_jump_gaussian;
    j["length_cap"] = c.length_cap;
    j["theta_max"] = c.theta_max;
    j["theta_grid"] = c.theta_grid;
    j["lambdas"] = c.lambdas;
    j["lambda_pairs"] = pairs;
    j["tail_levels"] = c.tail_levels;
    j["start"] = c.start;
    j["min_sigma"] = c.min_sigma;
    j["min_pruned"] = c.min_pruned;
    j["cut_threshold"] = c.cut_threshold;
    j["n"] = c.n;
    j["export_fragments"] = c.export_fragments;
    j["z_max"] = c.z_max;
    j["estimators"] = c.estimators;
    j["seed"] = c.seed;
    j["out"] = c.out;
    return j;
}

std::string serialize_config(const ExperimentConfig& c) { return dump_json(to_json(c)); }

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

bool EstimatorTable::pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.pass; });
}

bool SuiteReport::pass() const {
    return std::all_of(tables.begin(), tables.end(), [](const EstimatorTable& t) { return t.pass(); });
}

const EstimatorTable* SuiteReport::table(const std::string& name) const {
    for (const auto& t : tables)
        if (t.name == name) return &t;
    return nullptr;
}

namespace {

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void dump(const json& j, std::string& out, int indent, int depth) {
    auto newline = [&](int d) {
        if (indent < 0) return;
        out += '\n';
        out.append(std::size_t(indent * d), ' ');
    };
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += '{';
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) out += ',';
            first = false;
            newline(depth + 1);
            out += json(it.key()).dump();
            out += indent < 0 ? ":" : ": ";
            dump(it.value(), out, indent, depth + 1);
        }
        newline(depth);
        out += '}';
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += '[';
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) out += ',';
            newline(depth + 1);
            dump(j[i], out, indent, depth + 1);
        }
        newline(depth);
        out += ']';
        return;
    }
    case json::value_t::number_float: {
        double x = j.get<double>();
        out += std::isfinite(x) ? num(x) : "null";
        return;
    }
    default:
        out += j.dump();
    }
}

json row_json(const EstimatorTable& t, const ResultRow& r) {
    json q = json::object();
    for (std::size_t i = 0; i < t.columns.size() && i < r.query.size(); ++i) q[t.columns[i]] = r.query[i];
    return json{{"query", q},     {"estimate", r.estimate}, {"stderr", r.stderr_},     {"oracle", r.oracle},
                {"z", r.z},       {"n", r.n},               {"error", r.error},        {"tolerance", r.tolerance},
                {"pass", r.pass}};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::Io, "cannot open " + p.string() + " for writing");
    f << text;
    f.close();
    if (!f) fail(Errc::Io, "write failed: " + p.string());
}

} // namespace

std::string dump_json(const json& j, int indent) {
    std::string out;
    dump(j, out, indent, 0);
    return out;
}

std::string csv_header(const EstimatorTable& t) {
    std::string h;
    for (const auto& c : t.columns) h += c + ",";
    return h + "estimate,stderr,oracle,z,n,error,tolerance,pass";
}

std::string csv_row(const ResultRow& r) {
    std::string s;
    for (double q : r.query) s += num(q) + ",";
    s += num(r.estimate) + "," + num(r.stderr_) + "," + num(r.oracle) + "," + num(r.z) + "," + std::to_string(r.n) +
         "," + num(r.error) + "," + num(r.tolerance) + "," + (r.pass ? "1" : "0");
    return s;
}

ResultRow parse_csv_row(const std::string& line, std::size_t query_columns) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != query_columns + 8) fail(Errc::InvalidArgument, "csv row: wrong number of fields");
    ResultRow r;
    std::size_t i = 0;
    try {
        for (; i < query_columns; ++i) r.query.push_back(std::stod(f[i]));
        r.estimate = std::stod(f[i++]);
        r.stderr_ = std::stod(f[i++]);
        r.oracle = std::stod(f[i++]);
        r.z = std::stod(f[i++]);
        r.n = std::size_t(std::stoull(f[i++]));
        r.error = std::stod(f[i++]);
        r.tolerance = std::stod(f[i++]);
    } catch (const std::exception&) {
        fail(Errc::InvalidArgument, "csv row: bad number in field " + std::to_string(i));
    }
    r.pass = f[i] == "1";
    return r;
}

void emit_report(const SuiteReport& report, const ExperimentConfig& config, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) fail(Errc::Io, "cannot create output directory " + dir.string());

    json tables = json::array();
    for (const auto& t : report.tables) {
        std::string csv = csv_header(t) + "\n";
        json rows = json::array();
        for (const auto& r : t.rows) {
            csv += csv_row(r) + "\n";
            rows.push_back(row_json(t, r));
        }
        write_file(dir / (report.suite + "_" + t.name + ".csv"), csv);
        tables.push_back({{"name", t.name}, {"pass", t.pass()}, {"rows", rows}});
    }
    if (!report.fragments.empty()) {
        std::string csv = "excursion,theta,rank,mass\n";
        for (const auto& f : report.fragments)
            csv += std::to_string(std::uint64_t(f[0])) + "," + num(f[1]) + "," + std::to_string(std::uint64_t(f[2])) +
                   "," + num(f[3]) + "\n";
        write_file(dir / (report.suite + "_fragments.csv"), csv);
    }
    json cfg = to_json(config);
    cfg.erase("out"); // reports in different directories stay byte-identical
    json summary{{"suite", report.suite},
                 {"pass", report.pass()},
                 {"seed", config.seed},
                 {"mechanism", describe(config.mechanism)},
                 {"config", cfg},
                 {"estimators", tables},
                 {"notes", report.notes}};
    write_file(dir / (report.suite + ".json"), dump_json(summary) + "\n");
}

} // namespace crtfrag
