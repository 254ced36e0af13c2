#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "crtfrag/error.hpp"
#include "crtfrag/experiment.hpp"

using namespace crtfrag;

namespace {

enum Exit { Pass = 0, StatisticalFailure = 1, ConfigMismatch = 2, IoError = 3 };

int exit_code(Errc e) {
    switch (e) {
    case Errc::Io:
        return IoError;
    case Errc::InvalidArgument:
    case Errc::InvalidMechanism:
    case Errc::InfiniteVariationViolated:
    case Errc::DivergentIntegral:
    case Errc::DegenerateAtZero:
    case Errc::NoSkeletonPart:
    case Errc::NoNodePart:
    case Errc::UnsupportedForMonteCarlo:
    case Errc::UnknownKey:
    case Errc::InvalidField:
    case Errc::SuiteMismatch:
    case Errc::BeyondSampledHorizon:
        return ConfigMismatch;
    default:
        return StatisticalFailure;
    }
}

unsigned env_threads() {
    if (const char* s = std::getenv("CRTFRAG_THREADS")) {
        char* end = nullptr;
        unsigned long v = std::strtoul(s, &end, 10);
        if (end != s && *end == '\0' && v > 0) return unsigned(v);
        std::fprintf(stderr, "crtfrag: ignoring CRTFRAG_THREADS='%s'\n", s);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void print_summary(const SuiteReport& r) {
    for (const auto& t : r.tables) {
        std::printf("%-28s %s\n", t.name.c_str(), t.pass() ? "pass" : "FAIL");
        for (const auto& row : t.rows) {
            std::string q;
            for (std::size_t i = 0; i < t.columns.size() && i < row.query.size(); ++i)
                q += (i ? " " : "") + t.columns[i] + "=" + std::to_string(row.query[i]);
            if (t.statistical)
                std::printf("  %-30s est %.6g +- %.3g  oracle %.6g  z %+.2f %s\n", q.c_str(), row.estimate, row.stderr_,
                            row.oracle, row.z, row.pass ? "" : "<-");
            else
                std::printf("  %-30s est %.10g  ref %.10g  err %.3g (tol %.3g) %s\n", q.c_str(), row.estimate,
                            row.oracle, row.error, row.tolerance, row.pass ? "" : "<-");
        }
    }
    std::printf("%s: %s\n", r.suite.c_str(), r.pass() ? "PASS" : "FAIL");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pruning and fragmentation of Levy trees: oracle and Monte Carlo suites"};
    std::string suite, config_path, out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    app.add_option("suite", suite, "Suite to run")->required()->check(CLI::IsMember(suite_names()));
    app.add_option("--config", config_path, "JSON configuration file")->required();
    auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
    auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides the config)");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads (fallback: CRTFRAG_THREADS)")
                            ->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : ConfigMismatch;
    }

    std::string text;
    {
        std::ifstream f(config_path, std::ios::binary);
        if (!f) {
            std::fprintf(stderr, "crtfrag: cannot read config '%s'\n", config_path.c_str());
            return IoError;
        }
        std::stringstream ss;
        ss << f.rdbuf();
        text = ss.str();
    }
    try {
        ExperimentConfig cfg = parse_config(text);
        if (*seed_opt) cfg.seed = seed;
        if (*out_opt) cfg.out = out_dir;
        RunOptions ro;
        ro.threads = *threads_opt ? threads : env_threads();
        SuiteReport report = run_suite(cfg, suite, ro);
        emit_report(report, cfg, cfg.out);
        print_summary(report);
        return report.pass() ? Pass : StatisticalFailure;
    } catch (const Error& e) {
        std::fprintf(stderr, "crtfrag: %s\n", e.what());
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "crtfrag: %s\n", e.what());
        return StatisticalFailure;
    }
}
