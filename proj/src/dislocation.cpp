#include "crtfrag/dislocation.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "crtfrag/error.hpp"
#include "crtfrag/stats.hpp"

namespace crtfrag {

namespace {

void require_skeleton(const BranchingMechanism& m) {
    if (!(m.beta() > 0.0)) fail(Errc::NoSkeletonPart, "beta = 0: there is no skeleton part");
}

double node_integral(const LevyMeasure& levy, double u) {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ZeroMeasure>) {
                fail(Errc::NoNodePart, "pi = 0: there is no node part");
            } else if constexpr (std::is_same_v<T, StablePower>) {
                fail(Errc::DivergentIntegral, "int v e^{-uv} pi(dv) diverges for a stable measure");
            } else if constexpr (std::is_same_v<T, FiniteAtoms>) {
                NeumaierSum s;
                for (const auto& a : p.atoms) s.add(a.rate * a.size * std::exp(-u * a.size));
                return s.value();
            } else {
                double g = p.gamma + u;
                return p.c / (g * g);
            }
        },
        levy);
}

} // namespace

void LaplaceQuery::validate() const {
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !std::isfinite(lambda1) || !std::isfinite(lambda2))
        fail(Errc::InvalidArgument, "lambda1 and lambda2 must be > 0");
}

void DislocationEstimate::finish() { z = stderr_ > 0.0 ? (value - oracle) / stderr_ : 0.0; }

SkeletonClosed oracle_ske_closed(const BranchingMechanism& m, const LaplaceQuery& q) {
    require_skeleton(m);
    q.validate();
    auto r = [&](double l) { return psi_prime(m, psi_inverse(m, l)); };
    const double two_b = 2.0 * m.beta();
    return {two_b / (r(q.lambda1) * r(q.lambda2)), two_b / (r(q.lambda2) * r(q.lambda1 + q.lambda2))};
}

double spine_rate(const BranchingMechanism& m, double lambda) {
    const double u = psi_inverse(m, lambda);
    double jumps = 0.0;
    if (m.has_jumps()) jumps = levy_integral(m, LevyIntegral::l_times_one_minus_exp(u), IntegralMethod::Quadrature);
    return m.alpha() + 2.0 * m.beta() * u + jumps;
}

double oracle_ske_quadrature(const BranchingMechanism& m, const LaplaceQuery& q) {
    require_skeleton(m);
    q.validate();
    const double p = spine_rate(m, q.lambda1 + q.lambda2);
    const double r = spine_rate(m, q.lambda2);
    const double k = p - r; // >= 0 since the spine rate increases
    // int_0^b e^{-(b-a)p - a r} da = e^{-b r} (1 - e^{-b k}) / k
    auto inner = [&](double b) {
        double f = std::abs(k * b) < 1e-300 ? b : -std::expm1(-k * b) / k;
        return std::exp(-b * r) * f;
    };
    boost::math::quadrature::exp_sinh<double> integrator;
    double err = 0.0;
    double value = integrator.integrate(inner, 0.0, std::numeric_limits<double>::infinity(), 1e-13, &err);
    return 2.0 * m.beta() * value;
}

double oracle_nu_ske_laplace(const BranchingMechanism& m, const LaplaceQuery& q) {
    require_skeleton(m);
    if (!(q.lambda1 >= 0.0) || !(q.lambda2 >= 0.0)) fail(Errc::InvalidArgument, "lambda must be >= 0");
    return 2.0 * m.beta() * psi_inverse(m, q.lambda1) * psi_inverse(m, q.lambda2);
}

double oracle_nod_moment(const BranchingMechanism& m, double lambda) {
    if (!(lambda > 0.0)) fail(Errc::InvalidArgument, "lambda must be > 0");
    auto d = psi_prime_of_inverse(m, lambda);
    return d.inverse_derivative * node_integral(m.levy(), psi_inverse(m, lambda));
}

double brownian_reference(const LaplaceQuery& q) {
    if (!(q.lambda1 >= 0.0) || !(q.lambda2 > 0.0)) fail(Errc::InvalidArgument, "need lambda1 >= 0, lambda2 > 0");
    return 0.25 / std::sqrt(q.lambda2 * (q.lambda1 + q.lambda2));
}

double nod_replicate(const BranchingMechanism& m, double lambda, RngStream& rng, const NodMcOptions& opts) {
    const double w = m.total_jump_rate();
    double v = 0.0;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, FiniteAtoms>) {
                double u = rng.uniform() * w, acc = 0.0;
                v = p.atoms.back().size;
                for (const auto& a : p.atoms) {
                    acc += a.rate;
                    if (u < acc) {
                        v = a.size;
                        break;
                    }
                }
            } else if constexpr (std::is_same_v<T, ExpDensity>) {
                v = rng.exponential(p.gamma);
            }
        },
        m.levy());
    FirstPassageOptions fo;
    fo.sampler = opts.sampler;
    fo.time_cap = opts.time_cap > 0.0 ? opts.time_cap : 40.0 / lambda;
    fo.bridge_correction = true;
    double s = 0.0;
    if (std::isinf(opts.max_jump)) {
        auto fp = first_passage_time(m, v, opts.dt, rng, fo);
        if (fp.exhausted) return 0.0;
        s = fp.time;
    } else {
        fo.include_descents = true;
        try {
            auto sp = first_passage_subordinator(m, v, opts.dt, rng, fo);
            for (double j : sp.jumps)
                if (j > opts.max_jump) return 0.0;
            s = sp.s_at_v_max;
        } catch (const Error& e) {
            if (e.code() != Errc::HorizonExhausted) throw;
            return 0.0;
        }
    }
    return s * std::exp(-lambda * s);
}

DislocationEstimate estimate_nod_mc(const BranchingMechanism& m, double lambda, std::size_t n, RngStream& rng,
                                    const NodMcOptions& opts) {
    if (!m.has_jumps()) fail(Errc::NoNodePart, "pi = 0: there is no node part");
    if (!m.finite_activity()) fail(Errc::UnsupportedForMonteCarlo, "node Monte Carlo needs finite jump activity");
    if (!(lambda > 0.0)) fail(Errc::InvalidArgument, "lambda must be > 0");
    if (n == 0) fail(Errc::InvalidArgument, "n must be > 0");
    const double w = m.total_jump_rate();
    MeanAccumulator acc;
    for (std::size_t i = 0; i < n; ++i) {
        RngStream r = rng.split(i);
        acc.add(w * nod_replicate(m, lambda, r, opts));
    }
    DislocationEstimate est{acc.mean(), acc.stderr_of_mean(), n, oracle_nod_moment(m, lambda), 0.0};
    est.finish();
    return est;
}

double ske_functional(const HeightSeries& h, double sigma, double beta, const LaplaceQuery& q, double da,
                      double offset) {
    if (h.n() == 0 || !(h.max() > 0.0)) return 0.0;
    if (!(da > 0.0)) da = h.max() / 256.0;
    NeumaierSum s;
    for_each_component(h, da, offset, [&](double, const Interval& iv) {
        const double e = iv.length();
        s.add(e * std::exp(-q.lambda1 * e - q.lambda2 * std::max(0.0, sigma - e)));
    });
    return 2.0 * beta * da * s.value();
}

double ske_sweep_block(const BranchingMechanism& m, const LaplaceQuery& q, RngStream& rng,
                       const SkeSweepOptions& opts, std::size_t* excursions) {
    HarvestOptions ho;
    ho.sampler = opts.sampler;
    ho.length_cap = opts.length_cap > 0.0 ? opts.length_cap : 40.0 / std::min(q.lambda1, q.lambda2);
    NeumaierSum s;
    std::size_t count = 0;
    harvest_excursions(
        m, opts.dt, opts.budget, rng,
        [&](const ExcursionRecord& e) {
            ++count;
            if (e.end - e.start < 2) return;
            auto h = height_series(e, m.beta());
            s.add(ske_functional(h, e.sigma, m.beta(), q, opts.da, opts.offset));
        },
        ho);
    if (excursions) *excursions += count;
    return s.value() / opts.budget;
}

DislocationEstimate estimate_ske_sweep(const BranchingMechanism& m, const LaplaceQuery& q, RngStream& rng,
                                       const SkeSweepOptions& opts) {
    require_skeleton(m);
    q.validate();
    if (opts.blocks < 2) fail(Errc::InvalidArgument, "need at least two blocks");
    MeanAccumulator acc;
    for (std::size_t b = 0; b < opts.blocks; ++b) {
        RngStream r = rng.split(b);
        acc.add(ske_sweep_block(m, q, r, opts));
    }
    DislocationEstimate est{acc.mean(), acc.stderr_of_mean(), opts.blocks, oracle_ske_closed(m, q).lemma_form, 0.0};
    est.finish();
    return est;
}

} // namespace crtfrag
