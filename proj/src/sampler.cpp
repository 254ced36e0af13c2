#include "crtfrag/sampler.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "crtfrag/error.hpp"

namespace crtfrag {

namespace {

// int_eps^inf f(l) dl for a smooth decaying f
template <class F>
double integrate_above(F f, double eps) {
    boost::math::quadrature::tanh_sinh<double> ts;
    boost::math::quadrature::exp_sinh<double> es;
    double near = eps < 1.0 ? ts.integrate(f, eps, 1.0, 1e-10) : 0.0;
    double from = std::max(eps, 1.0);
    return near + es.integrate([&](double x) { return f(from + x); }, 1e-10);
}

} // namespace

LevyStepper::LevyStepper(const BranchingMechanism& m, double dt, const SamplerOptions& opts) : m_(m), dt_(dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(Errc::InvalidArgument, "dt must be > 0");
    double compensation = 0.0, small_var = 0.0;
    if (const auto* s = std::get_if<StablePower>(&m.levy())) {
        eps_ = opts.epsilon > 0.0 ? opts.epsilon : 1e-3;
        const double a = s->a, c = s->c, d = s->damping;
        rate_ = c * std::pow(eps_, -a) / a;
        if (d == 0.0) {
            compensation = c * std::pow(eps_, 1.0 - a) / (a - 1.0);
            small_var = c * std::pow(eps_, 2.0 - a) / (2.0 - a);
        } else {
            compensation = integrate_above([&](double l) { return c * std::pow(l, -a) * std::exp(-d * l); }, eps_);
            boost::math::quadrature::tanh_sinh<double> ts;
            small_var = ts.integrate([&](double l) { return l > 0.0 ? c * std::pow(l, 1.0 - a) * std::exp(-d * l) : 0.0; },
                                     0.0, eps_, 1e-10);
        }
    } else if (const auto* f = std::get_if<FiniteAtoms>(&m.levy())) {
        double acc = 0.0;
        for (const auto& at : f->atoms) {
            acc += at.rate;
            cumulative_.push_back(acc);
        }
        rate_ = acc;
        compensation = levy_integral(m, LevyIntegral::first_moment());
    } else if (const auto* e = std::get_if<ExpDensity>(&m.levy())) {
        rate_ = e->c / e->gamma;
        compensation = levy_integral(m, LevyIntegral::first_moment());
    }
    mean_ = (-m.alpha() - compensation) * dt;
    double var = 2.0 * m.beta() + (opts.small_jump_gaussian ? small_var : 0.0);
    sd_ = std::sqrt(var * dt);
}

double LevyStepper::draw_size(RngStream& rng) const {
    switch (m_.levy().index()) {
    case 1: {
        const auto& s = std::get<StablePower>(m_.levy());
        double l = eps_ * std::pow(rng.uniform(), -1.0 / s.a);
        if (s.damping > 0.0 && rng.uniform() > std::exp(-s.damping * l)) return 0.0;
        return l;
    }
    case 2: {
        const auto& f = std::get<FiniteAtoms>(m_.levy());
        double u = rng.uniform() * rate_;
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        std::size_t i = std::min<std::size_t>(it - cumulative_.begin(), f.atoms.size() - 1);
        return f.atoms[i].size;
    }
    case 3: return rng.exponential(std::get<ExpDensity>(m_.levy()).gamma);
    default: return 0.0;
    }
}

double LevyStepper::step(RngStream& rng, std::vector<double>& jumps) {
    if (rate_ > 0.0) {
        if (clock_ < 0.0) clock_ = rng.exponential(rate_);
        double left = dt_;
        while (clock_ <= left) {
            left -= clock_;
            double l = draw_size(rng);
            if (l > 0.0) jumps.push_back(l);
            clock_ = rng.exponential(rate_);
        }
        clock_ -= left;
    }
    return mean_ + (sd_ > 0.0 ? sd_ * rng.normal() : 0.0);
}

PathGrid sample_path(const BranchingMechanism& m, double dt, double horizon, RngStream& rng,
                     const SamplerOptions& opts) {
    if (!(horizon >= dt)) fail(Errc::InvalidArgument, "horizon must be >= dt");
    LevyStepper stepper(m, dt, opts);
    PathGrid p;
    p.dt = dt;
    p.n = std::size_t(std::llround(horizon / dt));
    p.epsilon = stepper.epsilon();
    p.values.resize(p.n + 1);
    p.infimum.resize(p.n + 1);
    p.values[0] = p.infimum[0] = 0.0;
    std::vector<double> sizes;
    for (std::size_t k = 0; k < p.n; ++k) {
        sizes.clear();
        double g = stepper.step(rng, sizes);
        double x = p.values[k];
        for (double s : sizes) {
            p.jumps.push_back({k, s});
            x += s;
        }
        x += g;
        p.values[k + 1] = x;
        p.infimum[k + 1] = std::min(p.infimum[k], x);
    }
    return p;
}

ExcursionList extract_excursions(const PathGrid& path, bool include_descents) {
    ExcursionList out;
    std::size_t prev = 0, jp = 0;
    for (std::size_t k = 1; k <= path.n; ++k) {
        if (path.values[k] != path.infimum[k]) continue;
        const bool descent = k == prev + 1;
        if (descent) out.descent_time += path.dt;
        if (descent && !include_descents) {
            while (jp < path.jumps.size() && path.jumps[jp].index < k) ++jp;
            prev = k;
            continue;
        }
        ExcursionRecord e;
        e.descent = descent;
        e.start = prev;
        e.end = k;
        e.dt = path.dt;
        e.sigma = double(k - prev) * path.dt;
        const double base = path.infimum[prev];
        e.local_time = -base;
        e.values.reserve(k - prev + 1);
        for (std::size_t i = prev; i <= k; ++i) e.values.push_back(path.values[i] - base);
        e.values.front() = 0.0;
        e.values.back() = 0.0;
        while (jp < path.jumps.size() && path.jumps[jp].index < k) {
            e.jumps.push_back({path.jumps[jp].index - prev, path.jumps[jp].size});
            ++jp;
        }
        out.excursions.push_back(std::move(e));
        prev = k;
    }
    out.local_time = -path.infimum[path.n];
    return out;
}

namespace {

// Probability that a Brownian bridge from x0 to x1 (both above `level`) with
// variance var dips below it.
double bridge_cross(double x0, double x1, double level, double var) {
    if (var <= 0.0) return 0.0;
    double d0 = x0 - level, d1 = x1 - level;
    if (d0 <= 0.0 || d1 <= 0.0) return 1.0;
    return std::exp(-2.0 * d0 * d1 / var);
}

} // namespace

HarvestSummary harvest_excursions(const BranchingMechanism& m, double dt, double local_time_budget, RngStream& rng,
                                  const ExcursionCallback& on_excursion, const HarvestOptions& opts) {
    HarvestSummary sum;
    if (!(local_time_budget > 0.0)) return sum;
    LevyStepper stepper(m, dt, opts.sampler);
    const double var = stepper.gaussian_sd() * stepper.gaussian_sd();
    const double level = -local_time_budget;
    const auto cap_steps = std::isfinite(opts.length_cap)
                               ? std::max<std::size_t>(1, std::size_t(std::ceil(opts.length_cap / dt)))
                               : std::numeric_limits<std::size_t>::max();

    double x = 0.0, inf = 0.0;
    std::size_t k = 0, start = 0;
    ExcursionRecord cur;
    cur.dt = dt;
    auto reset = [&](std::size_t at) {
        start = at;
        cur.values.clear();
        cur.jumps.clear();
        if (opts.keep_paths) cur.values.push_back(0.0);
    };
    auto emit = [&](std::size_t end, double sigma, bool censored) {
        const bool descent = end == start + 1 && !censored;
        if (descent) sum.descent_time += sigma;
        if (descent && !opts.include_descents) return;
        cur.descent = descent;
        cur.start = start;
        cur.end = end;
        cur.sigma = sigma;
        cur.local_time = -inf;
        cur.censored = censored;
        ++sum.excursions;
        if (censored) ++sum.censored;
        on_excursion(cur);
    };
    reset(0);
    std::vector<double> sizes;
    for (;;) {
        sizes.clear();
        double g = stepper.step(rng, sizes);
        double x0 = x;
        for (double s : sizes) {
            if (opts.keep_paths) cur.jumps.push_back({k - start, s});
            x0 += s;
        }
        double x1 = x0 + g;
        if (opts.bridge_stop && x1 > level && rng.uniform() < bridge_cross(x0, x1, level, var)) {
            if (opts.keep_paths) cur.values.push_back(0.0);
            emit(k + 1, (double(k - start) + 0.5) * dt, false);
            sum.elapsed = (double(k) + 0.5) * dt;
            sum.local_time = local_time_budget;
            return sum;
        }
        ++k;
        if (x1 <= inf) {
            if (opts.keep_paths) cur.values.push_back(0.0);
            const bool last = opts.bridge_stop && x1 <= level;
            emit(k, (double(k - start) - (last ? 0.5 : 0.0)) * dt, false);
            inf = x1;
            x = x1;
            reset(k);
            if (-inf >= local_time_budget) {
                sum.elapsed = (double(k) - (last ? 0.5 : 0.0)) * dt;
                sum.local_time = local_time_budget;
                return sum;
            }
            continue;
        }
        x = x1;
        if (opts.keep_paths) cur.values.push_back(x - inf);
        if (k - start >= cap_steps) {
            emit(k, double(k - start) * dt, true);
            x = inf;
            reset(k);
        }
    }
}

namespace {

struct LadderEvent {
    double level, time, jump, jump_level;
    bool descent;
};

// Runs X until -v is reached; on_ladder sees every new grid minimum.
template <class OnLadder>
FirstPassage run_to_level(const BranchingMechanism& m, double v, double dt, RngStream& rng,
                          const FirstPassageOptions& opts, OnLadder on_ladder) {
    if (!(v >= 0.0)) fail(Errc::InvalidArgument, "first passage level must be >= 0");
    if (v == 0.0) return {0.0, false};
    LevyStepper stepper(m, dt, opts.sampler);
    const double var = stepper.gaussian_sd() * stepper.gaussian_sd();
    const double level = -v;
    double x = 0.0, inf = 0.0;
    std::size_t k = 0, start = 0;
    std::vector<double> sizes;
    for (;;) {
        if (double(k) * dt >= opts.time_cap) return {double(k) * dt, true};
        sizes.clear();
        double g = stepper.step(rng, sizes);
        double x0 = x;
        for (double s : sizes) x0 += s;
        double x1 = x0 + g;
        if (opts.bridge_correction && x1 > level && rng.uniform() < bridge_cross(x0, x1, level, var)) {
            double t = (double(k) + rng.uniform()) * dt;
            on_ladder(LadderEvent{v, t, t - double(start) * dt, -inf, k == start});
            return {t, false};
        }
        ++k;
        x = x1;
        if (x1 <= inf) {
            double t = double(k) * dt;
            // the crossing of -v happened somewhere inside this step; a uniform
            // position keeps passage times off the grid lattice
            if (x1 <= level && opts.bridge_correction) t -= rng.uniform() * dt;
            on_ladder(LadderEvent{-x1, t, t - double(start) * dt, -inf, k == start + 1});
            inf = x1;
            start = k;
            if (x1 <= level) return {t, false};
        }
    }
}

} // namespace

SubordinatorPath first_passage_subordinator(const BranchingMechanism& m, double v_max, double dt, RngStream& rng,
                                            const FirstPassageOptions& opts) {
    SubordinatorPath sp;
    sp.v_max = v_max;
    auto res = run_to_level(m, v_max, dt, rng, opts, [&](const LadderEvent& e) {
        sp.levels.push_back(e.level);
        sp.values.push_back(e.time);
        if (e.descent && !opts.include_descents) {
            sp.drift_time += e.jump;
            return;
        }
        sp.jumps.push_back(e.jump);
        sp.jump_levels.push_back(e.jump_level);
    });
    if (res.exhausted) fail(Errc::HorizonExhausted, "time cap reached before the target level; path unusable");
    sp.s_at_v_max = res.time;
    return sp;
}

FirstPassage first_passage_time(const BranchingMechanism& m, double v, double dt, RngStream& rng,
                                const FirstPassageOptions& opts) {
    return run_to_level(m, v, dt, rng, opts, [](const LadderEvent&) {});
}

SubordinatorPath subordinator_from_path(const PathGrid& path, bool include_descents) {
    SubordinatorPath sp;
    std::size_t prev = 0;
    for (std::size_t k = 1; k <= path.n; ++k) {
        if (path.values[k] != path.infimum[k]) continue;
        sp.levels.push_back(-path.values[k]);
        sp.values.push_back(double(k) * path.dt);
        if (k > prev + 1 || include_descents) {
            sp.jumps.push_back(double(k - prev) * path.dt);
            sp.jump_levels.push_back(-path.infimum[prev]);
        } else {
            sp.drift_time += path.dt;
        }
        prev = k;
    }
    sp.v_max = -path.infimum[path.n];
    sp.s_at_v_max = sp.values.empty() ? 0.0 : sp.values.back();
    return sp;
}

ExcursionRecord brownian_excursion(double sigma_target, double dt, RngStream& rng) {
    if (!(sigma_target > 0.0) || !(dt > 0.0)) fail(Errc::InvalidArgument, "excursion needs sigma > 0 and dt > 0");
    const std::size_t n = std::max<std::size_t>(2, std::size_t(std::llround(sigma_target / dt)));
    const double h = 1.0 / double(n);
    std::vector<double> w(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) w[k + 1] = w[k] + std::sqrt(h) * rng.normal();
    std::vector<double> b(n + 1);
    for (std::size_t k = 0; k <= n; ++k) b[k] = w[k] - double(k) * h * w[n];
    std::size_t argmin = std::min_element(b.begin(), b.end() - 1) - b.begin();
    ExcursionRecord e;
    e.start = 0;
    e.end = n;
    e.dt = sigma_target / double(n);
    e.sigma = sigma_target;
    e.values.resize(n + 1);
    const double scale = std::sqrt(sigma_target);
    for (std::size_t k = 0; k <= n; ++k) e.values[k] = scale * (b[(argmin + k) % n] - b[argmin]);
    e.values.front() = e.values.back() = 0.0;
    return e;
}

} // namespace crtfrag
