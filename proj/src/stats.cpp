#include "crtfrag/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "crtfrag/error.hpp"

namespace crtfrag {

void NeumaierSum::add(double x) noexcept {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
        comp_ += (sum_ - t) + x;
    else
        comp_ += (x - t) + sum_;
    sum_ = t;
}

double MeanAccumulator::mean() const noexcept { return n_ ? s1_.value() / double(n_) : 0.0; }

double MeanAccumulator::variance() const noexcept {
    if (n_ < 2) return 0.0;
    double m = mean();
    double v = (s2_.value() - double(n_) * m * m) / double(n_ - 1);
    return v > 0.0 ? v : 0.0;
}

double MeanAccumulator::stderr_of_mean() const noexcept {
    return n_ ? std::sqrt(variance() / double(n_)) : 0.0;
}

double poisson_pmf(unsigned k, double mean) {
    if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

ChiSquareResult chi_square_poisson_mixture(const std::vector<unsigned>& counts, const std::vector<double>& means,
                                           double min_expected) {
    if (counts.size() != means.size() || counts.empty())
        fail(Errc::InvalidArgument, "chi-square needs matching non-empty counts and means");
    unsigned kmax = *std::max_element(counts.begin(), counts.end());
    double mmax = *std::max_element(means.begin(), means.end());
    unsigned top = std::max<unsigned>(kmax, unsigned(mmax + 10.0 * std::sqrt(mmax + 1.0) + 10.0));

    // expected[k] for k < top, plus a tail bin >= top
    std::vector<double> expected(top + 1, 0.0);
    for (double mu : means) {
        double cdf = 0.0;
        for (unsigned k = 0; k < top; ++k) {
            double p = poisson_pmf(k, mu);
            expected[k] += p;
            cdf += p;
        }
        expected[top] += std::max(0.0, 1.0 - cdf);
    }
    std::vector<double> observed(top + 1, 0.0);
    for (unsigned c : counts) observed[std::min(c, top)] += 1.0;

    // merge from the tail toward the mode, then from the head
    std::vector<double> e, o;
    double acc_e = 0.0, acc_o = 0.0;
    for (unsigned k = top + 1; k-- > 0;) {
        acc_e += expected[k];
        acc_o += observed[k];
        if (acc_e >= min_expected) {
            e.push_back(acc_e);
            o.push_back(acc_o);
            acc_e = acc_o = 0.0;
        }
    }
    if (acc_e > 0.0 || acc_o > 0.0) {
        if (e.empty()) {
            e.push_back(acc_e);
            o.push_back(acc_o);
        } else {
            e.back() += acc_e;
            o.back() += acc_o;
        }
    }
    ChiSquareResult r;
    r.bins = int(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) r.statistic += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
    r.dof = r.bins - 1;
    if (r.dof < 1) {
        r.p_value = 1.0;
        return r;
    }
    boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

double kolmogorov_q(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 0.3) {
        // small-x form via the theta-function identity
        const double pi = 3.14159265358979323846;
        double s = 0.0;
        for (int k = 1; k < 50; ++k) {
            double t = (2 * k - 1) * pi / (2 * x);
            s += std::exp(-t * t / 2.0);
        }
        return 1.0 - std::sqrt(2 * pi) / x * s;
    }
    double s = 0.0;
    for (int k = 1; k < 100; ++k) {
        double t = 2.0 * std::exp(-2.0 * k * k * x * x);
        s += (k % 2 ? t : -t);
        if (t < 1e-17) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) fail(Errc::InvalidArgument, "KS needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    double ne = na * nb / (na + nb);
    double sq = std::sqrt(ne);
    return {d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)};
}

} // namespace crtfrag
