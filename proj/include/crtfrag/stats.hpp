#pragma once

#include <cstddef>
#include <vector>

namespace crtfrag {

/// Kahan–Babuška–Neumaier compensated sum.
class NeumaierSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + comp_; }
    NeumaierSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }
    void merge(const NeumaierSum& o) noexcept {
        add(o.sum_);
        add(o.comp_);
    }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Mean and standard error from compensated sums of x and x^2.
class MeanAccumulator {
public:
    void add(double x) noexcept {
        ++n_;
        s1_.add(x);
        s2_.add(x * x);
    }
    void merge(const MeanAccumulator& o) noexcept {
        n_ += o.n_;
        s1_.merge(o.s1_);
        s2_.merge(o.s2_);
    }
    std::size_t count() const noexcept { return n_; }
    double sum() const noexcept { return s1_.value(); }
    double mean() const noexcept;
    double variance() const noexcept; // unbiased
    double stderr_of_mean() const noexcept;

private:
    std::size_t n_ = 0;
    NeumaierSum s1_, s2_;
};

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    int bins = 0;
};

double poisson_pmf(unsigned k, double mean);

/// Goodness of fit of counts[i] against Poisson(means[i]) (a Poisson mixture
/// over the sample). Bins are merged until every expected count is >= min_expected.
ChiSquareResult chi_square_poisson_mixture(const std::vector<unsigned>& counts,
                                           const std::vector<double>& means,
                                           double min_expected = 5.0);

/// Asymptotic Kolmogorov survival function Q(x) = 2 sum (-1)^{k-1} e^{-2k^2x^2}.
double kolmogorov_q(double x);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

} // namespace crtfrag
