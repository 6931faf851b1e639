#include "choiceeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace choiceeval::stats {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 600;

// Lower incomplete gamma by power series, premultiplied by e^-x x^a / Γ(a).
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper incomplete gamma by modified Lentz continued fraction, same prefactor.
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double betacf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double clamp01(double p) { return std::min(1.0, std::max(0.0, p)); }

}  // namespace

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw DomainError("regularized_gamma_p: need a > 0, x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double regularized_gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw DomainError("regularized_gamma_q: need a > 0, x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double regularized_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw DomainError("regularized_beta: need a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double chisq_sf(double x, double df) {
    if (!(df >= 1.0)) throw DomainError("chisq_sf: df must be >= 1");
    if (x < 0.0) throw DomainError("chisq_sf: x must be >= 0");
    return clamp01(regularized_gamma_q(df / 2.0, x / 2.0));
}

double student_t_sf(double t, double df) {
    if (!(df >= 1.0)) throw DomainError("student_t_sf: df must be >= 1");
    if (std::isnan(t)) throw DomainError("student_t_sf: t is NaN");
    if (t == 0.0) return 0.5;  // exact by symmetry
    if (std::isinf(t)) return t > 0.0 ? 0.0 : 1.0;
    double x = df / (df + t * t);
    double tail = 0.5 * regularized_beta(df / 2.0, 0.5, x);
    return clamp01(t > 0.0 ? tail : 1.0 - tail);
}

TTestResult one_sample_t(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 2) throw TooFewGroups("one_sample_t: need at least two values");
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double s = std::sqrt(ss / (n - 1));

    TTestResult r;
    r.mean = mean;
    if (s == 0.0) {
        // No spread: either nothing to test (all zeros) or an unambiguous
        // offset from zero. Flagged so reports can annotate it.
        r.degenerate = true;
        if (mean == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.t = mean / (s / std::sqrt(static_cast<double>(n)));
    r.p = clamp01(2.0 * student_t_sf(std::fabs(r.t), static_cast<double>(n - 1)));
    return r;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // Positions i..j share the average rank (1-based).
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {

bool is_constant(const std::vector<double>& v) {
    for (double x : v)
        if (x != v.front()) return false;
    return true;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

double rank_rho(const std::vector<double>& ra, const std::vector<double>& rb, bool has_ties) {
    const std::size_t n = ra.size();
    if (!has_ties) {
        // Tie-free closed form keeps rho exact at ±1 for (anti)monotone input.
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
        double nn = static_cast<double>(n);
        return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
    }
    return pearson(ra, rb);
}

bool has_duplicates(const std::vector<double>& v) {
    std::vector<double> c = v;
    std::sort(c.begin(), c.end());
    return std::adjacent_find(c.begin(), c.end()) != c.end();
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw LengthMismatch("spearman: inputs differ in length (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    const std::size_t n = a.size();
    if (n < 3) throw DomainError("spearman: need at least three observations");

    SpearmanResult r;
    if (is_constant(a) || is_constant(b)) {
        r.degenerate = true;
        r.rho = std::numeric_limits<double>::quiet_NaN();
        r.p = std::numeric_limits<double>::quiet_NaN();
        return r;
    }

    std::vector<double> ra = average_ranks(a);
    std::vector<double> rb = average_ranks(b);
    bool ties = has_duplicates(ra) || has_duplicates(rb);
    r.rho = std::max(-1.0, std::min(1.0, rank_rho(ra, rb, ties)));

    if (n <= 8) {
        // Exact two-sided permutation test over all n! orderings of b's ranks.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<double> perm(n);
        std::uint64_t total = 0, at_least = 0;
        const double threshold = std::fabs(r.rho) - 1e-12;
        std::sort(idx.begin(), idx.end());
        do {
            for (std::size_t i = 0; i < n; ++i) perm[i] = rb[idx[i]];
            double rho_p = rank_rho(ra, perm, ties);
            ++total;
            if (std::fabs(rho_p) >= threshold) ++at_least;
        } while (std::next_permutation(idx.begin(), idx.end()));
        r.p = static_cast<double>(at_least) / static_cast<double>(total);
        r.exact_p = true;
    } else {
        if (std::fabs(r.rho) >= 1.0) {
            r.p = 0.0;
        } else {
            double nn = static_cast<double>(n);
            double t = r.rho * std::sqrt((nn - 2.0) / (1.0 - r.rho * r.rho));
            r.p = std::min(1.0, 2.0 * student_t_sf(std::fabs(t), nn - 2.0));
        }
    }
    return r;
}

KruskalResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw TooFewGroups("kruskal_wallis: need at least two groups");
    std::size_t total = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty())
            throw DomainError("kruskal_wallis: group " + std::to_string(g) + " is empty");
        total += groups[g].size();
    }
    if (total < 3) throw DomainError("kruskal_wallis: need at least three observations");

    std::vector<double> pooled;
    pooled.reserve(total);
    for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());

    KruskalResult r;
    if (is_constant(pooled)) {
        r.h = 0.0;
        r.p = 1.0;
        r.all_identical = true;
        return r;
    }

    std::vector<double> ranks = average_ranks(pooled);
    const double n = static_cast<double>(total);
    double h = 0.0;
    std::size_t off = 0;
    for (const auto& g : groups) {
        double rsum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) rsum += ranks[off + i];
        h += rsum * rsum / static_cast<double>(g.size());
        off += g.size();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    // Tie correction: divide by 1 - sum(t^3 - t) / (N^3 - N) over tie groups.
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_sum = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        double t = static_cast<double>(j - i + 1);
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    double correction = 1.0 - tie_sum / (n * n * n - n);
    h /= correction;  // correction > 0 because not all values are identical

    r.h = h;
    r.p = chisq_sf(std::max(0.0, h), static_cast<double>(groups.size() - 1));
    return r;
}

}  // namespace choiceeval::stats
