#pragma once

#include <vector>

#include "choiceeval/errors.hpp"

namespace choiceeval::stats {

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
// Series expansion below x < a+1, Lentz continued fraction above; absolute
// error stays well under 1e-10 across the tested domain.
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation with
// the usual symmetry split at x = (a+1)/(a+b+2).
double regularized_beta(double a, double b, double x);

// Upper tail of the chi-square distribution: P(X >= x) with df degrees of
// freedom. Throws DomainError for df < 1 or x < 0.
double chisq_sf(double x, double df);

// Upper tail of Student's t: P(T >= t). Exact 0.5 at t = 0, monotone
// decreasing in t. Throws DomainError for df < 1.
double student_t_sf(double t, double df);

// ---------------------------------------------------------------------------

struct TTestResult {
    double mean = 0.0;
    double t = 0.0;
    double p = 1.0;
    bool degenerate = false;  // zero sample standard deviation
};

// Two-sided one-sample t test of H0: mean = 0. With zero spread the result is
// flagged degenerate: all-zero values give (t=0, p=1), a nonzero constant
// gives (t=±inf, p=0). Throws TooFewGroups for fewer than two values.
TTestResult one_sample_t(const std::vector<double>& values);

// ---------------------------------------------------------------------------

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

struct SpearmanResult {
    double rho = 0.0;
    double p = 1.0;
    bool degenerate = false;  // one of the inputs was constant
    bool exact_p = false;     // p came from full permutation enumeration
};

// Spearman rank correlation with a two-sided p-value. For n <= 8 the p-value
// enumerates all n! rank permutations; larger n uses the t approximation
// with n-2 degrees of freedom. A constant input yields degenerate=true with
// rho/p unset rather than an error. Throws LengthMismatch on unequal sizes,
// DomainError for n < 3.
SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------

struct KruskalResult {
    double h = 0.0;
    double p = 1.0;
    bool all_identical = false;  // every observation equal; H defined as 0, p = 1
};

// Kruskal-Wallis H with tie correction; p from the chi-square upper tail with
// k-1 degrees of freedom. Throws TooFewGroups for fewer than two groups,
// DomainError for an empty group.
KruskalResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

}  // namespace choiceeval::stats
