#pragma once

#include <span>

namespace metalora {

double mean(std::span<const double> xs);
// Sample standard deviation (n-1 denominator); 0 for fewer than two points.
double sample_std(std::span<const double> xs);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

// Welch's unequal-variance t-test, two-sided p.  Degenerate inputs (both
// variances zero) give t=0, p=1 on equal means and p=0 otherwise.
struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace metalora
