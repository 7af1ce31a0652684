// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace tsd {

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate_variance = false;  // sd(d) == 0
};

/// Seed-wise paired t-test: d_i = a_i - b_i, t = mean(d) / (sd(d)/sqrt(n))
/// with the n-1 sample standard deviation; two-sided p from the Student-t
/// CDF. Zero-variance differences set the degenerate flag and report p = 0
/// when the mean differs from zero, p = 1 otherwise.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Two-sided tail probability P(|T| >= |t|) for Student-t with df degrees of
/// freedom, via the regularized incomplete beta (continued fraction).
double student_t_two_sided_p(double t, double df);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Holm step-down adjustment: sorted ascending, adjusted_(k) = max over
/// j <= k of min(1, (m-j+1) * p_(j)), reported in the original order.
std::vector<double> holm_correct(const std::vector<double>& pvals);

}  // namespace tsd
