// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "support/oracles.hpp"
#include "tsd/common.hpp"
#include "tsd/stats.hpp"

using namespace tsd;

TEST_CASE("paired t-test hand case d = [1,2,3]") {
  TTestResult r = paired_t_test({2, 4, 6}, {1, 2, 3});
  CHECK(r.t == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r.df == 2.0);
  CHECK_FALSE(r.degenerate_variance);
}

TEST_CASE("identical samples give the degenerate rule") {
  TTestResult r = paired_t_test({1.5, 2.5, 3.5}, {1.5, 2.5, 3.5});
  CHECK(r.degenerate_variance);
  CHECK(r.t == 0.0);
  CHECK(r.p == 1.0);

  TTestResult shifted = paired_t_test({2.5, 3.5, 4.5}, {1.5, 2.5, 3.5});
  CHECK(shifted.degenerate_variance);
  CHECK(shifted.p == 0.0);
}

TEST_CASE("sign flip negates t and preserves p") {
  std::vector<double> a = {1.0, 2.2, 2.9, 4.4};
  std::vector<double> b = {0.4, 1.9, 3.3, 3.6};
  TTestResult fwd = paired_t_test(a, b);
  TTestResult rev = paired_t_test(b, a);
  CHECK(rev.t == doctest::Approx(-fwd.t).epsilon(1e-14));
  CHECK(rev.p == doctest::Approx(fwd.p).epsilon(1e-14));
}

TEST_CASE("two-sided p matches numeric integration of the t density") {
  for (double df : {1.0, 2.0, 5.0, 10.0, 30.0}) {
    for (double t : {0.0, 0.5, 1.0, 2.0, 3.4641016151377544, 5.0, 10.0}) {
      const double ours = student_t_two_sided_p(t, df);
      const double ref = tsd_oracle::t_two_sided_p_reference(t, df);
      CAPTURE(df);
      CAPTURE(t);
      CHECK(std::abs(ours - ref) < 1e-6);
    }
  }
}

TEST_CASE("incomplete beta edge cases") {
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1,1) = x
  for (double x : {0.1, 0.5, 0.9}) {
    CHECK(incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
  }
  CHECK_THROWS_AS(incomplete_beta(1.0, 1.0, 1.5), contract_error);
}

TEST_CASE("holm correction hand cases") {
  const std::vector<double> adjusted = holm_correct({0.01, 0.04});
  CHECK(adjusted[0] == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(adjusted[1] == doctest::Approx(0.04).epsilon(1e-15));

  CHECK(holm_correct({0.3}) == std::vector<double>{0.3});
  CHECK(holm_correct({1.0, 1.0, 1.0}) == std::vector<double>{1.0, 1.0, 1.0});
  CHECK_THROWS_AS(holm_correct({0.5, 1.2}), contract_error);
}

TEST_CASE("holm output is monotone along the sorted order and >= input") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> ps;
    const std::size_t m = 1 + rng.below(8);
    for (std::size_t i = 0; i < m; ++i) ps.push_back(rng.uniform());
    const std::vector<double> adj = holm_correct(ps);
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(adj[i] >= ps[i]);
      CHECK(adj[i] <= 1.0);
    }
    // monotone non-decreasing in the order of ascending raw p
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ps[a] < ps[b]; });
    for (std::size_t k = 1; k < m; ++k) CHECK(adj[order[k]] >= adj[order[k - 1]]);
  }
}

TEST_CASE("paired t-test contracts") {
  CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), contract_error);
  CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {1.0}), contract_error);
}
