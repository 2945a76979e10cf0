#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "regmarket/random.hpp"
#include "regmarket/stats.hpp"

using namespace regmarket;

TEST_CASE("mse examples") {
  std::vector<double> a{1.0, 3.0}, z{0.0, 0.0};
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(z, a) == 5.0);
  std::vector<double> p{2.0}, t{-2.0};
  CHECK(mse(p, t) == 16.0);
  std::vector<double> empty;
  CHECK_THROWS_AS(mse(empty, empty), std::invalid_argument);
  CHECK_THROWS_AS(mse(a, p), std::invalid_argument);
}

TEST_CASE("mse is invariant under a common permutation") {
  Rng rng(4);
  std::normal_distribution<double> n;
  std::vector<double> a(40), b(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = n(rng);
    b[i] = n(rng);
  }
  const double before = mse(a, b);
  std::vector<std::size_t> idx(40);
  for (std::size_t i = 0; i < 40; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<double> pa, pb;
  for (auto i : idx) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
  }
  CHECK(mse(pa, pb) == doctest::Approx(before).epsilon(1e-14));
}

TEST_CASE("mean and sample_sd") {
  std::vector<double> v{2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
  CHECK(mean(v) == 5.0);
  CHECK(sample_sd(v) == doctest::Approx(std::sqrt(32.0 / 7.0)));
  std::vector<double> one{3.0};
  CHECK(sample_sd(one) == 0.0);
}

TEST_CASE("student t tail probabilities") {
  CHECK(student_t_two_sided_p(0.0, 5.0) == doctest::Approx(1.0));
  CHECK(student_t_two_sided_p(2.228138851986274, 10.0) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(student_t_two_sided_p(-2.228138851986274, 10.0) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(student_t_two_sided_p(2.626405456, 99.0) == doctest::Approx(0.01).epsilon(1e-8));
}

TEST_CASE("paired_t_test examples") {
  std::vector<double> b(100), a(100);
  Rng rng(1);
  std::uniform_real_distribution<double> u(3.0, 6.0);
  for (std::size_t i = 0; i < 100; ++i) {
    b[i] = u(rng);
    a[i] = b[i] + 1.0;
  }
  auto same = paired_t_test(b, b);
  CHECK(same.t == 0.0);
  CHECK(same.verdict == Verdict::kNoDifference);

  auto shifted = paired_t_test(a, b);
  CHECK(shifted.verdict == Verdict::kSecondBetter);
  CHECK(shifted.p_value == 0.0);

  std::vector<double> x{1.0, 2.0, 3.0, 4.0}, y{1.5, 2.1, 3.9, 4.2};
  auto r = paired_t_test(x, y, 0.5);
  // differences -0.5 -0.1 -0.9 -0.2: mean -0.425, sd 0.3594
  CHECK(r.df == 3.0);
  CHECK(r.t == doctest::Approx(-0.425 / (0.35939764421413 / 2.0)).epsilon(1e-10));

  std::vector<double> short1{1.0};
  CHECK_THROWS_AS(paired_t_test(short1, short1), std::invalid_argument);
  CHECK_THROWS_AS(paired_t_test(x, a), std::invalid_argument);
}

TEST_CASE("paired_t_test is antisymmetric") {
  Rng rng(12);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(30), b(30);
    for (std::size_t i = 0; i < 30; ++i) {
      a[i] = n(rng);
      b[i] = n(rng) + 0.3 * trial / 10.0;
    }
    auto ab = paired_t_test(a, b);
    auto ba = paired_t_test(b, a);
    CHECK(ab.t == -ba.t);
    CHECK(ab.p_value == doctest::Approx(ba.p_value));
    if (ab.verdict == Verdict::kFirstBetter) CHECK(ba.verdict == Verdict::kSecondBetter);
    if (ab.verdict == Verdict::kSecondBetter) CHECK(ba.verdict == Verdict::kFirstBetter);
    if (ab.verdict == Verdict::kNoDifference) CHECK(ba.verdict == Verdict::kNoDifference);
  }
}

TEST_CASE("paired_t_test null calibration") {
  Rng rng(derive_seed(1, stream_tag("calibration")));
  std::normal_distribution<double> n;
  int rejections = 0;
  std::vector<double> a(100), b(100, 0.0);
  for (int trial = 0; trial < 1000; ++trial) {
    for (auto& v : a) v = n(rng);
    if (paired_t_test(a, b, 0.01).verdict != Verdict::kNoDifference) ++rejections;
  }
  CHECK(rejections >= 5);
  CHECK(rejections <= 20);
}

TEST_CASE("published constant comparisons") {
  // 4.343 +/- 0.1 over 100 runs against 5.700
  std::vector<double> runs(100);
  for (std::size_t i = 0; i < 100; ++i) runs[i] = 4.343 + (i % 2 == 0 ? 1.0 : -1.0) * 0.1 * std::sqrt(0.99);
  CHECK(sample_sd(runs) == doctest::Approx(0.1).epsilon(1e-12));
  auto one = one_sample_t_test(runs, 5.700);
  CHECK(one.verdict == Verdict::kFirstBetter);
  CHECK(one.t < 0.0);

  auto welch = means_t_test({4.343, 0.1, 100}, {5.700, 0.0, 100});
  CHECK(welch.verdict == Verdict::kFirstBetter);
  CHECK(welch.t == doctest::Approx(one.t).epsilon(1e-9));

  CHECK(means_t_test({3.0, 0.5, 10}, {3.0, 2.0, 20}).verdict == Verdict::kNoDifference);
  CHECK(means_t_test({3.0, 0.0, 10}, {3.0, 0.0, 10}).verdict == Verdict::kNoDifference);
  CHECK(means_t_test({3.0, 0.0, 10}, {2.0, 0.0, 10}).verdict == Verdict::kSecondBetter);
  CHECK_THROWS_AS(means_t_test({3.0, 0.5, 1}, {3.0, 0.5, 10}), std::invalid_argument);
  CHECK_THROWS_AS(means_t_test({3.0, -0.5, 5}, {3.0, 0.5, 10}), std::invalid_argument);
}

TEST_CASE("verdict names") {
  CHECK(to_string(Verdict::kFirstBetter) == "first-better");
  CHECK(to_string(Verdict::kNoDifference) == "no-difference");
}
