#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace regmarket {

/// Mean squared error. Throws on empty or mismatched inputs.
double mse(std::span<const double> predictions, std::span<const double> truths);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_sd(std::span<const double> v);

/// Lower MSE wins.
enum class Verdict { kFirstBetter, kSecondBetter, kNoDifference };

std::string_view to_string(Verdict v);

struct TestResult {
  double t = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  Verdict verdict = Verdict::kNoDifference;
};

/// Two-sided paired t-test on the run-wise differences a - b. Differences
/// with zero spread are "no difference" if their mean is zero and
/// significant (p = 0, t = +/-inf) otherwise.
TestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha = 0.01);

/// Two-sided one-sample t-test of `sample` against a published constant.
/// `kFirstBetter` means the sample mean is significantly below the constant.
TestResult one_sample_t_test(std::span<const double> sample, double constant, double alpha = 0.01);

struct SampleSummary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

/// Welch two-sample t-test from summary statistics. A side with sd = 0 is a
/// fixed constant; when both are constants the test is degenerate and only
/// exact inequality counts as significant.
TestResult means_t_test(const SampleSummary& a, const SampleSummary& b, double alpha = 0.01);

/// Two-sided tail probability 2 P(T > |t|) of Student's t with df degrees.
double student_t_two_sided_p(double t, double df);

}  // namespace regmarket
