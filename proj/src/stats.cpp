#include "regmarket/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace regmarket {

double mse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("mse: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - truths[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty vector");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kFirstBetter:
      return "first-better";
    case Verdict::kSecondBetter:
      return "second-better";
    case Verdict::kNoDifference:
      return "no-difference";
  }
  return "no-difference";
}

double student_t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

namespace {

// Builds a result from a mean shift and its standard error.
TestResult finish(double shift, double standard_error, double df, double alpha) {
  TestResult r;
  r.df = df;
  if (!(standard_error > 0.0)) {
    if (shift == 0.0) return r;
    r.t = std::copysign(std::numeric_limits<double>::infinity(), shift);
    r.p_value = 0.0;
  } else {
    r.t = shift / standard_error;
    r.p_value = student_t_two_sided_p(r.t, df);
  }
  if (r.p_value < alpha) r.verdict = shift < 0.0 ? Verdict::kFirstBetter : Verdict::kSecondBetter;
  return r;
}

}  // namespace

TestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != b.size()) throw std::invalid_argument("paired t-test: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired t-test needs at least 2 pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double n = static_cast<double>(diff.size());
  return finish(mean(diff), sample_sd(diff) / std::sqrt(n), n - 1.0, alpha);
}

TestResult one_sample_t_test(std::span<const double> sample, double constant, double alpha) {
  if (sample.size() < 2) throw std::invalid_argument("one-sample t-test needs at least 2 values");
  const double n = static_cast<double>(sample.size());
  return finish(mean(sample) - constant, sample_sd(sample) / std::sqrt(n), n - 1.0, alpha);
}

TestResult means_t_test(const SampleSummary& a, const SampleSummary& b, double alpha) {
  if (a.n < 2 || b.n < 2) throw std::invalid_argument("means t-test needs n >= 2 on both sides");
  if (a.sd < 0.0 || b.sd < 0.0) throw std::invalid_argument("standard deviations must be nonnegative");
  const double va = a.sd * a.sd / static_cast<double>(a.n);
  const double vb = b.sd * b.sd / static_cast<double>(b.n);
  const double se = std::sqrt(va + vb);
  double df = 0.0;
  if (va > 0.0 && vb == 0.0) {
    df = static_cast<double>(a.n - 1);
  } else if (vb > 0.0 && va == 0.0) {
    df = static_cast<double>(b.n - 1);
  } else if (se > 0.0) {
    // Welch-Satterthwaite
    df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.n - 1) + vb * vb / static_cast<double>(b.n - 1));
  }
  return finish(a.mean - b.mean, se, df, alpha);
}

}  // namespace regmarket
