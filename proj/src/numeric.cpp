#include "brsnis/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace brsnis {

namespace {

constexpr std::size_t kPairwiseBlock = 16;

double pairwise_sum_impl(const double* data, std::size_t n) {
  if (n <= kPairwiseBlock) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_impl(data, half) + pairwise_sum_impl(data + half, n - half);
}

double pairwise_dot_impl(const double* a, const double* b, std::size_t n) {
  if (n <= kPairwiseBlock) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_dot_impl(a, b, half) + pairwise_dot_impl(a + half, b + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  return pairwise_sum_impl(values.data(), values.size());
}

double pairwise_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pairwise_dot: length mismatch");
  return pairwise_dot_impl(a.data(), b.data(), a.size());
}

double log_sum_exp(std::span<const double> values) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw std::domain_error("log_sum_exp: non-finite log-weight");
    }
    top = std::max(top, v);
  }
  if (top == -std::numeric_limits<double>::infinity()) return top;
  std::vector<double> shifted(values.size());
  std::transform(values.begin(), values.end(), shifted.begin(),
                 [top](double v) { return std::exp(v - top); });
  return top + std::log(pairwise_sum(shifted));
}

MeanAndError mean_and_error(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_and_error: empty input");
  const auto n = static_cast<double>(values.size());
  MeanAndError out;
  out.mean = pairwise_sum(values) / n;
  if (values.size() < 2) return out;
  std::vector<double> sq(values.size());
  std::transform(values.begin(), values.end(), sq.begin(), [&](double v) {
    const double d = v - out.mean;
    return d * d;
  });
  out.standard_error = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  return out;
}

}  // namespace brsnis
