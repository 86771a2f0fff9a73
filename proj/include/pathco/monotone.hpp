#pragma once

#include <span>
#include <vector>

namespace pathco {

/// Least-squares nondecreasing fit (pool-adjacent-violators, unit weights).
std::vector<double> isotonic_regression(std::span<const double> y);

/// Shape-preserving piecewise cubic Hermite interpolant through
/// nondecreasing data (Fritsch-Carlson slopes with weighted harmonic means).
class MonotoneCubic {
 public:
  /// xs strictly increasing, ys nondecreasing, at least two points.
  MonotoneCubic(std::vector<double> xs, std::vector<double> ys);

  double operator()(double x) const;

  /// Smallest x in [x0, xn] with f(x) = y (within bisection precision).
  /// y is clamped to [f(x0), f(xn)].
  double inverse(double y) const;

  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  const std::vector<double>& slopes() const { return m_; }

 private:
  double eval_interval(std::size_t k, double x) const;

  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<double> m_;
};

}  // namespace pathco
