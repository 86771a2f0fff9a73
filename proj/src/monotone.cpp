#include "pathco/monotone.hpp"

#include <algorithm>
#include <cmath>

#include "pathco/error.hpp"

namespace pathco {

std::vector<double> isotonic_regression(std::span<const double> y) {
  struct Block {
    double sum;
    std::size_t count;
    double mean() const { return sum / static_cast<double>(count); }
  };
  std::vector<Block> blocks;
  for (double v : y) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      const Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.mean());
  return out;
}

namespace {

// Three-point end slope, clipped to preserve shape.
double end_slope(double h0, double h1, double d0, double d1) {
  double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if (m * d0 <= 0.0) return 0.0;
  if (d0 * d1 <= 0.0 && std::abs(m) > std::abs(3.0 * d0)) return 3.0 * d0;
  return m;
}

}  // namespace

MonotoneCubic::MonotoneCubic(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  const std::size_t n = xs_.size();
  require(n >= 2 && ys_.size() == n, ErrorCode::InvalidArgument,
          "monotone cubic needs at least two matching points");
  for (std::size_t i = 1; i < n; ++i) {
    require(xs_[i] > xs_[i - 1], ErrorCode::InvalidArgument, "knots must be strictly increasing");
    require(ys_[i] >= ys_[i - 1], ErrorCode::NonMonotoneMapping, "values must be nondecreasing");
  }
  std::vector<double> h(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = xs_[i + 1] - xs_[i];
    d[i] = (ys_[i + 1] - ys_[i]) / h[i];
  }
  m_.assign(n, 0.0);
  if (n == 2) {
    m_[0] = m_[1] = d[0];
    return;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (d[i - 1] * d[i] <= 0.0) continue;
    const double w1 = 2.0 * h[i] + h[i - 1];
    const double w2 = h[i] + 2.0 * h[i - 1];
    m_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
  }
  m_[0] = end_slope(h[0], h[1], d[0], d[1]);
  m_[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
}

double MonotoneCubic::eval_interval(std::size_t k, double x) const {
  const double h = xs_[k + 1] - xs_[k];
  const double t = (x - xs_[k]) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * ys_[k] + (t3 - 2 * t2 + t) * h * m_[k] +
         (-2 * t3 + 3 * t2) * ys_[k + 1] + (t3 - t2) * h * m_[k + 1];
}

double MonotoneCubic::operator()(double x) const {
  if (x <= xs_.front()) return ys_.front();
  if (x >= xs_.back()) return ys_.back();
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const auto k = static_cast<std::size_t>(it - xs_.begin()) - 1;
  if (x == xs_[k]) return ys_[k];
  return eval_interval(k, x);
}

double MonotoneCubic::inverse(double y) const {
  if (y <= ys_.front()) return xs_.front();
  if (y >= ys_.back()) {
    // Earliest knot reaching the top value.
    const auto it = std::lower_bound(ys_.begin(), ys_.end(), ys_.back());
    return xs_[static_cast<std::size_t>(it - ys_.begin())];
  }
  const auto it = std::lower_bound(ys_.begin(), ys_.end(), y);
  const auto hi = static_cast<std::size_t>(it - ys_.begin());
  if (ys_[hi] == y) {
    return xs_[hi];
  }
  const std::size_t k = hi - 1;
  double lo_x = xs_[k];
  double hi_x = xs_[k + 1];
  for (int iter = 0; iter < 200 && hi_x - lo_x > 1e-15; ++iter) {
    const double mid = 0.5 * (lo_x + hi_x);
    if (eval_interval(k, mid) < y) {
      lo_x = mid;
    } else {
      hi_x = mid;
    }
  }
  return 0.5 * (lo_x + hi_x);
}

}  // namespace pathco
