#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace delayctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// R^dim-valued function on [-d, 0], zero outside. Held as a shared callable
/// plus the points where it may jump or kink, so shifted and composed
/// segments stay exact and integrals can split at the breakpoints.
class Segment {
 public:
  using Fn = std::function<VectorXd(double)>;

  Segment() = default;
  Segment(int dim, double d, Fn fn, std::vector<double> breaks = {});

  static Segment zero(int dim, double d);
  static Segment constant(const VectorXd& value, double d);
  /// Uniform samples (dim x (M+1)) on [-d, 0], linear interpolation.
  static Segment from_samples(double d, const MatrixXd& samples);

  int dim() const { return dim_; }
  double d() const { return d_; }
  bool is_zero() const { return !fn_; }
  const std::vector<double>& breaks() const { return breaks_; }

  /// Value at xi; zero outside [-d, 0].
  VectorXd operator()(double xi) const;
  /// dim x (M+1) samples on the uniform grid.
  MatrixXd sample(int M) const;
  /// int_{-d}^0 |x1|^2 dxi.
  double squared_l2_norm() const;
  /// int_{-d}^0 |x1(xi)| dxi.
  double l1_norm() const;

  Segment operator+(const Segment& other) const;
  Segment operator*(double c) const;

 private:
  int dim_ = 0;
  double d_ = 0.0;
  std::shared_ptr<const Fn> fn_;
  std::vector<double> breaks_;
};

/// Sorted, deduplicated union of breakpoints restricted to (lo, hi).
std::vector<double> merge_breaks(double lo, double hi, std::initializer_list<const std::vector<double>*> lists);

}  // namespace delayctl
