#include "delayctl/segment.hpp"

#include <algorithm>
#include <cmath>

#include "delayctl/errors.hpp"
#include "delayctl/quadrature.hpp"

namespace delayctl {

Segment::Segment(int dim, double d, Fn fn, std::vector<double> breaks) : dim_(dim), d_(d) {
  if (d <= 0.0) throw ValidationError("operator_core", "segment needs d > 0");
  if (fn) fn_ = std::make_shared<const Fn>(std::move(fn));
  for (double b : breaks) {
    if (b > -d && b < 0.0) breaks_.push_back(b);
  }
  std::sort(breaks_.begin(), breaks_.end());
  breaks_.erase(std::unique(breaks_.begin(), breaks_.end()), breaks_.end());
}

Segment Segment::zero(int dim, double d) { return Segment(dim, d, nullptr); }

Segment Segment::constant(const VectorXd& value, double d) {
  if (value.isZero(0.0)) return zero(static_cast<int>(value.size()), d);
  return Segment(static_cast<int>(value.size()), d, [value](double) { return value; });
}

Segment Segment::from_samples(double d, const MatrixXd& samples) {
  if (samples.cols() < 2) throw ValidationError("operator_core", "segment needs M >= 1");
  const auto steps = samples.cols() - 1;
  std::vector<double> br;
  for (Eigen::Index i = 1; i < steps; ++i) br.push_back(-d + d * static_cast<double>(i) / steps);
  auto fn = [d, samples, steps](double xi) -> VectorXd {
    const double pos = std::clamp((xi + d) / d * steps, 0.0, static_cast<double>(steps));
    const auto i = std::min(static_cast<Eigen::Index>(pos), steps - 1);
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * samples.col(i) + w * samples.col(i + 1);
  };
  return Segment(static_cast<int>(samples.rows()), d, fn, br);
}

VectorXd Segment::operator()(double xi) const {
  if (!fn_ || xi < -d_ || xi > 0.0) return VectorXd::Zero(dim_);
  return (*fn_)(xi);
}

MatrixXd Segment::sample(int M) const {
  if (M < 1) throw ValidationError("operator_core", "segment sampling needs M >= 1");
  MatrixXd out(dim_, M + 1);
  for (int i = 0; i <= M; ++i) out.col(i) = (*this)(-d_ + d_ * i / M);
  return out;
}

double Segment::squared_l2_norm() const {
  if (!fn_) return 0.0;
  return integrate_adaptive_scalar([this](double s) { return (*this)(s).squaredNorm(); }, -d_, 0.0,
                                   breaks_, 1e-10);
}

double Segment::l1_norm() const {
  if (!fn_) return 0.0;
  return integrate_adaptive_scalar([this](double s) { return (*this)(s).norm(); }, -d_, 0.0, breaks_,
                                   1e-8);
}

Segment Segment::operator+(const Segment& other) const {
  if (other.dim_ != dim_ || std::abs(other.d_ - d_) > 1e-14) {
    throw ValidationError("operator_core", "segment sum with mismatched shape");
  }
  if (!fn_) return other;
  if (!other.fn_) return *this;
  auto a = fn_;
  auto b = other.fn_;
  std::vector<double> br = breaks_;
  br.insert(br.end(), other.breaks_.begin(), other.breaks_.end());
  return Segment(dim_, d_, [a, b](double xi) { return ((*a)(xi) + (*b)(xi)).eval(); }, br);
}

Segment Segment::operator*(double c) const {
  if (!fn_ || c == 0.0) return zero(dim_, d_);
  auto a = fn_;
  return Segment(dim_, d_, [a, c](double xi) { return (c * (*a)(xi)).eval(); }, breaks_);
}

std::vector<double> merge_breaks(double lo, double hi,
                                 std::initializer_list<const std::vector<double>*> lists) {
  std::vector<double> out;
  for (const auto* l : lists) {
    for (double b : *l) {
      if (b > lo && b < hi) out.push_back(b);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace delayctl
