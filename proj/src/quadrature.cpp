#include "delayctl/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/sobol.hpp>

#include "delayctl/errors.hpp"

namespace delayctl {

namespace {

// Golub-Welsch: eigenvalues of the Jacobi matrix are the nodes, squared first
// eigenvector components times mu0 are the weights.
Rule1D golub_welsch(const VectorXd& diag, const VectorXd& offdiag, double mu0) {
  const Eigen::Index n = diag.size();
  MatrixXd j = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) j(i, i) = diag(i);
  for (Eigen::Index i = 0; i + 1 < n; ++i) j(i, i + 1) = j(i + 1, i) = offdiag(i);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(j);
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace

Rule1D gauss_legendre(int order) {
  if (order < 1) throw ValidationError("quadrature", "Gauss-Legendre order must be >= 1");
  VectorXd diag = VectorXd::Zero(order);
  VectorXd off(std::max(order - 1, 0));
  for (int k = 1; k < order; ++k) {
    off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  }
  Rule1D r = golub_welsch(diag, off, 2.0);
  // Symmetrize to kill round-off asymmetry.
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (r.nodes[j] - r.nodes[i]);
    const double w = 0.5 * (r.weights[i] + r.weights[j]);
    r.nodes[i] = -x;
    r.nodes[j] = x;
    r.weights[i] = r.weights[j] = w;
  }
  if (order % 2 == 1) r.nodes[order / 2] = 0.0;
  return r;
}

Rule1D gauss_hermite_normal(int order) {
  if (order < 1) throw ValidationError("quadrature", "Gauss-Hermite order must be >= 1");
  VectorXd diag = VectorXd::Zero(order);
  VectorXd off(std::max(order - 1, 0));
  for (int k = 1; k < order; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  Rule1D r = golub_welsch(diag, off, 1.0);
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (r.nodes[j] - r.nodes[i]);
    const double w = 0.5 * (r.weights[i] + r.weights[j]);
    r.nodes[i] = -x;
    r.nodes[j] = x;
    r.weights[i] = r.weights[j] = w;
  }
  if (order % 2 == 1) r.nodes[order / 2] = 0.0;
  double total = 0.0;
  for (double w : r.weights) total += w;
  for (double& w : r.weights) w /= total;
  return r;
}

int NormalRule::exactness_degree() const { return tensor ? 2 * order - 1 : -1; }

NormalRule make_normal_rule(int dim, const QuadratureSpec& spec) {
  if (dim < 0) throw ValidationError("quadrature", "negative dimension");
  NormalRule out;
  bool use_tensor = spec.kind == QuadratureSpec::Kind::kGaussHermite ||
                    (spec.kind == QuadratureSpec::Kind::kAuto && dim <= spec.max_tensor_dim);
  if (dim == 0) {
    out.points = MatrixXd::Zero(0, 1);
    out.weights = VectorXd::Ones(1);
    out.order = spec.order;
    return out;
  }
  if (use_tensor) {
    const Rule1D gh = gauss_hermite_normal(spec.order);
    const int q = spec.order;
    long total = 1;
    for (int i = 0; i < dim; ++i) total *= q;
    out.points.resize(dim, total);
    out.weights.resize(total);
    std::vector<int> idx(dim, 0);
    for (long c = 0; c < total; ++c) {
      double w = 1.0;
      for (int i = 0; i < dim; ++i) {
        out.points(i, c) = gh.nodes[idx[i]];
        w *= gh.weights[idx[i]];
      }
      out.weights(c) = w;
      for (int i = 0; i < dim; ++i) {
        if (++idx[i] < q) break;
        idx[i] = 0;
      }
    }
    out.tensor = true;
    out.order = q;
    return out;
  }
  // Sobol points, randomly shifted modulo one, mapped through the normal quantile.
  boost::random::sobol engine(dim);
  const int npts = spec.qmc_points;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> shift(dim);
  for (double& s : shift) s = unif(rng);
  const boost::math::normal_distribution<double> normal;
  const double scale = 1.0 / (static_cast<double>(engine.max()) + 1.0);
  out.points.resize(dim, npts);
  out.weights = VectorXd::Constant(npts, 1.0 / npts);
  for (int c = 0; c < npts; ++c) {
    for (int i = 0; i < dim; ++i) {
      double u = (static_cast<double>(engine()) + 0.5) * scale + shift[i];
      u -= std::floor(u);
      u = std::clamp(u, 1e-15, 1.0 - 1e-15);
      out.points(i, c) = boost::math::quantile(normal, u);
    }
  }
  out.tensor = false;
  out.order = 0;
  return out;
}

TimeRule singular_time_rule(double t, int order, const std::vector<double>& breaks) {
  TimeRule out;
  if (t <= 0.0) return out;
  std::vector<double> thetas{0.0};
  for (double b : breaks) {
    if (b > 0.0 && b < t) thetas.push_back(std::asin(std::sqrt(b / t)));
  }
  thetas.push_back(0.5 * std::numbers::pi);
  std::sort(thetas.begin(), thetas.end());
  thetas.erase(std::unique(thetas.begin(), thetas.end()), thetas.end());
  const Rule1D gl = gauss_legendre(order);
  for (std::size_t p = 0; p + 1 < thetas.size(); ++p) {
    const double lo = thetas[p], hi = thetas[p + 1];
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (int i = 0; i < order; ++i) {
      const double th = mid + half * gl.nodes[i];
      const double sn = std::sin(th);
      out.s.push_back(t * sn * sn);
      out.w.push_back(t * std::sin(2.0 * th) * half * gl.weights[i]);
    }
  }
  return out;
}

namespace {

constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

void gk15(const std::function<VectorXd(double)>& f, double a, double b, VectorXd& kronrod,
          VectorXd& gauss) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  VectorXd fc = f(c);
  kronrod = kWgk[7] * fc;
  gauss = kWg[3] * fc;
  for (int j = 0; j < 7; ++j) {
    const VectorXd f1 = f(c - h * kXgk[j]);
    const VectorXd f2 = f(c + h * kXgk[j]);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  kronrod *= h;
  gauss *= h;
}

VectorXd adapt(const std::function<VectorXd(double)>& f, double a, double b, double tol, int depth) {
  VectorXd k, g;
  gk15(f, a, b, k, g);
  const double err = (k - g).lpNorm<Eigen::Infinity>();
  if (err <= tol || depth <= 0 || b - a < 1e-14 * (1.0 + std::abs(a))) {
    if (!k.allFinite()) throw NumericError("quadrature", "non-finite integrand");
    return k;
  }
  const double m = 0.5 * (a + b);
  return adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1);
}

}  // namespace

VectorXd integrate_adaptive(const std::function<VectorXd(double)>& f, double a, double b,
                            const std::vector<double>& breaks, double rel_tol, double abs_tol,
                            int max_depth) {
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }
  std::vector<double> pts{a};
  for (double x : breaks) {
    if (x > a && x < b) pts.push_back(x);
  }
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (a == b) return f(a) * 0.0;
  // Coarse pass sets the absolute target from the integral's magnitude.
  VectorXd coarse;
  std::vector<VectorXd> pieces;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    VectorXd k, g;
    gk15(f, pts[i], pts[i + 1], k, g);
    coarse = (i == 0) ? k : VectorXd(coarse + k);
  }
  const double scale = coarse.lpNorm<Eigen::Infinity>();
  const double tol = std::max(abs_tol, rel_tol * scale);
  VectorXd total;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double share = tol * (pts[i + 1] - pts[i]) / (b - a);
    VectorXd piece = adapt(f, pts[i], pts[i + 1], share, max_depth);
    total = (i == 0) ? piece : VectorXd(total + piece);
  }
  return sign * total;
}

double integrate_adaptive_scalar(const std::function<double(double)>& f, double a, double b,
                                 const std::vector<double>& breaks, double rel_tol, double abs_tol,
                                 int max_depth) {
  auto g = [&f](double x) {
    VectorXd v(1);
    v(0) = f(x);
    return v;
  };
  return integrate_adaptive(g, a, b, breaks, rel_tol, abs_tol, max_depth)(0);
}

}  // namespace delayctl
