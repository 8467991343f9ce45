#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splr/linalg.hpp"
#include "splr/quadrature.hpp"
#include "splr/samples.hpp"

namespace splr {

enum class basis_kind { legendre, piecewise_legendre, multiwavelet };

inline std::string to_string(basis_kind k) {
  switch (k) {
  case basis_kind::legendre: return "legendre";
  case basis_kind::piecewise_legendre: return "piecewise_legendre";
  case basis_kind::multiwavelet: return "multiwavelet";
  }
  return "unknown";
}

/// Absolute slack allowed outside the interval before a point is rejected.
inline constexpr double domain_slack = 1e-12;

namespace detail {

/// Normalized Legendre values sqrt(2j+1) P_j(t), j = 0..degree, into out[0..degree].
inline void normalized_legendre(int degree, double t, double* out) {
  double p0 = 1.0;
  out[0] = 1.0;
  if (degree == 0) return;
  double p1 = t;
  out[1] = std::sqrt(3.0) * t;
  for (int k = 2; k <= degree; ++k) {
    const double pk = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
    out[k] = std::sqrt(2.0 * k + 1.0) * pk;
  }
}

} // namespace detail

/// Orthonormal family on an interval under the uniform probability measure.
///
/// Every kind is a polynomial of degree `degree` on each cell of a uniform
/// partition (1 cell for Legendre, `pieces` cells for piecewise Legendre,
/// 2^levels cells for multiwavelets). Cells are half-open [a_i, a_{i+1})
/// except the last, which is closed.
///
/// Multiwavelets follow the Alpert hierarchy: the degree+1 Legendre scaling
/// functions on the whole interval, then for each level l < levels and each
/// level-l cell, degree+1 functions spanning the orthogonal complement of
/// the polynomials on that cell inside the piecewise polynomials on its two
/// halves. They are stored as an orthogonal transform of the piecewise
/// Legendre basis on the finest partition, so inner products are exact.
class univariate_basis {
public:
  static univariate_basis legendre(int degree, interval domain) {
    check_degree(degree);
    return univariate_basis(basis_kind::legendre, degree, 1, 0, domain);
  }

  static univariate_basis piecewise_legendre(int degree, int pieces, interval domain) {
    check_degree(degree);
    if (pieces < 1) throw invalid_argument("piecewise_legendre: pieces must be >= 1");
    return univariate_basis(basis_kind::piecewise_legendre, degree, pieces, 0, domain);
  }

  static univariate_basis multiwavelet(int degree, int levels, interval domain) {
    check_degree(degree);
    if (levels < 0 || levels > 20) throw invalid_argument("multiwavelet: levels must be in [0, 20]");
    univariate_basis b(basis_kind::multiwavelet, degree, 1 << levels, levels, domain);
    b.transform_ = std::make_shared<const matrix>(build_multiwavelet_transform(degree, levels));
    return b;
  }

  basis_kind kind() const { return kind_; }
  int degree() const { return degree_; }
  /// Number of polynomial cells of the finest partition.
  int cells() const { return cells_; }
  /// Partition count for piecewise Legendre, 1 for Legendre, 2^levels for multiwavelets.
  int pieces() const { return cells_; }
  int levels() const { return levels_; }
  const interval& domain() const { return domain_; }
  index_t size() const { return static_cast<index_t>(degree_ + 1) * cells_; }

  /// Cell containing y; throws out_of_domain beyond the slack.
  int locate(double y) const {
    if (!(y >= domain_.lower - domain_slack && y <= domain_.upper + domain_slack))
      throw out_of_domain("point " + std::to_string(y) + " outside [" + std::to_string(domain_.lower) +
                          ", " + std::to_string(domain_.upper) + "]");
    const double s = (y - domain_.lower) / domain_.width() * cells_;
    int cell = static_cast<int>(std::floor(s));
    if (cell < 0) cell = 0;
    if (cell >= cells_) cell = cells_ - 1;
    return cell;
  }

  /// Writes (phi_1(y), ..., phi_n(y)) into out[0..size()).
  void eval_into(double y, double* out) const {
    const int cell = locate(y);
    const int np = degree_ + 1;
    const double h = domain_.width() / cells_;
    const double left = domain_.lower + h * cell;
    double t = 2.0 * (y - left) / h - 1.0;
    t = std::clamp(t, -1.0, 1.0);
    double local[64];
    std::vector<double> big;
    double* loc = local;
    if (np > 64) {
      big.resize(np);
      loc = big.data();
    }
    detail::normalized_legendre(degree_, t, loc);
    const double scale = std::sqrt(static_cast<double>(cells_));
    const index_t n = size();
    switch (kind_) {
    case basis_kind::legendre:
      for (int j = 0; j < np; ++j) out[j] = loc[j];
      break;
    case basis_kind::piecewise_legendre:
      for (index_t i = 0; i < n; ++i) out[i] = 0.0;
      for (int j = 0; j < np; ++j) out[cell * np + j] = scale * loc[j];
      break;
    case basis_kind::multiwavelet: {
      const matrix& tr = *transform_;
      for (index_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < np; ++j) acc += tr(i, cell * np + j) * loc[j];
        out[i] = scale * acc;
      }
      break;
    }
    }
  }

  vector eval(double y) const {
    vector out(size());
    eval_into(y, out.data());
    return out;
  }

  /// Q x n matrix of basis values at the given coordinates.
  matrix eval_many(const Eigen::Ref<const vector>& ys) const {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(ys.size(), size());
    for (index_t q = 0; q < ys.size(); ++q) eval_into(ys[q], out.row(q).data());
    return out;
  }

  /// Multiwavelet coefficients in the finest piecewise Legendre basis (one row per function).
  const matrix* transform() const { return transform_.get(); }

  bool operator==(const univariate_basis& o) const {
    return kind_ == o.kind_ && degree_ == o.degree_ && cells_ == o.cells_ && levels_ == o.levels_ &&
           domain_ == o.domain_;
  }

private:
  univariate_basis(basis_kind kind, int degree, int cells, int levels, interval domain)
      : kind_(kind), degree_(degree), cells_(cells), levels_(levels), domain_(domain) {}

  static void check_degree(int degree) {
    if (degree < 0 || degree > 60) throw invalid_argument("basis degree must be in [0, 60]");
  }

  // Coefficients, in the finest normalized piecewise Legendre basis on [0,1]
  // with `fine` cells, of f restricted to [a, b] (a, b on the fine grid).
  template <class F>
  static vector project_fine(int degree, int fine, double a, double b, F&& f) {
    const int np = degree + 1;
    vector coef = vector::Zero(static_cast<index_t>(np) * fine);
    const auto rule = gauss_legendre(np + 1);
    const double h = 1.0 / fine;
    const int first = static_cast<int>(std::lround(a / h));
    const int last = static_cast<int>(std::lround(b / h));
    std::vector<double> loc(np);
    for (int c = first; c < last; ++c) {
      const double left = c * h;
      for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
        const double t = rule.nodes[g];
        const double x = left + 0.5 * h * (t + 1.0);
        detail::normalized_legendre(degree, t, loc.data());
        // fine basis function = sqrt(fine) * loc; measure dx on [0,1]
        const double fx = f(x);
        const double w = rule.weights[g] * 0.5 * h * std::sqrt(static_cast<double>(fine));
        for (int j = 0; j < np; ++j) coef[c * np + j] += w * fx * loc[j];
      }
    }
    return coef;
  }

  static matrix build_multiwavelet_transform(int degree, int levels) {
    const int np = degree + 1;
    const int fine = 1 << levels;
    const index_t n = static_cast<index_t>(np) * fine;
    matrix rows(n, n);
    index_t count = 0;
    std::vector<double> loc(np);

    // polynomial of local degree j on [a, b], normalized on that cell
    auto cell_poly = [&](int j, double a, double b) {
      return project_fine(degree, fine, a, b, [&, j, a, b](double x) {
        const double t = 2.0 * (x - a) / (b - a) - 1.0;
        detail::normalized_legendre(degree, t, loc.data());
        return loc[j] * std::sqrt(1.0 / (b - a));
      });
    };

    for (int j = 0; j < np; ++j) rows.row(count++) = cell_poly(j, 0.0, 1.0).transpose();

    for (int level = 0; level < levels; ++level) {
      const int cells = 1 << level;
      const double h = 1.0 / cells;
      for (int m = 0; m < cells; ++m) {
        const double a = m * h;
        for (int j = 0; j < np; ++j) {
          vector v = cell_poly(j, a, a + 0.5 * h);
          // two passes of classical Gram-Schmidt against every coarser function
          for (int pass = 0; pass < 2; ++pass) {
            const vector proj = rows.topRows(count) * v;
            v.noalias() -= rows.topRows(count).transpose() * proj;
          }
          const double norm = v.norm();
          if (!(norm > 1e-8)) throw error("multiwavelet construction lost rank");
          rows.row(count++) = (v / norm).transpose();
        }
      }
    }
    return rows;
  }

  basis_kind kind_;
  int degree_;
  int cells_;
  int levels_;
  interval domain_;
  std::shared_ptr<const matrix> transform_;
};

/// Per-dimension univariate bases; the full tensor space is never materialized.
class tensor_basis {
public:
  tensor_basis() = default;
  explicit tensor_basis(std::vector<univariate_basis> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw invalid_argument("tensor_basis: need at least one dimension");
  }

  index_t dimension() const { return static_cast<index_t>(factors_.size()); }
  const univariate_basis& operator[](index_t k) const { return factors_[static_cast<std::size_t>(k)]; }
  const std::vector<univariate_basis>& factors() const { return factors_; }

  /// prod_k n_k as a double (can exceed 64-bit for large d).
  double full_size() const {
    double p = 1.0;
    for (const auto& f : factors_) p *= static_cast<double>(f.size());
    return p;
  }

  index_t factor_size_sum() const {
    index_t s = 0;
    for (const auto& f : factors_) s += f.size();
    return s;
  }

  bool operator==(const tensor_basis&) const = default;

private:
  std::vector<univariate_basis> factors_;
};

inline vector eval_univariate(const univariate_basis& basis, double y) { return basis.eval(y); }

/// Design matrix of dimension `dim`: (Phi)_{qi} = phi_i(y_q,dim) * weights_q.
/// Without weights this is the plain one-dimensional design.
inline matrix design_matrix(const tensor_basis& basis, const sample_set& points, index_t dim,
                            const std::optional<vector>& weights = std::nullopt) {
  if (points.dimension() != basis.dimension())
    throw invalid_argument("design_matrix: sample dimension does not match basis");
  if (dim < 0 || dim >= basis.dimension()) throw invalid_argument("design_matrix: dimension out of range");
  matrix phi = basis[dim].eval_many(points.points.col(dim));
  if (weights) {
    if (weights->size() != points.size()) throw invalid_argument("design_matrix: weight count mismatch");
    phi = weights->asDiagonal() * phi;
  }
  return phi;
}

/// Product weights prod_{k != dim} w^(k)(y_k^q) from per-dimension coefficient vectors.
inline vector factor_weights(const tensor_basis& basis, const sample_set& points,
                             const std::vector<vector>& factors, index_t dim) {
  vector w = vector::Ones(points.size());
  for (index_t k = 0; k < basis.dimension(); ++k) {
    if (k == dim) continue;
    w = w.cwiseProduct(basis[k].eval_many(points.points.col(k)) * factors[static_cast<std::size_t>(k)]);
  }
  return w;
}

/// Integral of phi_i phi_j against the uniform probability measure by
/// composite Gauss-Legendre quadrature, `quad_order` nodes per cell.
inline matrix gram_matrix(const univariate_basis& basis, int quad_order) {
  if (quad_order < basis.degree() + 1) throw invalid_argument("gram_matrix: quad_order below degree + 1");
  const auto rule = gauss_legendre(quad_order);
  const index_t n = basis.size();
  matrix gram = matrix::Zero(n, n);
  vector phi(n);
  const interval& dom = basis.domain();
  const double h = dom.width() / basis.cells();
  for (int c = 0; c < basis.cells(); ++c) {
    const double left = dom.lower + c * h;
    for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
      const double y = left + 0.5 * h * (rule.nodes[g] + 1.0);
      basis.eval_into(y, phi.data());
      gram.selfadjointView<Eigen::Lower>().rankUpdate(phi, rule.weights[g] * 0.5 * h / dom.width());
    }
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose().triangularView<Eigen::StrictlyUpper>();
  return gram;
}

} // namespace splr
