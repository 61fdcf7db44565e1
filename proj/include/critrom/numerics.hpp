#pragma once

// Dense linear algebra used on reduced and moderate-size problems: matrices,
// Jacobi symmetric eigensolver, method-of-snapshots SVD, basis truncation,
// Gauss-Seidel and Gaussian elimination, plus binary/CSV persistence.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "critrom/errors.hpp"

namespace critrom {

using Vector = std::vector<double>;

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_dims(data_.size() == rows_ * cols_, "DenseMatrix: data size != rows*cols");
  }
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      detail::require_dims(r.size() == cols_, "DenseMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector column(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }
  void set_column(std::size_t j, std::span<const double> v) {
    detail::require_dims(v.size() == rows_, "set_column: length mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
  }

  /// First `n` columns.
  DenseMatrix leading_columns(std::size_t n) const {
    detail::require_dims(n <= cols_, "leading_columns: too many columns requested");
    DenseMatrix out(rows_, n);
    for (std::size_t i = 0; i < rows_; ++i) {
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_), n, out.row(i).begin());
    }
    return out;
  }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Small vector / matrix helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double frobenius_norm(const DenseMatrix& m) { return norm2(m.data()); }

/// Max absolute row sum.
inline double norm_inf(const DenseMatrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double x : m.row(i)) s += std::abs(x);
    best = std::max(best, s);
  }
  return best;
}

inline Vector matvec(const DenseMatrix& a, std::span<const double> x) {
  detail::require_dims(a.cols() == x.size(), "matvec: dimension mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

/// a^T x
inline Vector matvec_transposed(const DenseMatrix& a, std::span<const double> x) {
  detail::require_dims(a.rows() == x.size(), "matvec_transposed: dimension mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_dims(a.cols() == b.rows(), "matmul: dimension mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

/// a^T b without forming the transpose.
inline DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_dims(a.rows() == b.rows(), "matmul_transposed: dimension mismatch");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ak = a.row(k);
    auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      auto ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

/// s^T s, symmetric by construction (upper triangle mirrored).
inline DenseMatrix gram(const DenseMatrix& s) {
  const std::size_t m = s.cols();
  DenseMatrix t = s.transpose();
  DenseMatrix g(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      const double v = dot(t.row(i), t.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

/// Flips the sign of each column so its largest-magnitude entry is positive.
/// Near-ties (within 1e-12 relative) resolve to the lowest row index.
inline void fix_column_signs(DenseMatrix& m) {
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double biggest = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) biggest = std::max(biggest, std::abs(m(i, j)));
    if (biggest == 0.0) continue;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j)) >= biggest * (1.0 - 1e-12)) {
        if (m(i, j) < 0.0) {
          for (std::size_t r = 0; r < m.rows(); ++r) m(r, j) = -m(r, j);
        }
        break;
      }
    }
  }
}

/// Two passes of modified Gram-Schmidt over the columns, in place.
inline void orthonormalize_columns(DenseMatrix& m) {
  const std::size_t n = m.rows();
  const std::size_t p = m.cols();
  DenseMatrix t = m.transpose();  // columns as contiguous rows
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < p; ++j) {
      auto vj = t.row(j);
      for (std::size_t k = 0; k < j; ++k) {
        auto vk = t.row(k);
        const double proj = dot(vk, vj);
        for (std::size_t i = 0; i < n; ++i) vj[i] -= proj * vk[i];
      }
      const double nrm = norm2(vj);
      if (!(nrm > 0.0)) throw NumericError("orthonormalize_columns: rank-deficient basis");
      for (double& x : vj) x /= nrm;
    }
  }
  m = t.transpose();
}

// ---------------------------------------------------------------------------
// Symmetric eigensolver (cyclic Jacobi)

struct SymmetricEigen {
  Vector values;        // descending
  DenseMatrix vectors;  // column k pairs with values[k]
};

struct JacobiOptions {
  int max_sweeps = 100;
};

inline SymmetricEigen symmetric_eig(const DenseMatrix& m, double tol = 1e-12,
                                    JacobiOptions opts = {}) {
  const std::size_t n = m.rows();
  detail::require_dims(m.cols() == n, "symmetric_eig: matrix must be square");
  for (double x : m.data()) {
    if (!std::isfinite(x)) throw DomainError("symmetric_eig: non-finite entry");
  }
  const double fro = frobenius_norm(m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol * fro) {
        throw DomainError("symmetric_eig: matrix is not symmetric");
      }

  DenseMatrix a = m;
  DenseMatrix v = DenseMatrix::identity(n);
  const double target = tol * fro;
  bool converged = n <= 1 || fro == 0.0;

  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (std::sqrt(off) <= target) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Negligible against both diagonals: drop it rather than rotate.
        if (sweep > 3 && std::abs(apq) < 1e-18 * std::abs(app) &&
            std::abs(apq) < 1e-18 * std::abs(aqq)) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        auto rp = a.row(p);
        auto rq = a.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = rp[k];
          const double aqk = rq[k];
          rp[k] = c * apk - s * aqk;
          rq[k] = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (std::sqrt(off) > target) {
      throw NumericError("symmetric_eig: Jacobi did not converge in " +
                         std::to_string(opts.max_sweeps) + " sweeps");
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  fix_column_signs(out.vectors);
  return out;
}

// ---------------------------------------------------------------------------
// POD via the method of snapshots

struct SvdResult {
  Vector singular_values;   // non-increasing, strictly positive
  DenseMatrix left_vectors; // N x K, orthonormal columns
};

/// Modes with mu_k <= M * eps * mu_1 are dropped: that is the rounding floor
/// of the eigenvalues of the M x M Gram matrix S^T S.
inline double snapshot_rank_tol(std::size_t m) {
  return static_cast<double>(m) * std::numeric_limits<double>::epsilon();
}

inline SvdResult method_of_snapshots(const DenseMatrix& snapshots) {
  if (snapshots.rows() == 0 || snapshots.cols() == 0) {
    throw DimensionError("method_of_snapshots: empty snapshot matrix");
  }
  const DenseMatrix g = gram(snapshots);
  const SymmetricEigen eig = symmetric_eig(g, 1e-14);
  const double mu1 = eig.values.front();
  if (!(mu1 > 0.0)) throw DomainError("method_of_snapshots: snapshot matrix is all zero");

  std::size_t kept = 0;
  while (kept < eig.values.size() && eig.values[kept] > snapshot_rank_tol(g.rows()) * mu1) ++kept;

  SvdResult out;
  out.singular_values.resize(kept);
  const DenseMatrix phi = eig.vectors.leading_columns(kept);
  out.left_vectors = matmul(snapshots, phi);
  for (std::size_t k = 0; k < kept; ++k) {
    const double sigma = std::sqrt(eig.values[k]);
    out.singular_values[k] = sigma;
    for (std::size_t i = 0; i < out.left_vectors.rows(); ++i) out.left_vectors(i, k) /= sigma;
  }
  // S*phi/sigma loses orthogonality for small sigma; restore it.
  orthonormalize_columns(out.left_vectors);
  fix_column_signs(out.left_vectors);
  return out;
}

struct CaptureFraction {
  double gamma;
};
struct BasisCount {
  std::size_t count;
};
using TruncationCriterion = std::variant<CaptureFraction, BasisCount>;

/// Fraction of sum(sigma^2) carried by the first `count` singular values.
inline double capture_fraction(const SvdResult& svd, std::size_t count) {
  double total = 0.0;
  double head = 0.0;
  for (std::size_t i = 0; i < svd.singular_values.size(); ++i) {
    const double e = svd.singular_values[i] * svd.singular_values[i];
    total += e;
    if (i < count) head += e;
  }
  return total > 0.0 ? head / total : 0.0;
}

/// Number of leading modes needed to reach capture fraction gamma.
inline std::size_t basis_size_for(const SvdResult& svd, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("truncate_basis: gamma must be in (0,1]");
  double total = 0.0;
  for (double s : svd.singular_values) total += s * s;
  double cum = 0.0;
  std::size_t p = 0;
  while (p < svd.singular_values.size()) {
    cum += svd.singular_values[p] * svd.singular_values[p];
    ++p;
    if (cum >= gamma * total) break;
  }
  return p;
}

inline DenseMatrix truncate_basis(const SvdResult& svd, const TruncationCriterion& criterion) {
  std::size_t p = 0;
  if (const auto* frac = std::get_if<CaptureFraction>(&criterion)) {
    p = basis_size_for(svd, frac->gamma);
  } else {
    p = std::get<BasisCount>(criterion).count;
    if (p < 1 || p > svd.singular_values.size()) {
      throw DomainError("truncate_basis: requested " + std::to_string(p) + " of " +
                        std::to_string(svd.singular_values.size()) + " available modes");
    }
  }
  return svd.left_vectors.leading_columns(p);
}

// ---------------------------------------------------------------------------
// Linear solvers

struct IterativeSolve {
  Vector x;
  bool converged = false;
  int sweeps = 0;
};

/// Symmetric (forward then backward) Gauss-Seidel on a dense matrix. Stops
/// once ||A x - rhs||_inf <= tol * ||rhs||_inf.
inline IterativeSolve gauss_seidel(const DenseMatrix& a, std::span<const double> rhs,
                                   std::span<const double> x0, double tol, int max_sweeps) {
  const std::size_t n = a.rows();
  detail::require_dims(a.cols() == n, "gauss_seidel: matrix must be square");
  detail::require_dims(rhs.size() == n && x0.size() == n, "gauss_seidel: vector length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (a(i, i) == 0.0) throw DomainError("gauss_seidel: zero diagonal in row " + std::to_string(i));
  }
  IterativeSolve out;
  out.x.assign(x0.begin(), x0.end());
  Vector& x = out.x;
  const double target = tol * norm_inf(rhs);

  auto relax = [&](std::size_t i) {
    auto r = a.row(i);
    double s = rhs[i];
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) s -= r[j] * x[j];
    x[i] = s / r[i];
  };
  auto residual = [&] {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(dot(a.row(i), x) - rhs[i]));
    return worst;
  };

  if (residual() <= target) {
    out.converged = true;
    return out;
  }
  while (out.sweeps < max_sweeps) {
    for (std::size_t i = 0; i < n; ++i) relax(i);
    for (std::size_t i = n; i-- > 0;) relax(i);
    ++out.sweeps;
    if (residual() <= target) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Direct solve with partial pivoting.
inline Vector gaussian_elimination(const DenseMatrix& a, std::span<const double> rhs) {
  const std::size_t n = a.rows();
  detail::require_dims(a.cols() == n, "gaussian_elimination: matrix must be square");
  detail::require_dims(rhs.size() == n, "gaussian_elimination: rhs length mismatch");
  DenseMatrix lu = a;
  Vector b(rhs.begin(), rhs.end());
  const double scale = norm_inf(a);
  const double tiny = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu(i, k)) > best) {
        best = std::abs(lu(i, k));
        piv = i;
      }
    }
    if (!(best > tiny) || !std::isfinite(best)) {
      throw NumericError("gaussian_elimination: matrix is singular to working precision (column " +
                         std::to_string(k) + ")");
    }
    if (piv != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(piv).begin());
      std::swap(b[k], b[piv]);
    }
    auto rk = lu.row(k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / rk[k];
      if (f == 0.0) continue;
      auto ri = lu.row(i);
      for (std::size_t j = k; j < n; ++j) ri[j] -= f * rk[j];
      b[i] -= f * b[k];
    }
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
    x[i] = s / lu(i, i);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Persistence
//
// Binary layout (little-endian): 8-byte magic "CRMAT01\0", uint32 rows,
// uint32 cols, then rows*cols IEEE-754 float64 values in row-major order.

inline constexpr std::array<char, 8> kMatrixMagic{'C', 'R', 'M', 'A', 'T', '0', '1', '\0'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16),
                                       static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline void write_matrix(std::ostream& out, const DenseMatrix& m) {
  out.write(kMatrixMagic.data(), kMatrixMagic.size());
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) detail::put_f64(out, v);
}

inline DenseMatrix read_matrix(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMatrixMagic) throw ConfigError("read_matrix: bad magic");
  const std::uint32_t rows = detail::get_u32(in);
  const std::uint32_t cols = detail::get_u32(in);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = detail::get_f64(in);
  if (!in) throw ConfigError("read_matrix: truncated payload");
  return m;
}

inline void save_matrix(const std::string& path, const DenseMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_matrix(out, m);
}

inline DenseMatrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  return read_matrix(in);
}

inline void write_csv(std::ostream& out, const DenseMatrix& m) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const DenseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_csv(out, m);
}

/// Column vector view of a Vector as an n x 1 matrix.
inline DenseMatrix as_column(std::span<const double> v) {
  return DenseMatrix(v.size(), 1, Vector(v.begin(), v.end()));
}

}  // namespace critrom
