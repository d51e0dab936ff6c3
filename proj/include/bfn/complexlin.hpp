#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bfn/error.hpp"

namespace bfn {

using cplx = std::complex<double>;

/// Dense complex matrix stored as two row-major real planes.
class ComplexMatrix {
public:
    ComplexMatrix() = default;

    ComplexMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), re_(rows * cols, 0.0), im_(rows * cols, 0.0) {}

    ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<double> re, std::vector<double> im)
        : rows_(rows), cols_(cols), re_(std::move(re)), im_(std::move(im)) {
        if (re_.size() != rows * cols || im_.size() != rows * cols) {
            throw shape_error("ComplexMatrix planes hold " + std::to_string(re_.size()) + "/" +
                              std::to_string(im_.size()) + " entries, expected " +
                              std::to_string(rows * cols));
        }
    }

    static ComplexMatrix identity(std::size_t n) {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.re_[i * n + i] = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return re_.size(); }
    bool empty() const noexcept { return re_.empty(); }

    cplx operator()(std::size_t i, std::size_t j) const {
        return {re_[i * cols_ + j], im_[i * cols_ + j]};
    }
    void set(std::size_t i, std::size_t j, cplx v) {
        re_[i * cols_ + j] = v.real();
        im_[i * cols_ + j] = v.imag();
    }
    double& re(std::size_t i, std::size_t j) { return re_[i * cols_ + j]; }
    double& im(std::size_t i, std::size_t j) { return im_[i * cols_ + j]; }
    double re(std::size_t i, std::size_t j) const { return re_[i * cols_ + j]; }
    double im(std::size_t i, std::size_t j) const { return im_[i * cols_ + j]; }

    const std::vector<double>& re_plane() const noexcept { return re_; }
    const std::vector<double>& im_plane() const noexcept { return im_; }
    std::vector<double>& re_plane() noexcept { return re_; }
    std::vector<double>& im_plane() noexcept { return im_; }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    ComplexMatrix column(std::size_t j) const {
        ComplexMatrix c(rows_, 1);
        for (std::size_t i = 0; i < rows_; ++i) c.set(i, 0, (*this)(i, j));
        return c;
    }

    ComplexMatrix row(std::size_t i) const {
        ComplexMatrix r(1, cols_);
        for (std::size_t j = 0; j < cols_; ++j) r.set(0, j, (*this)(i, j));
        return r;
    }

    /// Columns [first, first + count).
    ComplexMatrix columns(std::size_t first, std::size_t count) const {
        ComplexMatrix c(rows_, count);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < count; ++j) c.set(i, j, (*this)(i, first + j));
        return c;
    }

    ComplexMatrix adjoint() const {
        ComplexMatrix h(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) {
                h.re_[j * rows_ + i] = re_[i * cols_ + j];
                h.im_[j * rows_ + i] = -im_[i * cols_ + j];
            }
        return h;
    }

    ComplexMatrix scaled(cplx s) const {
        ComplexMatrix out(rows_, cols_);
        for (std::size_t k = 0; k < re_.size(); ++k) {
            const cplx v = cplx(re_[k], im_[k]) * s;
            out.re_[k] = v.real();
            out.im_[k] = v.imag();
        }
        return out;
    }

    double frobenius_norm() const {
        double acc = 0.0;
        for (std::size_t k = 0; k < re_.size(); ++k) acc += re_[k] * re_[k] + im_[k] * im_[k];
        return std::sqrt(acc);
    }

    bool all_finite() const {
        return std::all_of(re_.begin(), re_.end(), [](double v) { return std::isfinite(v); }) &&
               std::all_of(im_.begin(), im_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> re_;
    std::vector<double> im_;
};

/// Dense real matrix, row-major.
struct RealMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    RealMatrix() = default;
    RealMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

namespace detail {

inline void require_same_shape(const ComplexMatrix& a, const ComplexMatrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw shape_error(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                          " differ");
    }
}

}  // namespace detail

inline ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b) {
    detail::require_same_shape(a, b, "add");
    ComplexMatrix out = a;
    for (std::size_t k = 0; k < a.size(); ++k) {
        out.re_plane()[k] += b.re_plane()[k];
        out.im_plane()[k] += b.im_plane()[k];
    }
    return out;
}

inline ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b) {
    detail::require_same_shape(a, b, "sub");
    ComplexMatrix out = a;
    for (std::size_t k = 0; k < a.size(); ++k) {
        out.re_plane()[k] -= b.re_plane()[k];
        out.im_plane()[k] -= b.im_plane()[k];
    }
    return out;
}

inline ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols() != b.rows()) {
        throw shape_error("matmul: " + a.shape_str() + " times " + b.shape_str());
    }
    const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
    ComplexMatrix c(n, m);
    const auto& ar = a.re_plane();
    const auto& ai = a.im_plane();
    const auto& br = b.re_plane();
    const auto& bi = b.im_plane();
    auto& cr = c.re_plane();
    auto& ci = c.im_plane();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < inner; ++k) {
            const double xr = ar[i * inner + k];
            const double xi = ai[i * inner + k];
            const double* brow = br.data() + k * m;
            const double* bimr = bi.data() + k * m;
            double* crow = cr.data() + i * m;
            double* cimr = ci.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) {
                crow[j] += xr * brow[j] - xi * bimr[j];
                cimr[j] += xr * bimr[j] + xi * brow[j];
            }
        }
    }
    return c;
}

inline cplx trace(const ComplexMatrix& h) {
    cplx t = 0.0;
    for (std::size_t i = 0; i < std::min(h.rows(), h.cols()); ++i) t += h(i, i);
    return t;
}

inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
    detail::require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        worst = std::max(worst, std::abs(cplx(a.re_plane()[k] - b.re_plane()[k],
                                              a.im_plane()[k] - b.im_plane()[k])));
    }
    return worst;
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending, eigenvectors as columns.
struct HermitianEigen {
    std::vector<double> values;
    ComplexMatrix vectors;
};

inline constexpr int kJacobiSweepBudget = 100;

namespace detail {

// In-place cyclic Jacobi on a dense real symmetric n×n matrix. On return `a`
// is (numerically) diagonal and `v` holds the accumulated rotations.
inline void jacobi_symmetric(std::vector<double>& a, std::vector<double>& v, std::size_t n) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    double frob = 0.0;
    for (double x : a) frob += x * x;
    frob = std::sqrt(frob);
    const double threshold = 1e-12 * frob;

    auto off_norm = [&] {
        double acc = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q)
                if (p != q) acc += a[p * n + q] * a[p * n + q];
        return std::sqrt(acc);
    };

    double off = off_norm();
    for (int sweep = 0; sweep < kJacobiSweepBudget && off > threshold; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        off = off_norm();
    }
    if (off > threshold) {
        std::ostringstream msg;
        msg << "hermitian_eig: Jacobi did not converge in " << kJacobiSweepBudget
            << " sweeps, off-diagonal norm " << off;
        throw convergence_error(msg.str(), off);
    }
}

}  // namespace detail

/// Hermitian eigendecomposition through the real symmetric embedding
/// [[Re, -Im], [Im, Re]]. Every eigenvalue appears twice in the embedding;
/// complex reconstructions u + jv of the real eigenvectors are orthogonalised
/// greedily and one representative is kept per complex direction.
inline HermitianEigen hermitian_eig(const ComplexMatrix& h) {
    if (h.rows() != h.cols()) throw shape_error("hermitian_eig: matrix " + h.shape_str() + " is not square");
    const std::size_t n = h.rows();
    double scale = 1.0;
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            scale = std::max(scale, std::abs(h(i, j)));
            asym = std::max(asym, std::abs(h(i, j) - std::conj(h(j, i))));
        }
    if (asym > 1e-9 * scale) {
        std::ostringstream msg;
        msg << "hermitian_eig: matrix is not Hermitian (max |H - H^H| = " << asym << ")";
        throw validation_error(msg.str());
    }

    const std::size_t n2 = 2 * n;
    std::vector<double> emb(n2 * n2, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const cplx v = 0.5 * (h(i, j) + std::conj(h(j, i)));
            emb[i * n2 + j] = v.real();
            emb[i * n2 + (j + n)] = -v.imag();
            emb[(i + n) * n2 + j] = v.imag();
            emb[(i + n) * n2 + (j + n)] = v.real();
        }
    std::vector<double> rot;
    detail::jacobi_symmetric(emb, rot, n2);

    std::vector<std::size_t> order(n2);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return emb[x * n2 + x] > emb[y * n2 + y];
    });

    std::vector<std::vector<cplx>> accepted;
    std::vector<bool> used(n2, false);
    auto residual_of = [&](std::size_t col) {
        std::vector<cplx> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = cplx(rot[i * n2 + col], rot[(i + n) * n2 + col]);
        for (const auto& u : accepted) {
            cplx dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += std::conj(u[i]) * w[i];
            for (std::size_t i = 0; i < n; ++i) w[i] -= dot * u[i];
        }
        return w;
    };
    auto norm2 = [](const std::vector<cplx>& w) {
        double acc = 0.0;
        for (const auto& x : w) acc += std::norm(x);
        return acc;
    };

    while (accepted.size() < n) {
        std::size_t pick = n2;
        std::size_t best = n2;
        double best_norm = -1.0;
        std::vector<cplx> pick_w;
        std::vector<cplx> best_w;
        for (std::size_t col : order) {
            if (used[col]) continue;
            auto w = residual_of(col);
            const double r = norm2(w);
            if (r >= 0.5) {
                pick = col;
                pick_w = std::move(w);
                break;
            }
            if (r > best_norm) {
                best_norm = r;
                best = col;
                best_w = std::move(w);
            }
        }
        if (pick == n2) {
            pick = best;
            pick_w = std::move(best_w);
        }
        used[pick] = true;
        const double r = std::sqrt(norm2(pick_w));
        for (auto& x : pick_w) x /= r;
        accepted.push_back(std::move(pick_w));
    }

    // Rayleigh quotients give the eigenvalue of each kept direction.
    std::vector<double> values(n);
    for (std::size_t k = 0; k < n; ++k) {
        cplx q = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cplx hv = 0.0;
            for (std::size_t j = 0; j < n; ++j) hv += h(i, j) * accepted[k][j];
            q += std::conj(accepted[k][i]) * hv;
        }
        values[k] = q.real();
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return values[x] > values[y]; });

    HermitianEigen out;
    out.values.resize(n);
    out.vectors = ComplexMatrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = values[idx[k]];
        for (std::size_t i = 0; i < n; ++i) out.vectors.set(i, k, accepted[idx[k]][i]);
    }
    return out;
}

namespace detail {

// Cholesky factor of a Hermitian positive definite matrix. Returns false if a
// pivot falls to or below `min_pivot`.
inline bool cholesky(const ComplexMatrix& g, ComplexMatrix& l, double min_pivot) {
    const std::size_t n = g.rows();
    l = ComplexMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = g(j, j).real();
        for (std::size_t k = 0; k < j; ++k) d -= std::norm(l(j, k));
        if (!(d > min_pivot)) return false;
        const double ljj = std::sqrt(d);
        l.set(j, j, ljj);
        for (std::size_t i = j + 1; i < n; ++i) {
            cplx s = g(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
            l.set(i, j, s / ljj);
        }
    }
    return true;
}

inline ComplexMatrix cholesky_solve(const ComplexMatrix& l, const ComplexMatrix& b) {
    const std::size_t n = l.rows();
    ComplexMatrix y = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            cplx s = y(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y(k, c);
            y.set(i, c, s / l(i, i).real());
        }
        for (std::size_t i = n; i-- > 0;) {
            cplx s = y(i, c);
            for (std::size_t k = i + 1; k < n; ++k) s -= std::conj(l(k, i)) * y(k, c);
            y.set(i, c, s / l(i, i).real());
        }
    }
    return y;
}

}  // namespace detail

/// Solves G·x = b for Hermitian positive definite G. Throws singular_error when
/// a Cholesky pivot drops below 1e-14·trace(G).
inline ComplexMatrix solve_hermitian_pd(const ComplexMatrix& g, const ComplexMatrix& b) {
    if (g.rows() != g.cols() || g.rows() != b.rows()) {
        throw shape_error("solve_hermitian_pd: " + g.shape_str() + " with rhs " + b.shape_str());
    }
    const double tr = trace(g).real();
    ComplexMatrix l;
    if (!detail::cholesky(g, l, 1e-14 * std::max(tr, 1e-300))) {
        throw singular_error("matrix is singular or not positive definite");
    }
    return detail::cholesky_solve(l, b);
}

struct LeastSquares {
    ComplexMatrix solution;
    double residual = 0.0;  // ‖a·x − y‖_F
};

/// Minimum-norm least squares via normal equations. A ridge of
/// 1e-12·trace(G) is added to the Gram matrix only when it is rank deficient.
inline LeastSquares lstsq(const ComplexMatrix& a, const ComplexMatrix& y) {
    if (a.rows() != y.rows()) {
        throw shape_error("lstsq: system " + a.shape_str() + " with rhs " + y.shape_str());
    }
    const bool tall = a.rows() >= a.cols();
    const ComplexMatrix ah = a.adjoint();
    ComplexMatrix g = tall ? matmul(ah, a) : matmul(a, ah);
    const double tr = trace(g).real();

    ComplexMatrix l;
    if (!detail::cholesky(g, l, 1e-12 * tr)) {
        const double ridge = 1e-12 * std::max(tr, 1e-300);
        for (std::size_t i = 0; i < g.rows(); ++i) g.re(i, i) += ridge;
        if (!detail::cholesky(g, l, 0.0)) throw singular_error("lstsq: Gram matrix is zero");
    }
    LeastSquares out;
    out.solution = tall ? detail::cholesky_solve(l, matmul(ah, y)) : matmul(ah, detail::cholesky_solve(l, y));
    out.residual = (matmul(a, out.solution) - y).frobenius_norm();
    return out;
}

}  // namespace bfn
