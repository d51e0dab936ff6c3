#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bfn/array_model.hpp"
#include "bfn/complexlin.hpp"
#include "bfn/error.hpp"

namespace bfn {

/// R×M filter; row i is b_iᴴ.
struct SpatialFilter {
    ComplexMatrix B;
    std::string method;
};

struct SpatialSpectrum {
    std::vector<double> P;    // mean energy per grid over the snapshots
    std::vector<double> rho;  // tanh(P)

    static SpatialSpectrum from_energy(std::vector<double> p) {
        SpatialSpectrum s;
        s.rho.resize(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) s.rho[i] = std::tanh(p[i]);
        s.P = std::move(p);
        return s;
    }

    std::size_t size() const noexcept { return P.size(); }
};

inline SpatialFilter cbf_filter(const ComplexMatrix& A) {
    return {A.adjoint().scaled(1.0 / static_cast<double>(A.rows())), "cbf"};
}

inline constexpr double kDefaultMvdrLoading = 1e-6;

/// Covariance XXᴴ.
inline ComplexMatrix gram(const ComplexMatrix& X) { return matmul(X, X.adjoint()); }

/// Capon filter from R̂ = XXᴴ + loading·(tr(XXᴴ)/M)·I.
inline SpatialFilter mvdr_filter_from_covariance(ComplexMatrix cov, const ComplexMatrix& A, double loading) {
    if (!(loading >= 0.0)) throw validation_error("MVDR loading must be non-negative");
    if (cov.rows() != A.rows() || cov.cols() != A.rows()) {
        throw shape_error("mvdr: covariance " + cov.shape_str() + " with manifold " + A.shape_str());
    }
    const std::size_t M = A.rows(), R = A.cols();
    const double level = loading * trace(cov).real() / static_cast<double>(M);
    for (std::size_t i = 0; i < M; ++i) cov.re(i, i) += level;
    ComplexMatrix w;
    try {
        w = solve_hermitian_pd(cov, A);
    } catch (const singular_error&) {
        throw singular_error("MVDR covariance is singular; use a positive diagonal loading");
    }
    ComplexMatrix B(R, M);
    for (std::size_t i = 0; i < R; ++i) {
        cplx denom = 0.0;
        for (std::size_t j = 0; j < M; ++j) denom += std::conj(A(j, i)) * w(j, i);
        for (std::size_t j = 0; j < M; ++j) B.set(i, j, std::conj(w(j, i) / denom.real()));
    }
    return {std::move(B), "mvdr"};
}

inline SpatialFilter mvdr_filter(const ComplexMatrix& X, const ComplexMatrix& A, double loading = kDefaultMvdrLoading) {
    if (X.rows() != A.rows()) throw shape_error("mvdr: X " + X.shape_str() + " with manifold " + A.shape_str());
    return mvdr_filter_from_covariance(gram(X), A, loading);
}

inline constexpr double kMusicFloor = 1e-12;

/// Noise-subspace eigenvectors (the M−K smallest) of XXᴴ/T.
inline ComplexMatrix music_noise_subspace(const ComplexMatrix& X, std::size_t K) {
    const std::size_t M = X.rows();
    if (K < 1 || K >= M) throw validation_error("MUSIC needs 1 <= K < M (K=" + std::to_string(K) + ", M=" + std::to_string(M) + ")");
    const auto eig = hermitian_eig(gram(X).scaled(1.0 / static_cast<double>(X.cols())));
    return eig.vectors.columns(K, M - K);
}

inline SpatialSpectrum music_spectrum(const ComplexMatrix& X, const ComplexMatrix& A, std::size_t K) {
    if (X.rows() != A.rows()) throw shape_error("music: X " + X.shape_str() + " with manifold " + A.shape_str());
    const ComplexMatrix en = music_noise_subspace(X, K);
    const ComplexMatrix proj = matmul(en.adjoint(), A);  // (M−K)×R
    std::vector<double> p(A.cols());
    for (std::size_t i = 0; i < A.cols(); ++i) {
        double d = 0.0;
        for (std::size_t k = 0; k < proj.rows(); ++k) d += std::norm(proj(k, i));
        p[i] = 1.0 / std::max(d, kMusicFloor);
    }
    return SpatialSpectrum::from_energy(std::move(p));
}

/// P_i = b_iᴴ XXᴴ b_i / T from the covariance.
inline SpatialSpectrum spectrum_from_filter(const SpatialFilter& filter, const ComplexMatrix& X) {
    const ComplexMatrix& B = filter.B;
    if (B.cols() != X.rows()) throw shape_error("spectrum: filter " + B.shape_str() + " with X " + X.shape_str());
    const ComplexMatrix cov = gram(X);
    const ComplexMatrix bc = matmul(B, cov);
    std::vector<double> p(B.rows());
    const double inv_t = 1.0 / static_cast<double>(X.cols());
    for (std::size_t i = 0; i < B.rows(); ++i) {
        cplx acc = 0.0;
        for (std::size_t j = 0; j < B.cols(); ++j) acc += bc(i, j) * std::conj(B(i, j));
        p[i] = std::max(acc.real() * inv_t, 0.0);
    }
    return SpatialSpectrum::from_energy(std::move(p));
}

/// Mean(Abs(P')²) over the snapshot axis of a filter output P' = BX.
inline SpatialSpectrum spectrum_from_output(const ComplexMatrix& output) {
    std::vector<double> p(output.rows(), 0.0);
    for (std::size_t i = 0; i < output.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < output.cols(); ++t) acc += std::norm(output(i, t));
        p[i] = acc / static_cast<double>(output.cols());
    }
    return SpatialSpectrum::from_energy(std::move(p));
}

struct Peak {
    std::size_t index = 0;
    double angle = 0.0;  // radians
    double energy = 0.0;
};

/// Keeps grids with rho >= threshold and returns the local maxima of P inside
/// each contiguous run of kept grids, strongest first. A flat top counts once,
/// at its leftmost index.
inline std::vector<Peak> peak_search(const SpatialSpectrum& spec, const AngleGrid& grid, double threshold) {
    if (!(threshold >= 0.0 && threshold < 1.0)) throw validation_error("peak threshold must lie in [0, 1)");
    if (spec.size() != grid.size()) throw shape_error("peak_search: spectrum length differs from grid size");
    const std::size_t R = spec.size();
    std::vector<Peak> peaks;
    std::size_t i = 0;
    while (i < R) {
        if (spec.rho[i] < threshold) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < R && spec.rho[end] >= threshold) ++end;
        // run [i, end): scan plateaus
        std::size_t a = i;
        while (a < end) {
            std::size_t b = a;
            while (b + 1 < end && spec.P[b + 1] == spec.P[a]) ++b;
            const bool left_ok = a == i || spec.P[a - 1] < spec.P[a];
            const bool right_ok = b + 1 == end || spec.P[b + 1] < spec.P[a];
            if (left_ok && right_ok) peaks.push_back({a, grid[a], spec.P[a]});
            a = b + 1;
        }
        i = end;
    }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.energy > y.energy; });
    return peaks;
}

/// W = |B·A| element-wise; rows index the filter grid, columns the source grid.
inline RealMatrix weighting_matrix(const SpatialFilter& filter, const ComplexMatrix& A) {
    const ComplexMatrix w = matmul(filter.B, A);
    RealMatrix out(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = std::abs(w(i, j));
    return out;
}

inline constexpr double kSnrCapDb = 300.0;

struct SnrReport {
    double snr_in_db = 0.0;
    double snr_out_db = 0.0;
};

/// Input SNR ‖AS‖²/‖N‖² against output SNR ‖BAS‖²/‖BN‖², in dB. A filter
/// that removes all noise is capped at +300 dB; no signal reads −300 dB.
inline SnrReport output_snr_db(const ComplexMatrix& B, const ComplexMatrix& a_active, const ComplexMatrix& S, const ComplexMatrix& N) {
    auto ratio_db = [](double sig, double noise) {
        if (sig <= 0.0) return -kSnrCapDb;
        if (noise <= 0.0) return kSnrCapDb;
        return std::clamp(10.0 * std::log10(sig / noise), -kSnrCapDb, kSnrCapDb);
    };
    const ComplexMatrix as = matmul(a_active, S);
    const double sig_in = std::pow(as.frobenius_norm(), 2);
    const double noise_in = std::pow(N.frobenius_norm(), 2);
    const double sig_out = std::pow(matmul(B, as).frobenius_norm(), 2);
    const double noise_out = std::pow(matmul(B, N).frobenius_norm(), 2);
    return {ratio_db(sig_in, noise_in), ratio_db(sig_out, noise_out)};
}

// ---------------------------------------------------------------------------
// Oracle optimal filter: b_iᴴ[A_active | N_sub] = [e_iᵀ | 0].

/// Orthonormal basis of span(N) from eigenvectors of NNᴴ above rel_tol·λ_max.
inline ComplexMatrix noise_subspace_basis(const ComplexMatrix& N, double rel_tol = 1e-10) {
    const auto eig = hermitian_eig(gram(N));
    const double top = eig.values.empty() ? 0.0 : eig.values.front();
    std::size_t r = 0;
    while (r < eig.values.size() && top > 0.0 && eig.values[r] > rel_tol * top) ++r;
    return eig.vectors.columns(0, r);
}

namespace detail {

inline ComplexMatrix oracle_constraints(const ComplexMatrix& a_active, const ComplexMatrix& noise_basis) {
    const std::size_t M = a_active.rows(), K = a_active.cols();
    const std::size_t r = noise_basis.empty() ? 0 : noise_basis.cols();
    if (!noise_basis.empty() && noise_basis.rows() != M) {
        throw shape_error("oracle: noise basis " + noise_basis.shape_str() + " with M=" + std::to_string(M));
    }
    if (K + r > M) {
        throw infeasible_error("oracle filter needs K + r <= M (K=" + std::to_string(K) + ", r=" + std::to_string(r) +
                               ", M=" + std::to_string(M) + ")");
    }
    ComplexMatrix c(M, K + r);
    for (std::size_t j = 0; j < M; ++j) {
        for (std::size_t k = 0; k < K; ++k) c.set(j, k, a_active(j, k));
        for (std::size_t k = 0; k < r; ++k) c.set(j, K + k, noise_basis(j, k));
    }
    return c;
}

}  // namespace detail

/// One filter row per active source (K×M): unit gain on its own steering
/// vector, nulls on the other sources and on the noise subspace.
inline SpatialFilter oracle_filter(const ComplexMatrix& a_active, const ComplexMatrix& noise_basis) {
    const ComplexMatrix c = detail::oracle_constraints(a_active, noise_basis);
    const std::size_t K = a_active.cols();
    ComplexMatrix rhs(c.cols(), K);
    for (std::size_t k = 0; k < K; ++k) rhs.set(k, k, 1.0);
    // bᴴC = eᵀ  <=>  Cᴴb = e
    const LeastSquares ls = lstsq(c.adjoint(), rhs);
    return {ls.solution.adjoint(), "oracle"};
}

/// Full-grid R×M oracle filter. Row i targets the sources labelled i; rows of
/// empty grids solve the all-zero system, whose minimum-norm answer is 0.
inline SpatialFilter oracle_grid_filter(const ComplexMatrix& a_active, const std::vector<std::uint32_t>& labels,
                                        std::size_t R, const ComplexMatrix& noise_basis) {
    if (labels.size() != a_active.cols()) throw shape_error("oracle: one label per source required");
    const SpatialFilter per_source = oracle_filter(a_active, noise_basis);
    ComplexMatrix B(R, a_active.rows());
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] >= R) throw validation_error("oracle: label outside grid");
        for (std::size_t j = 0; j < B.cols(); ++j) B.set(labels[k], j, B(labels[k], j) + per_source.B(k, j));
    }
    return {std::move(B), "oracle"};
}

struct OracleResiduals {
    double focus = 0.0;  // ‖B·A_active·S − S‖_F
    double noise = 0.0;  // ‖B·N‖_F
};

inline OracleResiduals oracle_residuals(const SpatialFilter& per_source, const ComplexMatrix& a_active,
                                        const ComplexMatrix& S, const ComplexMatrix& N) {
    OracleResiduals r;
    r.focus = (matmul(matmul(per_source.B, a_active), S) - S).frobenius_norm();
    r.noise = matmul(per_source.B, N).frobenius_norm();
    return r;
}

}  // namespace bfn
