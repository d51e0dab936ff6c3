#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "bfn/array_model.hpp"
#include "bfn/classical.hpp"
#include "bfn/error.hpp"

namespace bfn {

/// Maps an angle difference into (−π/2, π/2] by whole multiples of π.
inline double wrap_half_pi(double x) {
    double w = x - kPi * std::ceil(x / kPi - 0.5);
    // guard the closed end against rounding in the division
    if (w <= -kPi / 2.0) w += kPi;
    if (w > kPi / 2.0) w -= kPi;
    return w;
}

inline constexpr std::size_t kMaxRmspeSources = 8;

/// Root mean squared periodic error, minimised over all assignments of
/// estimates to truths.
inline double rmspe(const std::vector<double>& truth, const std::vector<double>& est) {
    if (truth.size() != est.size()) {
        throw shape_error("rmspe: " + std::to_string(truth.size()) + " truths vs " + std::to_string(est.size()) +
                          " estimates; align the estimates first");
    }
    const std::size_t K = truth.size();
    if (K == 0) return 0.0;
    if (K > kMaxRmspeSources) throw validation_error("rmspe: permutation search limited to K <= 8");
    std::vector<std::size_t> perm(K);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double d = wrap_half_pi(truth[k] - est[perm[k]]);
            acc += d * d;
        }
        best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(K));
}

/// Brings an estimate list to exactly K angles: the K strongest peaks when
/// there are too many, otherwise padding with the strongest unused grid angles
/// of the spectrum.
inline std::vector<double> align(std::vector<Peak> est, std::size_t K, const SpatialSpectrum& spec, const AngleGrid& grid) {
    if (K == 0) throw validation_error("align: K must be at least 1");
    std::stable_sort(est.begin(), est.end(), [](const Peak& a, const Peak& b) { return a.energy > b.energy; });
    if (est.size() > K) est.resize(K);
    std::vector<double> out;
    out.reserve(K);
    for (const auto& p : est) out.push_back(p.angle);
    if (out.size() == K) return out;
    if (spec.size() == 0) throw validation_error("align: nothing to pad from (empty estimates and spectrum)");
    if (spec.size() != grid.size()) throw shape_error("align: spectrum length differs from grid size");

    std::vector<std::size_t> order(spec.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return spec.P[a] > spec.P[b]; });
    for (std::size_t idx : order) {
        if (out.size() == K) break;
        const double angle = grid[idx];
        if (std::find(out.begin(), out.end(), angle) == out.end()) out.push_back(angle);
    }
    return out;
}

struct F1Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    void add(const std::vector<double>& pred_rho, const std::vector<int>& labels, double threshold = 0.5) {
        if (pred_rho.size() != labels.size()) throw shape_error("micro_f1: prediction and label lengths differ");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const bool pos = pred_rho[i] >= threshold;
            if (pos && labels[i]) ++tp;
            else if (pos) ++fp;
            else if (labels[i]) ++fn;
        }
    }

    /// 2TP/(2TP+FP+FN); 1 when there is nothing to find and nothing predicted.
    double f1() const {
        const std::size_t denom = 2 * tp + fp + fn;
        return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
};

inline double micro_f1(const std::vector<double>& pred_rho, const std::vector<int>& labels, double threshold = 0.5) {
    F1Counts c;
    c.add(pred_rho, labels, threshold);
    return c.f1();
}

/// One evaluated sample.
struct EvalRecord {
    std::string method;
    std::size_t K = 0;
    std::size_t T = 0;
    double snr_db = 0.0;
    double rho_err = 0.0;
    bool coherent = false;
    std::uint64_t seed = 0;
    double rmspe_rad = 0.0;
    std::size_t k_est = 0;
    std::size_t k_true = 0;
    double f1 = 0.0;
};

inline double k_accuracy(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw validation_error("k_accuracy: no records");
    const auto hits = std::count_if(records.begin(), records.end(), [](const EvalRecord& r) { return r.k_est == r.k_true; });
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace bfn
