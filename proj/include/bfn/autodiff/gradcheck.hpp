#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "bfn/autodiff/tensor.hpp"
#include "bfn/error.hpp"
#include "bfn/rng.hpp"

namespace bfn::ad {

struct GradCheckOptions {
    double h = 1e-6;
    // 2: (f(x+h) − f(x−h)) / 2h.  4: the five-point stencil, error O(h⁴),
    // for deep graphs where tiny gradients sit near the 2-point roundoff floor.
    int order = 2;
    double tol = 1e-6;
    // Denominator floor for the relative error |a − n| / max(|a|, |n|, floor).
    double abs_floor = 1e-8;
    // Largest number of coordinates checked per tensor; larger ones are sampled.
    std::size_t max_coords_per_tensor = 400;
    std::uint64_t sample_seed = 1;
    // Coordinates whose central-difference window would straddle a kink of a
    // piecewise op can be skipped by this predicate (returns true to skip).
    std::function<bool(std::size_t tensor, std::size_t coord)> skip;
};

struct GradCheckFailure {
    std::size_t tensor = 0;
    std::size_t coord = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::vector<GradCheckFailure> failures;
    bool passed() const noexcept { return failures.empty(); }
};

/// Compares reverse-mode gradients of `loss_fn` (which must return a scalar
/// tensor and be deterministic) with central differences.
inline GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                                  const GradCheckOptions& opt = {}) {
    for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
    {
        Tape tape;
        Tape::Scope scope(tape);
        const Tensor loss = loss_fn();
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.push_back(p.grad());

    auto eval = [&] { return loss_fn().item(); };
    const double f0 = eval();
    if (opt.order != 2 && opt.order != 4) throw validation_error("grad_check: order must be 2 or 4");
    if (eval() != f0) throw nondeterminism_error("grad_check: repeated forward passes disagree");

    GradCheckReport rep;
    Rng rng(opt.sample_seed);
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
        Tensor p = params[ti];
        auto& vals = p.mutable_value();
        std::vector<std::size_t> coords(vals.size());
        for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
        if (coords.size() > opt.max_coords_per_tensor) {
            // Deterministic partial shuffle.
            for (std::size_t k = 0; k < opt.max_coords_per_tensor; ++k) {
                std::swap(coords[k], coords[k + rng.below(coords.size() - k)]);
            }
            coords.resize(opt.max_coords_per_tensor);
        }
        for (std::size_t c : coords) {
            if (opt.skip && opt.skip(ti, c)) continue;
            const double orig = vals[c];
            auto at = [&](double offset) {
                vals[c] = orig + offset;
                return eval();
            };
            double num;
            if (opt.order == 4) {
                const double h = opt.h;
                num = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
            } else {
                num = (at(opt.h) - at(-opt.h)) / (2.0 * opt.h);
            }
            vals[c] = orig;
            const double ana = analytic[ti][c];
            const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), opt.abs_floor});
            rep.max_rel_error = std::max(rep.max_rel_error, rel);
            ++rep.checked;
            if (rel > opt.tol) rep.failures.push_back({ti, c, ana, num, rel});
        }
    }
    return rep;
}

}  // namespace bfn::ad
