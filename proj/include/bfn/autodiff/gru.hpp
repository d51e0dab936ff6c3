#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bfn/autodiff/ops.hpp"
#include "bfn/autodiff/params.hpp"

namespace bfn::ad {

/// GRU weights with gates packed column-wise as [z | r | h̃].
struct GruParams {
    Tensor W;  // in×3H
    Tensor U;  // H×3H
    Tensor b;  // 1×3H
    std::size_t input = 0;
    std::size_t hidden = 0;

    static GruParams create(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng) {
        GruParams p;
        p.input = input;
        p.hidden = hidden;
        p.W = store.add_weight(prefix + ".W", input, 3 * hidden, rng);
        p.U = store.add_weight(prefix + ".U", hidden, 3 * hidden, rng);
        p.b = store.add_zeros(prefix + ".b", 1, 3 * hidden);
        return p;
    }
};

namespace detail {

// One step given the precomputed input projection gx = xW + b (rows×3H).
inline Tensor gru_step(const GruParams& p, const Tensor& gx, const Tensor& h_prev, const Tensor& u_zr, const Tensor& u_h) {
    const std::size_t H = p.hidden;
    const Tensor zr = sigmoid(add(slice_cols(gx, 0, 2 * H), matmul(h_prev, u_zr)));
    const Tensor z = slice_cols(zr, 0, H);
    const Tensor r = slice_cols(zr, H, H);
    const Tensor cand = tanh(add(slice_cols(gx, 2 * H, H), matmul(mul(r, h_prev), u_h)));
    // h = z⊙h_prev + (1−z)⊙h̃ = h̃ + z⊙(h_prev − h̃)
    return add(cand, mul(z, sub(h_prev, cand)));
}

inline void check_width(const GruParams& p, const Tensor& x) {
    if (x.cols() != p.input) {
        throw shape_error("gru: input width " + std::to_string(x.cols()) + " but cell expects " + std::to_string(p.input));
    }
}

}  // namespace detail

/// z = σ(xW_z + hU_z + b_z), r = σ(xW_r + hU_r + b_r),
/// h̃ = tanh(xW_h + (r⊙h)U_h + b_h), h_t = z⊙h_prev + (1−z)⊙h̃.
/// Rows of x and h are independent batch entries.
inline Tensor gru_cell(const GruParams& p, const Tensor& x, const Tensor& h_prev) {
    detail::check_width(p, x);
    if (h_prev.cols() != p.hidden || h_prev.rows() != x.rows()) {
        throw shape_error("gru: hidden state " + h_prev.shape_str() + " does not match cell width " + std::to_string(p.hidden));
    }
    const Tensor gx = linear(x, p.W, p.b);
    return detail::gru_step(p, gx, h_prev, slice_cols(p.U, 0, 2 * p.hidden), slice_cols(p.U, 2 * p.hidden, p.hidden));
}

/// Runs a GRU over `steps` (each batch×in) from a zero state, in order or
/// reversed. Returned states are indexed by sequence position either way.
inline std::vector<Tensor> gru_sequence(const GruParams& p, const std::vector<Tensor>& steps, bool reverse) {
    if (steps.empty()) return {};
    for (const auto& s : steps) detail::check_width(p, s);
    const std::size_t rows = steps[0].rows();
    const std::size_t n = steps.size();
    // One projection for all steps.
    const Tensor gx_all = linear(concat_rows(steps), p.W, p.b);
    const Tensor u_zr = slice_cols(p.U, 0, 2 * p.hidden);
    const Tensor u_h = slice_cols(p.U, 2 * p.hidden, p.hidden);
    std::vector<Tensor> out(n);
    Tensor h = Tensor::zeros(rows, p.hidden);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = reverse ? n - 1 - k : k;
        h = detail::gru_step(p, slice_rows(gx_all, t * rows, rows), h, u_zr, u_h);
        out[t] = h;
    }
    return out;
}

struct BiGruParams {
    GruParams fwd;
    GruParams bwd;

    static BiGruParams create(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng) {
        BiGruParams p;
        p.fwd = GruParams::create(store, prefix + ".fwd", input, hidden, rng);
        p.bwd = GruParams::create(store, prefix + ".bwd", input, hidden, rng);
        return p;
    }

    std::size_t output_width() const noexcept { return fwd.hidden + bwd.hidden; }
};

/// Output at step t is [forward state t | backward state t].
inline std::vector<Tensor> bigru_sequence(const BiGruParams& p, const std::vector<Tensor>& steps) {
    const auto f = gru_sequence(p.fwd, steps, false);
    const auto b = gru_sequence(p.bwd, steps, true);
    std::vector<Tensor> out(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) out[t] = concat_cols({f[t], b[t]});
    return out;
}

}  // namespace bfn::ad
