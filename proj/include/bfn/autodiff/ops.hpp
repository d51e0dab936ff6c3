#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "bfn/autodiff/tensor.hpp"
#include "bfn/error.hpp"

namespace bfn::ad {

inline constexpr double kLogClamp = 1e-12;

namespace detail {

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw shape_error(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() + " differ");
    }
}

inline bool wants(const NodePtr& p) { return p->requires_grad; }

// Element-wise unary op with derivative expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    auto n = make_node(a.rows(), a.cols(), a);
    const auto& x = a.value();
    for (std::size_t k = 0; k < x.size(); ++k) n->value[k] = fwd(x[k]);
    if (n->requires_grad) {
        n->backward = [deriv](Node& self) {
            Node& in = *self.parents[0];
            auto& g = in.ensure_grad();
            for (std::size_t k = 0; k < self.size(); ++k) g[k] += self.grad[k] * deriv(in.value[k], self.value[k]);
        };
    }
    return Tensor(n);
}

}  // namespace detail

/// a + b. `b` may also be a 1×cols row broadcast over the rows of `a`.
inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool broadcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
    if (!broadcast) detail::require_same(a, b, "add");
    auto n = detail::make_node(a.rows(), a.cols(), a, b);
    const std::size_t C = a.cols();
    for (std::size_t k = 0; k < n->size(); ++k) n->value[k] = a.value()[k] + b.value()[broadcast ? k % C : k];
    if (n->requires_grad) {
        n->backward = [broadcast, C](Node& self) {
            Node& x = *self.parents[0];
            Node& y = *self.parents[1];
            if (x.requires_grad) {
                auto& g = x.ensure_grad();
                for (std::size_t k = 0; k < self.size(); ++k) g[k] += self.grad[k];
            }
            if (y.requires_grad) {
                auto& g = y.ensure_grad();
                for (std::size_t k = 0; k < self.size(); ++k) g[broadcast ? k % C : k] += self.grad[k];
            }
        };
    }
    return Tensor(n);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same(a, b, "sub");
    auto n = detail::make_node(a.rows(), a.cols(), a, b);
    for (std::size_t k = 0; k < n->size(); ++k) n->value[k] = a.value()[k] - b.value()[k];
    if (n->requires_grad) {
        n->backward = [](Node& self) {
            Node& x = *self.parents[0];
            Node& y = *self.parents[1];
            if (x.requires_grad) {
                auto& g = x.ensure_grad();
                for (std::size_t k = 0; k < self.size(); ++k) g[k] += self.grad[k];
            }
            if (y.requires_grad) {
                auto& g = y.ensure_grad();
                for (std::size_t k = 0; k < self.size(); ++k) g[k] -= self.grad[k];
            }
        };
    }
    return Tensor(n);
}

/// Element-wise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same(a, b, "mul");
    auto n = detail::make_node(a.rows(), a.cols(), a, b);
    for (std::size_t k = 0; k < n->size(); ++k) n->value[k] = a.value()[k] * b.value()[k];
    if (n->requires_grad) {
        n->backward = [](Node& self) {
            Node& x = *self.parents[0];
            Node& y = *self.parents[1];
            if (x.requires_grad) {
                auto& g = x.ensure_grad();
                for (std::size_t k = 0; k < self.size(); ++k) g[k] += self.grad[k] * y.value[k];
            }
            if (y.requires_grad) {
                auto& g = y.ensure_grad();
                for (std::size_t k = 0; k < self.size(); ++k) g[k] += self.grad[k] * x.value[k];
            }
        };
    }
    return Tensor(n);
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw shape_error("matmul: " + a.shape_str() + " times " + b.shape_str());
    const std::size_t n_rows = a.rows(), inner = a.cols(), m = b.cols();
    auto n = detail::make_node(n_rows, m, a, b);
    {
        const double* av = a.value().data();
        const double* bv = b.value().data();
        double* cv = n->value.data();
        for (std::size_t i = 0; i < n_rows; ++i)
            for (std::size_t k = 0; k < inner; ++k) {
                const double x = av[i * inner + k];
                if (x == 0.0) continue;
                const double* brow = bv + k * m;
                double* crow = cv + i * m;
                for (std::size_t j = 0; j < m; ++j) crow[j] += x * brow[j];
            }
    }
    if (n->requires_grad) {
        n->backward = [n_rows, inner, m](Node& self) {
            Node& x = *self.parents[0];
            Node& y = *self.parents[1];
            const double* gc = self.grad.data();
            if (x.requires_grad) {
                // dA = dC · Bᵀ
                double* ga = x.ensure_grad().data();
                const double* bv = y.value.data();
                for (std::size_t i = 0; i < n_rows; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                        const double* brow = bv + k * m;
                        const double* grow = gc + i * m;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                        ga[i * inner + k] += acc;
                    }
            }
            if (y.requires_grad) {
                // dB = Aᵀ · dC
                double* gb = y.ensure_grad().data();
                const double* av = x.value.data();
                for (std::size_t i = 0; i < n_rows; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                        const double a_ik = av[i * inner + k];
                        if (a_ik == 0.0) continue;
                        const double* grow = gc + i * m;
                        double* gbrow = gb + k * m;
                        for (std::size_t j = 0; j < m; ++j) gbrow[j] += a_ik * grow[j];
                    }
            }
        };
    }
    return Tensor(n);
}

inline Tensor transpose(const Tensor& a) {
    const std::size_t R = a.rows(), C = a.cols();
    auto n = detail::make_node(C, R, a);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) n->value[j * R + i] = a.value()[i * C + j];
    if (n->requires_grad) {
        n->backward = [R, C](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) g[i * C + j] += self.grad[j * R + i];
        };
    }
    return Tensor(n);
}

/// Same data, new shape (row-major order is kept).
inline Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.size()) throw shape_error("reshape: " + a.shape_str() + " to " + std::to_string(rows) + "x" + std::to_string(cols));
    auto n = detail::make_node(rows, cols, a);
    n->value = a.value();
    if (n->requires_grad) {
        n->backward = [](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t k = 0; k < self.size(); ++k) g[k] += self.grad[k];
        };
    }
    return Tensor(n);
}

/// Stacks tensors vertically; all must share the column count.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw shape_error("concat_rows: no inputs");
    const std::size_t C = parts[0].cols();
    std::size_t R = 0;
    for (const auto& p : parts) {
        if (p.cols() != C) throw shape_error("concat_rows: column counts differ (" + p.shape_str() + ")");
        R += p.rows();
    }
    auto n = detail::make_node_list(R, C, parts);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().begin(), p.value().end(), n->value.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.size();
    }
    if (n->requires_grad) {
        n->backward = [](Node& self) {
            std::size_t off = 0;
            for (auto& p : self.parents) {
                if (p->requires_grad) {
                    auto& g = p->ensure_grad();
                    for (std::size_t k = 0; k < p->size(); ++k) g[k] += self.grad[off + k];
                }
                off += p->size();
            }
        };
    }
    return Tensor(n);
}

/// Joins tensors side by side; all must share the row count.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw shape_error("concat_cols: no inputs");
    const std::size_t R = parts[0].rows();
    std::size_t C = 0;
    for (const auto& p : parts) {
        if (p.rows() != R) throw shape_error("concat_cols: row counts differ (" + p.shape_str() + ")");
        C += p.cols();
    }
    auto n = detail::make_node_list(R, C, parts);
    std::size_t c0 = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) n->value[i * C + c0 + j] = p.value()[i * p.cols() + j];
        c0 += p.cols();
    }
    if (n->requires_grad) {
        n->backward = [R, C](Node& self) {
            std::size_t c0 = 0;
            for (auto& p : self.parents) {
                if (p->requires_grad) {
                    auto& g = p->ensure_grad();
                    for (std::size_t i = 0; i < R; ++i)
                        for (std::size_t j = 0; j < p->cols; ++j) g[i * p->cols + j] += self.grad[i * C + c0 + j];
                }
                c0 += p->cols;
            }
        };
    }
    return Tensor(n);
}

inline Tensor slice_rows(const Tensor& a, std::size_t first, std::size_t count) {
    if (first + count > a.rows()) throw shape_error("slice_rows: [" + std::to_string(first) + ", +" + std::to_string(count) + ") of " + a.shape_str());
    const std::size_t C = a.cols();
    auto n = detail::make_node(count, C, a);
    std::copy_n(a.value().begin() + static_cast<std::ptrdiff_t>(first * C), count * C, n->value.begin());
    if (n->requires_grad) {
        n->backward = [first, C](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t k = 0; k < self.size(); ++k) g[first * C + k] += self.grad[k];
        };
    }
    return Tensor(n);
}

inline Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t count) {
    if (first + count > a.cols()) throw shape_error("slice_cols: [" + std::to_string(first) + ", +" + std::to_string(count) + ") of " + a.shape_str());
    const std::size_t R = a.rows(), C = a.cols();
    auto n = detail::make_node(R, count, a);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < count; ++j) n->value[i * count + j] = a.value()[i * C + first + j];
    if (n->requires_grad) {
        n->backward = [R, C, first, count](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < count; ++j) g[i * C + first + j] += self.grad[i * count + j];
        };
    }
    return Tensor(n);
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// Natural log with the input clamped at 1e-12; below the clamp the gradient is 0.
inline Tensor log(const Tensor& a) {
    return detail::unary(
        a, [](double x) { return std::log(std::max(x, kLogClamp)); },
        [](double x, double) { return x > kLogClamp ? 1.0 / x : 0.0; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor square(const Tensor& a) {
    return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// max(x − margin, 0); the subgradient at the kink is 0.
inline Tensor shifted_hinge(const Tensor& a, double margin) {
    return detail::unary(
        a, [margin](double x) { return x > margin ? x - margin : 0.0; },
        [margin](double x, double) { return x > margin ? 1.0 : 0.0; });
}

/// x^n for a non-negative integer n (x^0 = 1, with zero gradient).
inline Tensor int_pow(const Tensor& a, int n) {
    if (n < 0) throw validation_error("int_pow: exponent must be non-negative");
    auto ipow = [](double x, int e) {
        double r = 1.0;
        for (int i = 0; i < e; ++i) r *= x;
        return r;
    };
    return detail::unary(
        a, [n, ipow](double x) { return ipow(x, n); },
        [n, ipow](double x, double) { return n == 0 ? 0.0 : static_cast<double>(n) * ipow(x, n - 1); });
}

inline Tensor scalar_scale(const Tensor& a, double s) {
    return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

/// Row-wise softmax with the row maximum subtracted first.
inline Tensor softmax_rows(const Tensor& a) {
    const std::size_t R = a.rows(), C = a.cols();
    auto n = detail::make_node(R, C, a);
    for (std::size_t i = 0; i < R; ++i) {
        const double* x = a.value().data() + i * C;
        double* y = n->value.data() + i * C;
        const double mx = *std::max_element(x, x + C);
        double sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (std::size_t j = 0; j < C; ++j) y[j] /= sum;
    }
    if (n->requires_grad) {
        n->backward = [R, C](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < R; ++i) {
                const double* y = self.value.data() + i * C;
                const double* gy = self.grad.data() + i * C;
                double dot = 0.0;
                for (std::size_t j = 0; j < C; ++j) dot += gy[j] * y[j];
                for (std::size_t j = 0; j < C; ++j) g[i * C + j] += y[j] * (gy[j] - dot);
            }
        };
    }
    return Tensor(n);
}

/// Mean over an axis: axis 1 averages each row (rows×1), axis 0 each column (1×cols).
inline Tensor mean_axis(const Tensor& a, int axis) {
    if (axis != 0 && axis != 1) throw validation_error("mean_axis: axis must be 0 or 1");
    const std::size_t R = a.rows(), C = a.cols();
    auto n = axis == 1 ? detail::make_node(R, 1, a) : detail::make_node(1, C, a);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) n->value[axis == 1 ? i : j] += a.value()[i * C + j];
    const double inv = 1.0 / static_cast<double>(axis == 1 ? C : R);
    for (auto& v : n->value) v *= inv;
    if (n->requires_grad) {
        n->backward = [R, C, axis, inv](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) g[i * C + j] += self.grad[axis == 1 ? i : j] * inv;
        };
    }
    return Tensor(n);
}

/// Sum of all entries as a 1×1 tensor.
inline Tensor sum(const Tensor& a) {
    auto n = detail::make_node(1, 1, a);
    double acc = 0.0;
    for (double v : a.value()) acc += v;
    n->value[0] = acc;
    if (n->requires_grad) {
        n->backward = [](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (auto& v : g) v += self.grad[0];
        };
    }
    return Tensor(n);
}

/// x·W + b with b a 1×out row.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

}  // namespace bfn::ad
