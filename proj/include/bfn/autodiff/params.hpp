#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "bfn/autodiff/tensor.hpp"
#include "bfn/error.hpp"
#include "bfn/rng.hpp"

namespace bfn::ad {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Ordered, named collection of trainable leaves.
class ParamStore {
public:
    /// Weight matrix drawn from U(−1/√fan_in, 1/√fan_in), fan_in = rows.
    Tensor add_weight(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        std::vector<double> v(rows * cols);
        for (auto& x : v) x = rng.uniform(-bound, bound);
        return add(name, Tensor::parameter(rows, cols, std::move(v)));
    }

    Tensor add_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
        return add(name, Tensor::parameter(rows, cols, std::vector<double>(rows * cols, 0.0)));
    }

    Tensor add(const std::string& name, Tensor t) {
        for (const auto& p : params_)
            if (p.name == name) throw validation_error("duplicate parameter name " + name);
        params_.push_back({name, t});
        return t;
    }

    const std::vector<NamedParam>& entries() const noexcept { return params_; }
    std::vector<NamedParam>& entries() noexcept { return params_; }

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p.tensor);
        return out;
    }

    const Tensor& at(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.tensor;
        throw validation_error("no parameter named " + name);
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    void fill(double v) {
        for (auto& p : params_) std::fill(p.tensor.mutable_value().begin(), p.tensor.mutable_value().end(), v);
    }

    bool all_finite() const {
        for (const auto& p : params_)
            for (double v : p.tensor.value())
                if (!std::isfinite(v)) return false;
        return true;
    }

    /// Deep copy of the values (fresh leaves, no gradients).
    ParamStore clone() const {
        ParamStore out;
        for (const auto& p : params_) out.params_.push_back({p.name, Tensor::parameter(p.tensor.rows(), p.tensor.cols(), p.tensor.value())});
        return out;
    }

    /// Copies values from a store with identical names and shapes.
    void assign_from(const ParamStore& other) {
        if (other.params_.size() != params_.size()) throw shape_error("parameter stores differ in size");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& src = other.params_[i];
            auto& dst = params_[i];
            if (src.name != dst.name || src.tensor.size() != dst.tensor.size()) {
                throw shape_error("parameter mismatch at " + dst.name);
            }
            dst.tensor.mutable_value() = src.tensor.value();
        }
    }

private:
    std::vector<NamedParam> params_;
};

}  // namespace bfn::ad
