#include "fednlp/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace fednlp {

namespace {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape");
    }
    check_finite("tensor construction");
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

void Tensor::check_finite(const std::string& context) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw DataError("non-finite value in " + context);
        }
    }
}

void ParamSet::add(std::string name, Tensor tensor) {
    if (has(name)) throw ShapeError("duplicate parameter name: " + name);
    items_.emplace_back(std::move(name), std::move(tensor));
}

bool ParamSet::has(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return true;
    }
    return false;
}

Tensor& ParamSet::tensor(const std::string& name) {
    for (auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw ShapeError("no parameter named " + name);
}

const Tensor& ParamSet::tensor(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw ShapeError("no parameter named " + name);
}

bool ParamSet::congruent_with(const ParamSet& other) const {
    if (items_.size() != other.items_.size()) return false;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].first != other.items_[i].first) return false;
        if (!items_[i].second.same_shape(other.items_[i].second)) return false;
    }
    return true;
}

void ParamSet::require_congruent(const ParamSet& other, const std::string& context) const {
    if (items_.size() != other.items_.size()) {
        throw ShapeError(context + ": parameter count mismatch (" + std::to_string(items_.size()) +
                         " vs " + std::to_string(other.items_.size()) + ")");
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].first != other.items_[i].first) {
            throw ShapeError(context + ": parameter name mismatch at index " + std::to_string(i) +
                             " (" + items_[i].first + " vs " + other.items_[i].first + ")");
        }
        if (!items_[i].second.same_shape(other.items_[i].second)) {
            throw ShapeError(context + ": shape mismatch for parameter " + items_[i].first);
        }
    }
}

void ParamSet::check_finite(const std::string& context) const {
    for (const auto& [n, t] : items_) {
        t.check_finite(context + " (" + n + ")");
    }
}

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr) {
    if (lr < 0.0) throw ConfigError("sgd_step: lr must be non-negative");
    params.require_congruent(grads, "sgd_step");
    ParamSet out = params;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double* p = out.tensor(i).data();
        const double* g = grads.tensor(i).data();
        const std::int64_t n = out.tensor(i).numel();
        for (std::int64_t j = 0; j < n; ++j) {
            p[j] -= lr * g[j];
        }
    }
    out.check_finite("sgd_step result");
    return out;
}

}  // namespace fednlp
