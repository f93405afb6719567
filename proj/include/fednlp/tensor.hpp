#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fednlp/errors.hpp"

namespace fednlp {

// Dense row-major tensor of 64-bit reals. Values are checked for
// finiteness at construction; mutating code paths re-check after updates.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-D accessors; shape is validated by the caller's construction.
    double& at(std::int64_t row, std::int64_t col) {
        return data_[static_cast<std::size_t>(row * shape_[1] + col)];
    }
    double at(std::int64_t row, std::int64_t col) const {
        return data_[static_cast<std::size_t>(row * shape_[1] + col)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v);
    // Throws DataError if any entry is NaN or infinite.
    void check_finite(const std::string& context) const;

  private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

// Ordered, uniquely named collection of tensors; the unit of federated
// exchange. Two sets are congruent iff names and shapes match pairwise.
class ParamSet {
  public:
    ParamSet() = default;

    void add(std::string name, Tensor tensor);

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    const std::string& name(std::size_t i) const { return items_[i].first; }
    Tensor& tensor(std::size_t i) { return items_[i].second; }
    const Tensor& tensor(std::size_t i) const { return items_[i].second; }

    // Throws ShapeError if the name is absent.
    Tensor& tensor(const std::string& name);
    const Tensor& tensor(const std::string& name) const;
    bool has(const std::string& name) const;

    bool congruent_with(const ParamSet& other) const;
    // Throws ShapeError naming the first mismatch.
    void require_congruent(const ParamSet& other,
                           const std::string& context = "param sets") const;

    void check_finite(const std::string& context = "params") const;

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// p - lr * g, elementwise over congruent sets. Result is checked finite.
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr);

}  // namespace fednlp
