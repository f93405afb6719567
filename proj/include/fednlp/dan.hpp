#pragma once

#include <cstdint>
#include <vector>

#include "fednlp/corpus.hpp"
#include "fednlp/tensor.hpp"

namespace fednlp {

// Hidden nonlinearity. ReLU is the default; tanh is kept for sensitivity
// checks.
enum class Activation { Relu, Tanh };

// Deep averaging network parameters with the fixed schema
//   embed [V,E] -> mean pool -> dense [E,H] + bias -> out [H,M] + bias.
// Backed by a ParamSet so the tensors can be exchanged and aggregated
// without conversion.
class DanParams {
  public:
    DanParams() = default;
    // Zero-initialized with validated dimensions.
    DanParams(int vocab, int embed_dim, int hidden_dim, int outputs);

    // Adopts a ParamSet, validating the five-tensor schema.
    static DanParams from_param_set(ParamSet set);

    int vocab_size() const { return static_cast<int>(set_.tensor("embed").shape()[0]); }
    int embed_dim() const { return static_cast<int>(set_.tensor("embed").shape()[1]); }
    int hidden_dim() const { return static_cast<int>(set_.tensor("dense_b").shape()[0]); }
    int output_dim() const { return static_cast<int>(set_.tensor("out_b").shape()[0]); }

    Tensor& embed() { return set_.tensor("embed"); }
    const Tensor& embed() const { return set_.tensor("embed"); }
    Tensor& dense_w() { return set_.tensor("dense_w"); }
    const Tensor& dense_w() const { return set_.tensor("dense_w"); }
    Tensor& dense_b() { return set_.tensor("dense_b"); }
    const Tensor& dense_b() const { return set_.tensor("dense_b"); }
    Tensor& out_w() { return set_.tensor("out_w"); }
    const Tensor& out_w() const { return set_.tensor("out_w"); }
    Tensor& out_b() { return set_.tensor("out_b"); }
    const Tensor& out_b() const { return set_.tensor("out_b"); }

    ParamSet& param_set() { return set_; }
    const ParamSet& param_set() const { return set_; }

  private:
    ParamSet set_;
};

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out)) per tensor),
// zero biases; deterministic in seed.
DanParams init_params(int vocab, int embed_dim, int hidden_dim, int outputs, std::uint64_t seed);

struct DanForward {
    std::vector<double> hidden;  // length H, the patient representation
    std::vector<double> probs;   // length M, per-output sigmoid
};

DanForward dan_forward(const DanParams& p, const ConceptDoc& doc,
                       Activation act = Activation::Relu);

// Summed negative log-likelihood over outputs; probabilities are clamped
// to [1e-12, 1-1e-12] before the logs.
double bce_loss(const std::vector<double>& probs, const std::vector<std::uint8_t>& labels);

// Exact analytic gradients of bce_loss(dan_forward(p, doc), labels) with
// respect to every parameter; congruent with p.param_set().
ParamSet dan_backward(const DanParams& p, const ConceptDoc& doc,
                      const std::vector<std::uint8_t>& labels, Activation act = Activation::Relu);

// Adds this example's gradients into acc (congruent with p) and returns
// the example loss. Used by trainers to batch without reallocating.
double dan_backward_accumulate(const DanParams& p, const ConceptDoc& doc,
                               const std::vector<std::uint8_t>& labels, ParamSet& acc,
                               Activation act = Activation::Relu);

// Central-difference verification of dan_backward on a seeded subsample of
// coordinates (up to max_coords_per_tensor from each tensor). Returns the
// maximum relative error; coordinates where both gradients are below 1e-8
// fall back to absolute error.
double grad_check(const DanParams& p, const ConceptDoc& doc,
                  const std::vector<std::uint8_t>& labels, double h,
                  int max_coords_per_tensor = 100, std::uint64_t seed = 0,
                  Activation act = Activation::Relu);

}  // namespace fednlp
