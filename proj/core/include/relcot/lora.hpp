#pragma once

#include <optional>
#include <string>

#include "relcot/tensor.hpp"

namespace relcot::nn {

/// Adapter hyperparameters. Defaults are the shipped configuration: rank 24,
/// scaling numerator 32, dropout 0.1.
struct LoraConfig {
    std::size_t r = 24;
    double alpha = 32.0;
    double dropout_p = 0.1;

    /// Throws std::invalid_argument unless r > 0, alpha > 0, 0 <= dropout_p < 1.
    void validate() const;

    bool operator==(const LoraConfig&) const = default;
};

/// The trainable low-rank pair. The adapter path computes
/// (alpha/r) * dropout(x) * Aᵀ * Bᵀ on top of the frozen base projection.
struct LoraAdapter {
    Tensor A;  // r×k, initialized uniform(−1/√k, 1/√k)
    Tensor B;  // d×r, initialized zero so a fresh adapter is a no-op
    std::size_t r = 0;
    double alpha = 0.0;
    double dropout_p = 0.0;

    double scaling() const { return alpha / static_cast<double>(r); }

    /// Throws when r > min(d, k).
    static LoraAdapter init(std::size_t d, std::size_t k, const LoraConfig& config, Rng& rng);

    bool operator==(const LoraAdapter&) const = default;
};

/// A frozen d×k projection with an optional adapter. Only A and B ever
/// receive gradients; `weight` must be bitwise identical before and after
/// any training run.
struct LoraLinear {
    std::string name;
    Tensor weight;  // d×k
    std::optional<LoraAdapter> adapter;
    bool training_mode = false;

    std::size_t out_features() const { return weight.shape[0]; }
    std::size_t in_features() const { return weight.shape[1]; }
};

/// Saved activations one forward pass needs for the matching backward pass.
struct LoraCache {
    Tensor dropped_input;  // n×k, adapter-path input after dropout
    Tensor dropout_mask;   // n×k multipliers {0, 1/(1-p)}; empty when dropout was identity
    Tensor u;              // n×r, dropped_input·Aᵀ
    bool have_adapter = false;
};

/// y = x·Wᵀ + (alpha/r)·dropout(x)·Aᵀ·Bᵀ. Dropout uses inverted scaling
/// 1/(1−p) and runs only in training mode (eval is the identity), on the
/// adapter path only, so the base path stays deterministic. Training mode
/// with dropout_p > 0 requires an rng. Output is checked finite.
Tensor lora_forward(const Tensor& x, const LoraLinear& layer, Rng* rng = nullptr,
                    LoraCache* cache = nullptr);

/// W' = W + (alpha/r)·B·A. Without an adapter, returns a copy of W.
Tensor merge_adapter(const LoraLinear& layer);

struct LoraGrads {
    Tensor dA;
    Tensor dB;
};

/// Backward through one lora_forward call. Returns dx and accumulates dA/dB
/// into `grads` (initializing them to zero on first use) when the layer has
/// an adapter and grads is non-null. `cache` must come from the forward pass
/// being differentiated.
Tensor lora_backward(const Tensor& dy, const LoraLinear& layer, const LoraCache& cache,
                     LoraGrads* grads);

}  // namespace relcot::nn
