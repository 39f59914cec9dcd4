#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relcot/lora.hpp"
#include "relcot/tensor.hpp"

namespace relcot::nn {

/// Decoder-only miniature: RMSNorm, rotary positions, causal attention, and
/// a gated feed-forward, so each layer carries exactly the seven projections
/// adapters target: q_proj, k_proj, v_proj, o_proj, gate_proj, up_proj,
/// down_proj.
struct ToyTransformerConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 128;
    std::size_t vocab_size = 512;
    std::size_t max_seq_len = 256;

    /// Throws std::invalid_argument on non-positive fields, when d_model is
    /// not divisible by n_heads, or when the head dimension is odd (rotary
    /// positions rotate coordinate pairs).
    void validate() const;

    static ToyTransformerConfig from_json(const std::string& text);
    std::string to_json() const;

    bool operator==(const ToyTransformerConfig&) const = default;
};

inline constexpr std::array<const char*, 7> kProjectionNames = {
    "q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj",
};

struct TransformerLayer {
    LoraLinear q_proj, k_proj, v_proj, o_proj;
    LoraLinear gate_proj, up_proj, down_proj;
    Tensor attn_norm_gain;  // d_model, frozen at 1
    Tensor ffn_norm_gain;   // d_model, frozen at 1
};

struct ParamCount {
    std::size_t trainable = 0;
    std::size_t frozen = 0;

    bool operator==(const ParamCount&) const = default;
};

struct ToyTransformer {
    ToyTransformerConfig config;
    Tensor embedding;        // vocab×d, frozen
    Tensor lm_head;          // vocab×d, frozen; logits = h·lm_headᵀ
    Tensor final_norm_gain;  // d, frozen at 1
    std::vector<TransformerLayer> layers;

    /// Fresh random weights, deterministic for a seed. No adapters.
    static ToyTransformer init(const ToyTransformerConfig& config, std::uint64_t seed);

    /// Projections in canonical order with stable names "layers.<i>.<proj>".
    std::vector<std::pair<std::string, LoraLinear*>> projections();
    std::vector<std::pair<std::string, const LoraLinear*>> projections() const;

    void set_training(bool on);
    bool any_adapter() const;
};

/// Injects a fresh adapter into every projection matching a target. A target
/// matches when it equals the projection's short name (all layers) or its
/// full "layers.<i>.<name>" form. Throws when a target matches nothing
/// ("no target matched: ...") or a matched projection is already adapted.
/// Returns the number of adapters injected.
std::size_t inject_adapters(ToyTransformer& model, const std::vector<std::string>& targets,
                            const LoraConfig& config, Rng& rng);

/// trainable = adapter elements (Σ r·(d+k)); frozen = everything else.
ParamCount count_parameters(const ToyTransformer& model);

/// Per-layer activations recorded for the backward pass.
struct LayerCache {
    Tensor x_in;              // L×d residual stream entering the layer
    Tensor normed1;           // L×d
    Tensor norm1_inv_rms;     // L×1
    Tensor q, k, v;           // L×d (q, k after rotary)
    std::vector<Tensor> probs;  // per head, L×L attention rows
    Tensor mix;               // L×d concatenated head outputs
    Tensor h;                 // L×d after the attention residual
    Tensor normed2;           // L×d
    Tensor norm2_inv_rms;     // L×1
    Tensor gate_pre;          // L×f
    Tensor up;                // L×f
    Tensor swiglu;            // L×f, silu(gate_pre)⊙up
    LoraCache q_cache, k_cache, v_cache, o_cache;
    LoraCache gate_cache, up_cache, down_cache;
};

struct ForwardCache {
    std::vector<std::size_t> tokens;
    Tensor embedded;        // L×d
    std::vector<LayerCache> layers;
    Tensor final_in;        // L×d
    Tensor final_normed;    // L×d
    Tensor final_inv_rms;   // L×1
};

/// Runs the decoder over one token sequence and returns L×vocab logits.
/// Causal: position t attends only to positions ≤ t. Pass a cache to enable
/// a later backward pass; pass an rng when adapters run dropout in training
/// mode. Throws on an empty sequence, a sequence beyond max_seq_len, or an
/// out-of-range token id.
Tensor transformer_forward(const std::vector<std::size_t>& tokens, const ToyTransformer& model,
                           ForwardCache* cache = nullptr, Rng* rng = nullptr);

/// Adapter gradients keyed by projection name.
using ModelGrads = std::map<std::string, LoraGrads>;

/// Backpropagates dlogits (L×vocab) through the recorded forward pass,
/// accumulating adapter gradients into `grads`. Base weights, embeddings,
/// and norm gains are frozen and receive none. Throws when the cache does
/// not match the model.
void transformer_backward(const Tensor& dlogits, const ToyTransformer& model,
                          const ForwardCache& cache, ModelGrads& grads);

}  // namespace relcot::nn
