#include "relcot/lora.hpp"

#include <cmath>
#include <stdexcept>

namespace relcot::nn {

void LoraConfig::validate() const {
    if (r == 0) throw std::invalid_argument("lora rank must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("lora alpha must be positive");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw std::invalid_argument("lora dropout_p must be in [0, 1)");
    }
}

LoraAdapter LoraAdapter::init(std::size_t d, std::size_t k, const LoraConfig& config, Rng& rng) {
    config.validate();
    if (config.r > d || config.r > k) {
        throw std::invalid_argument("lora rank " + std::to_string(config.r) +
                                    " exceeds min(d, k) = " + std::to_string(std::min(d, k)));
    }
    LoraAdapter adapter;
    adapter.r = config.r;
    adapter.alpha = config.alpha;
    adapter.dropout_p = config.dropout_p;
    adapter.A = Tensor::zeros({config.r, k});
    const double bound = 1.0 / std::sqrt(static_cast<double>(k));
    rng.fill_uniform(adapter.A, -bound, bound);
    adapter.B = Tensor::zeros({d, config.r});
    return adapter;
}

namespace {

void require_input(const Tensor& x, const LoraLinear& layer) {
    if (x.shape.size() != 2) {
        throw std::invalid_argument("lora_forward: expected a 2-D input");
    }
    if (x.shape[1] != layer.in_features()) {
        throw std::invalid_argument("lora_forward: input has " + std::to_string(x.shape[1]) +
                                    " features, layer \"" + layer.name + "\" expects " +
                                    std::to_string(layer.in_features()));
    }
}

}  // namespace

Tensor lora_forward(const Tensor& x, const LoraLinear& layer, Rng* rng, LoraCache* cache) {
    require_input(x, layer);
    Tensor y = matmul_nt(x, layer.weight);

    if (cache != nullptr) *cache = LoraCache{};
    if (layer.adapter.has_value()) {
        const LoraAdapter& ad = *layer.adapter;
        const bool use_dropout = layer.training_mode && ad.dropout_p > 0.0;

        Tensor dropped = x;
        Tensor mask;
        if (use_dropout) {
            if (rng == nullptr) {
                throw std::invalid_argument("lora_forward: dropout in training mode needs an rng");
            }
            const double keep_scale = 1.0 / (1.0 - ad.dropout_p);
            mask = Tensor::zeros(x.shape);
            for (std::size_t i = 0; i < x.data.size(); ++i) {
                const double m = rng->uniform(0.0, 1.0) < ad.dropout_p ? 0.0 : keep_scale;
                mask.data[i] = m;
                dropped.data[i] *= m;
            }
        }

        Tensor u = matmul_nt(dropped, ad.A);            // n×r
        add_matmul_nt(y, u, ad.B, ad.scaling());        // y += s·u·Bᵀ

        if (cache != nullptr) {
            cache->dropped_input = std::move(dropped);
            cache->dropout_mask = std::move(mask);
            cache->u = std::move(u);
            cache->have_adapter = true;
        }
    }

    check_finite(y, "lora_forward(" + layer.name + ")");
    return y;
}

Tensor merge_adapter(const LoraLinear& layer) {
    if (!layer.adapter.has_value()) return layer.weight;
    const LoraAdapter& ad = *layer.adapter;
    Tensor merged = layer.weight;
    add_matmul(merged, ad.B, ad.A, ad.scaling());  // W + s·B·A
    return merged;
}

Tensor lora_backward(const Tensor& dy, const LoraLinear& layer, const LoraCache& cache,
                     LoraGrads* grads) {
    if (dy.shape.size() != 2 || dy.shape[1] != layer.out_features()) {
        throw std::invalid_argument("lora_backward: dy shape does not match layer \"" +
                                    layer.name + "\"");
    }
    Tensor dx = matmul(dy, layer.weight);  // base path: dy·W

    if (layer.adapter.has_value() && cache.have_adapter) {
        const LoraAdapter& ad = *layer.adapter;
        const double s = ad.scaling();

        if (grads != nullptr) {
            if (grads->dA.data.empty()) grads->dA = Tensor::zeros(ad.A.shape);
            if (grads->dB.data.empty()) grads->dB = Tensor::zeros(ad.B.shape);
            add_matmul_tn(grads->dB, dy, cache.u, s);  // dB += s·dyᵀ·u
        }

        Tensor du = matmul(dy, ad.B);  // n×r (scaling folded in below)
        if (grads != nullptr) {
            add_matmul_tn(grads->dA, du, cache.dropped_input, s);  // dA += s·duᵀ·xd
        }

        // dx contribution: dropout-backward(s·du·A)
        Tensor dxd = Tensor::zeros(dx.shape);
        add_matmul(dxd, du, ad.A, s);
        if (cache.dropout_mask.data.empty()) {
            for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxd.data[i];
        } else {
            for (std::size_t i = 0; i < dx.data.size(); ++i) {
                dx.data[i] += dxd.data[i] * cache.dropout_mask.data[i];
            }
        }
    } else if (layer.adapter.has_value() != cache.have_adapter) {
        throw std::invalid_argument("lora_backward: cache does not match layer \"" + layer.name +
                                    "\" (forward ran with a different adapter state)");
    }

    return dx;
}

}  // namespace relcot::nn
