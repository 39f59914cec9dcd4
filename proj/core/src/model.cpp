#include "relcot/model.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relcot::nn {

using nlohmann::json;

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kRopeBase = 10000.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void ToyTransformerConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || vocab_size == 0 ||
        max_seq_len == 0) {
        throw std::invalid_argument("model config fields must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("d_model " + std::to_string(d_model) +
                                    " is not divisible by n_heads " + std::to_string(n_heads));
    }
    if ((d_model / n_heads) % 2 != 0) {
        throw std::invalid_argument("head dimension must be even for rotary positions");
    }
}

ToyTransformerConfig ToyTransformerConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
    ToyTransformerConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "d_model") cfg.d_model = value.get<std::size_t>();
        else if (key == "n_heads") cfg.n_heads = value.get<std::size_t>();
        else if (key == "n_layers") cfg.n_layers = value.get<std::size_t>();
        else if (key == "d_ff") cfg.d_ff = value.get<std::size_t>();
        else if (key == "vocab_size") cfg.vocab_size = value.get<std::size_t>();
        else if (key == "max_seq_len") cfg.max_seq_len = value.get<std::size_t>();
        else throw std::invalid_argument("unknown model config key \"" + key + "\"");
    }
    cfg.validate();
    return cfg;
}

std::string ToyTransformerConfig::to_json() const {
    json j;
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["n_layers"] = n_layers;
    j["d_ff"] = d_ff;
    j["vocab_size"] = vocab_size;
    j["max_seq_len"] = max_seq_len;
    return j.dump();
}

ToyTransformer ToyTransformer::init(const ToyTransformerConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ToyTransformer model;
    model.config = config;

    const std::size_t d = config.d_model;
    const std::size_t f = config.d_ff;
    const std::size_t v = config.vocab_size;

    model.embedding = Tensor::zeros({v, d});
    rng.fill_uniform(model.embedding, -0.5, 0.5);

    // Kept small so a fresh model's logits sit near uniform and the initial
    // cross-entropy lands at ln(vocab).
    model.lm_head = Tensor::zeros({v, d});
    const double head_bound = 0.25 / std::sqrt(static_cast<double>(d));
    rng.fill_uniform(model.lm_head, -head_bound, head_bound);

    model.final_norm_gain = Tensor::full({d}, 1.0);

    auto init_linear = [&rng](LoraLinear& lin, std::string name, std::size_t out,
                              std::size_t in) {
        lin.name = std::move(name);
        lin.weight = Tensor::zeros({out, in});
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        rng.fill_uniform(lin.weight, -bound, bound);
    };

    model.layers.resize(config.n_layers);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        TransformerLayer& layer = model.layers[i];
        const std::string prefix = "layers." + std::to_string(i) + ".";
        init_linear(layer.q_proj, prefix + "q_proj", d, d);
        init_linear(layer.k_proj, prefix + "k_proj", d, d);
        init_linear(layer.v_proj, prefix + "v_proj", d, d);
        init_linear(layer.o_proj, prefix + "o_proj", d, d);
        init_linear(layer.gate_proj, prefix + "gate_proj", f, d);
        init_linear(layer.up_proj, prefix + "up_proj", f, d);
        init_linear(layer.down_proj, prefix + "down_proj", d, f);
        layer.attn_norm_gain = Tensor::full({d}, 1.0);
        layer.ffn_norm_gain = Tensor::full({d}, 1.0);
    }
    return model;
}

std::vector<std::pair<std::string, LoraLinear*>> ToyTransformer::projections() {
    std::vector<std::pair<std::string, LoraLinear*>> out;
    out.reserve(layers.size() * kProjectionNames.size());
    for (auto& layer : layers) {
        for (LoraLinear* lin : {&layer.q_proj, &layer.k_proj, &layer.v_proj, &layer.o_proj,
                                &layer.gate_proj, &layer.up_proj, &layer.down_proj}) {
            out.emplace_back(lin->name, lin);
        }
    }
    return out;
}

std::vector<std::pair<std::string, const LoraLinear*>> ToyTransformer::projections() const {
    std::vector<std::pair<std::string, const LoraLinear*>> out;
    out.reserve(layers.size() * kProjectionNames.size());
    for (const auto& layer : layers) {
        for (const LoraLinear* lin : {&layer.q_proj, &layer.k_proj, &layer.v_proj, &layer.o_proj,
                                      &layer.gate_proj, &layer.up_proj, &layer.down_proj}) {
            out.emplace_back(lin->name, lin);
        }
    }
    return out;
}

void ToyTransformer::set_training(bool on) {
    for (auto& [name, lin] : projections()) lin->training_mode = on;
}

bool ToyTransformer::any_adapter() const {
    for (const auto& [name, lin] : projections()) {
        if (lin->adapter.has_value()) return true;
    }
    return false;
}

std::size_t inject_adapters(ToyTransformer& model, const std::vector<std::string>& targets,
                            const LoraConfig& config, Rng& rng) {
    config.validate();
    if (targets.empty()) throw std::invalid_argument("no adapter targets given");
    std::size_t injected = 0;
    for (const auto& target : targets) {
        std::size_t matched = 0;
        for (auto& [name, lin] : model.projections()) {
            const bool short_match = name.size() > target.size() &&
                                     name.compare(name.size() - target.size(), target.size(),
                                                  target) == 0 &&
                                     name[name.size() - target.size() - 1] == '.';
            if (name != target && !short_match) continue;
            ++matched;
            if (lin->adapter.has_value()) {
                throw std::invalid_argument("projection \"" + name + "\" is already adapted");
            }
            lin->adapter = LoraAdapter::init(lin->out_features(), lin->in_features(), config, rng);
            ++injected;
        }
        if (matched == 0) {
            throw std::invalid_argument("no target matched: " + target);
        }
    }
    return injected;
}

ParamCount count_parameters(const ToyTransformer& model) {
    ParamCount count;
    count.frozen = model.embedding.size() + model.lm_head.size() + model.final_norm_gain.size();
    for (const auto& layer : model.layers) {
        count.frozen += layer.attn_norm_gain.size() + layer.ffn_norm_gain.size();
    }
    for (const auto& [name, lin] : model.projections()) {
        count.frozen += lin->weight.size();
        if (lin->adapter.has_value()) {
            count.trainable += lin->adapter->A.size() + lin->adapter->B.size();
        }
    }
    return count;
}

namespace {

// y_i = x_i * gain_i / sqrt(mean(x^2) + eps), rows independent.
void rmsnorm(const Tensor& x, const Tensor& gain, Tensor& out, Tensor& inv_rms) {
    const std::size_t rows = x.rows(), cols = x.cols();
    out = Tensor::zeros({rows, cols});
    inv_rms = Tensor::zeros({rows, 1});
    for (std::size_t i = 0; i < rows; ++i) {
        const double* xi = &x.data[i * cols];
        double ms = 0.0;
        for (std::size_t j = 0; j < cols; ++j) ms += xi[j] * xi[j];
        ms /= static_cast<double>(cols);
        const double r = 1.0 / std::sqrt(ms + kNormEps);
        inv_rms.data[i] = r;
        double* oi = &out.data[i * cols];
        for (std::size_t j = 0; j < cols; ++j) oi[j] = xi[j] * gain.data[j] * r;
    }
}

// Gains are frozen, so only dx is produced.
Tensor rmsnorm_backward(const Tensor& dy, const Tensor& x, const Tensor& inv_rms,
                        const Tensor& gain) {
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor dx = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        const double* dyi = &dy.data[i * cols];
        const double* xi = &x.data[i * cols];
        const double r = inv_rms.data[i];
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += dyi[j] * gain.data[j] * xi[j];
        const double coeff = r * r * r * dot / static_cast<double>(cols);
        double* dxi = &dx.data[i * cols];
        for (std::size_t j = 0; j < cols; ++j) dxi[j] = dyi[j] * gain.data[j] * r - xi[j] * coeff;
    }
    return dx;
}

// Rotates pairs (2j, 2j+1) inside every head slice by position-dependent
// angles. sign +1 applies the rotation, -1 inverts it (backward).
void rope_inplace(Tensor& t, std::size_t n_heads, double sign) {
    const std::size_t rows = t.rows(), cols = t.cols();
    const std::size_t dh = cols / n_heads;
    for (std::size_t pos = 0; pos < rows; ++pos) {
        double* row = &t.data[pos * cols];
        for (std::size_t h = 0; h < n_heads; ++h) {
            double* slice = row + h * dh;
            for (std::size_t j = 0; 2 * j + 1 < dh; ++j) {
                const double theta =
                    std::pow(kRopeBase, -2.0 * static_cast<double>(j) / static_cast<double>(dh));
                const double angle = sign * static_cast<double>(pos) * theta;
                const double c = std::cos(angle);
                const double s = std::sin(angle);
                const double a = slice[2 * j];
                const double b = slice[2 * j + 1];
                slice[2 * j] = a * c - b * s;
                slice[2 * j + 1] = a * s + b * c;
            }
        }
    }
}

Tensor head_slice(const Tensor& t, std::size_t head, std::size_t dh) {
    const std::size_t rows = t.rows(), cols = t.cols();
    Tensor out = Tensor::zeros({rows, dh});
    for (std::size_t i = 0; i < rows; ++i) {
        const double* src = &t.data[i * cols + head * dh];
        double* dst = &out.data[i * dh];
        for (std::size_t j = 0; j < dh; ++j) dst[j] = src[j];
    }
    return out;
}

void head_slice_add(Tensor& t, const Tensor& part, std::size_t head, std::size_t dh) {
    const std::size_t rows = t.rows(), cols = t.cols();
    for (std::size_t i = 0; i < rows; ++i) {
        double* dst = &t.data[i * cols + head * dh];
        const double* src = &part.data[i * dh];
        for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
    }
}

}  // namespace

Tensor transformer_forward(const std::vector<std::size_t>& tokens, const ToyTransformer& model,
                           ForwardCache* cache, Rng* rng) {
    const ToyTransformerConfig& cfg = model.config;
    if (tokens.empty()) throw std::invalid_argument("empty token sequence");
    if (tokens.size() > cfg.max_seq_len) {
        throw std::invalid_argument("sequence length " + std::to_string(tokens.size()) +
                                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    for (std::size_t id : tokens) {
        if (id >= cfg.vocab_size) {
            throw std::invalid_argument("token id " + std::to_string(id) +
                                        " out of range (vocab " + std::to_string(cfg.vocab_size) +
                                        ")");
        }
    }

    const std::size_t L = tokens.size();
    const std::size_t d = cfg.d_model;
    const std::size_t dh = d / cfg.n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    if (cache != nullptr) {
        *cache = ForwardCache{};
        cache->tokens = tokens;
        cache->layers.resize(model.layers.size());
    }

    Tensor x = Tensor::zeros({L, d});
    for (std::size_t t = 0; t < L; ++t) {
        const double* row = &model.embedding.data[tokens[t] * d];
        for (std::size_t j = 0; j < d; ++j) x.at(t, j) = row[j];
    }
    if (cache != nullptr) cache->embedded = x;

    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const TransformerLayer& layer = model.layers[li];
        LayerCache* lc = cache != nullptr ? &cache->layers[li] : nullptr;
        if (lc != nullptr) lc->x_in = x;

        Tensor normed1, inv1;
        rmsnorm(x, layer.attn_norm_gain, normed1, inv1);

        Tensor q = lora_forward(normed1, layer.q_proj, rng, lc ? &lc->q_cache : nullptr);
        Tensor k = lora_forward(normed1, layer.k_proj, rng, lc ? &lc->k_cache : nullptr);
        Tensor v = lora_forward(normed1, layer.v_proj, rng, lc ? &lc->v_cache : nullptr);
        rope_inplace(q, cfg.n_heads, 1.0);
        rope_inplace(k, cfg.n_heads, 1.0);

        Tensor mix = Tensor::zeros({L, d});
        std::vector<Tensor> head_probs;
        if (lc != nullptr) head_probs.reserve(cfg.n_heads);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            Tensor qh = head_slice(q, h, dh);
            Tensor kh = head_slice(k, h, dh);
            Tensor vh = head_slice(v, h, dh);

            // Causal softmax rows over positions <= t.
            Tensor probs = Tensor::zeros({L, L});
            for (std::size_t t = 0; t < L; ++t) {
                double max_score = -1e300;
                std::vector<double> scores(t + 1);
                for (std::size_t u = 0; u <= t; ++u) {
                    double s = 0.0;
                    const double* qrow = &qh.data[t * dh];
                    const double* krow = &kh.data[u * dh];
                    for (std::size_t j = 0; j < dh; ++j) s += qrow[j] * krow[j];
                    s *= inv_sqrt_dh;
                    scores[u] = s;
                    max_score = std::max(max_score, s);
                }
                double denom = 0.0;
                for (std::size_t u = 0; u <= t; ++u) {
                    scores[u] = std::exp(scores[u] - max_score);
                    denom += scores[u];
                }
                for (std::size_t u = 0; u <= t; ++u) probs.at(t, u) = scores[u] / denom;
            }

            Tensor out_h = matmul(probs, vh);  // L×dh
            head_slice_add(mix, out_h, h, dh);
            if (lc != nullptr) head_probs.push_back(std::move(probs));
        }

        Tensor attn = lora_forward(mix, layer.o_proj, rng, lc ? &lc->o_cache : nullptr);
        Tensor h_res = x;
        for (std::size_t i = 0; i < h_res.data.size(); ++i) h_res.data[i] += attn.data[i];

        Tensor normed2, inv2;
        rmsnorm(h_res, layer.ffn_norm_gain, normed2, inv2);

        Tensor gate_pre = lora_forward(normed2, layer.gate_proj, rng, lc ? &lc->gate_cache : nullptr);
        Tensor up = lora_forward(normed2, layer.up_proj, rng, lc ? &lc->up_cache : nullptr);
        Tensor swiglu = Tensor::zeros(gate_pre.shape);
        for (std::size_t i = 0; i < swiglu.data.size(); ++i) {
            const double z = gate_pre.data[i];
            swiglu.data[i] = z * sigmoid(z) * up.data[i];
        }
        Tensor down = lora_forward(swiglu, layer.down_proj, rng, lc ? &lc->down_cache : nullptr);

        Tensor x_out = h_res;
        for (std::size_t i = 0; i < x_out.data.size(); ++i) x_out.data[i] += down.data[i];

        if (lc != nullptr) {
            lc->normed1 = std::move(normed1);
            lc->norm1_inv_rms = std::move(inv1);
            lc->q = std::move(q);
            lc->k = std::move(k);
            lc->v = std::move(v);
            lc->probs = std::move(head_probs);
            lc->mix = std::move(mix);
            lc->h = h_res;
            lc->normed2 = std::move(normed2);
            lc->norm2_inv_rms = std::move(inv2);
            lc->gate_pre = std::move(gate_pre);
            lc->up = std::move(up);
            lc->swiglu = std::move(swiglu);
        }
        x = std::move(x_out);
    }

    Tensor final_normed, final_inv;
    rmsnorm(x, model.final_norm_gain, final_normed, final_inv);
    Tensor logits = matmul_nt(final_normed, model.lm_head);
    check_finite(logits, "transformer_forward logits");

    if (cache != nullptr) {
        cache->final_in = std::move(x);
        cache->final_normed = std::move(final_normed);
        cache->final_inv_rms = std::move(final_inv);
    }
    return logits;
}

void transformer_backward(const Tensor& dlogits, const ToyTransformer& model,
                          const ForwardCache& cache, ModelGrads& grads) {
    if (cache.tokens.empty() || cache.layers.size() != model.layers.size()) {
        throw std::invalid_argument("transformer_backward: cache is empty or does not match "
                                    "the model (run forward with a cache first)");
    }
    const ToyTransformerConfig& cfg = model.config;
    const std::size_t L = cache.tokens.size();
    const std::size_t d = cfg.d_model;
    const std::size_t dh = d / cfg.n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    if (dlogits.shape.size() != 2 || dlogits.shape[0] != L || dlogits.shape[1] != cfg.vocab_size) {
        throw std::invalid_argument("transformer_backward: dlogits shape mismatch");
    }

    auto grads_for = [&grads](const LoraLinear& lin) -> LoraGrads* {
        if (!lin.adapter.has_value()) return nullptr;
        return &grads[lin.name];
    };

    // logits = final_normed · lm_headᵀ
    Tensor d_final_normed = matmul(dlogits, model.lm_head);
    Tensor dx = rmsnorm_backward(d_final_normed, cache.final_in, cache.final_inv_rms,
                                 model.final_norm_gain);

    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const TransformerLayer& layer = model.layers[li];
        const LayerCache& lc = cache.layers[li];

        // x_out = h + down(swiglu)
        Tensor dswiglu = lora_backward(dx, layer.down_proj, lc.down_cache,
                                       grads_for(layer.down_proj));
        Tensor dh_total = dx;  // residual branch

        // swiglu = silu(gate_pre) ⊙ up
        Tensor dgate_pre = Tensor::zeros(lc.gate_pre.shape);
        Tensor dup = Tensor::zeros(lc.up.shape);
        for (std::size_t i = 0; i < dswiglu.data.size(); ++i) {
            const double z = lc.gate_pre.data[i];
            const double sig = sigmoid(z);
            const double silu = z * sig;
            dgate_pre.data[i] = dswiglu.data[i] * lc.up.data[i] * sig * (1.0 + z * (1.0 - sig));
            dup.data[i] = dswiglu.data[i] * silu;
        }

        Tensor dnormed2 = lora_backward(dgate_pre, layer.gate_proj, lc.gate_cache,
                                        grads_for(layer.gate_proj));
        Tensor dnormed2_up = lora_backward(dup, layer.up_proj, lc.up_cache,
                                           grads_for(layer.up_proj));
        for (std::size_t i = 0; i < dnormed2.data.size(); ++i) {
            dnormed2.data[i] += dnormed2_up.data[i];
        }
        Tensor dh_norm = rmsnorm_backward(dnormed2, lc.h, lc.norm2_inv_rms, layer.ffn_norm_gain);
        for (std::size_t i = 0; i < dh_total.data.size(); ++i) dh_total.data[i] += dh_norm.data[i];

        // h = x_in + o_proj(mix)
        Tensor dmix = lora_backward(dh_total, layer.o_proj, lc.o_cache, grads_for(layer.o_proj));
        Tensor dx_in = dh_total;  // residual branch

        Tensor dq = Tensor::zeros({L, d});
        Tensor dk = Tensor::zeros({L, d});
        Tensor dv = Tensor::zeros({L, d});
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const Tensor& probs = lc.probs[h];
            Tensor kh = head_slice(lc.k, h, dh);
            Tensor qh = head_slice(lc.q, h, dh);
            Tensor vh = head_slice(lc.v, h, dh);
            Tensor dout_h = head_slice(dmix, h, dh);

            Tensor dprobs = matmul_nt(dout_h, vh);   // L×L
            Tensor dvh = matmul_tn(probs, dout_h);   // L×dh

            // Softmax backward; masked entries have probs == 0 and drop out.
            Tensor dscores = Tensor::zeros({L, L});
            for (std::size_t t = 0; t < L; ++t) {
                double dot = 0.0;
                for (std::size_t u = 0; u <= t; ++u) dot += dprobs.at(t, u) * probs.at(t, u);
                for (std::size_t u = 0; u <= t; ++u) {
                    dscores.at(t, u) = probs.at(t, u) * (dprobs.at(t, u) - dot);
                }
            }

            Tensor dqh = matmul(dscores, kh);     // L×dh
            Tensor dkh = matmul_tn(dscores, qh);  // L×dh
            for (double& g : dqh.data) g *= inv_sqrt_dh;
            for (double& g : dkh.data) g *= inv_sqrt_dh;

            head_slice_add(dq, dqh, h, dh);
            head_slice_add(dk, dkh, h, dh);
            head_slice_add(dv, dvh, h, dh);
        }

        rope_inplace(dq, cfg.n_heads, -1.0);
        rope_inplace(dk, cfg.n_heads, -1.0);

        Tensor dnormed1 = lora_backward(dq, layer.q_proj, lc.q_cache, grads_for(layer.q_proj));
        Tensor dnormed1_k = lora_backward(dk, layer.k_proj, lc.k_cache, grads_for(layer.k_proj));
        Tensor dnormed1_v = lora_backward(dv, layer.v_proj, lc.v_cache, grads_for(layer.v_proj));
        for (std::size_t i = 0; i < dnormed1.data.size(); ++i) {
            dnormed1.data[i] += dnormed1_k.data[i] + dnormed1_v.data[i];
        }
        Tensor dx_norm = rmsnorm_backward(dnormed1, lc.x_in, lc.norm1_inv_rms,
                                          layer.attn_norm_gain);
        for (std::size_t i = 0; i < dx_in.data.size(); ++i) dx_in.data[i] += dx_norm.data[i];

        dx = std::move(dx_in);
    }
    // Embeddings are frozen; dx at the input is discarded.
}

}  // namespace relcot::nn
