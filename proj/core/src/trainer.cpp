#include "relcot/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relcot::train {

using nlohmann::json;

std::string to_string(LossMaskPolicy policy) {
    switch (policy) {
        case LossMaskPolicy::ResponseOnly: return "response_only";
        case LossMaskPolicy::FullSequence: return "full_sequence";
    }
    throw std::invalid_argument("unknown loss mask policy");
}

LossMaskPolicy loss_mask_policy_from_string(const std::string& text) {
    if (text == "response_only") return LossMaskPolicy::ResponseOnly;
    if (text == "full_sequence") return LossMaskPolicy::FullSequence;
    throw std::invalid_argument("unknown loss mask policy \"" + text +
                                "\" (expected response_only or full_sequence)");
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (grad_accum_steps == 0) throw std::invalid_argument("grad_accum_steps must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (target_projections.empty()) {
        throw std::invalid_argument("target_projections must name at least one projection");
    }
    lora.validate();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad train config JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
    TrainConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
        else if (key == "grad_accum_steps") cfg.grad_accum_steps = value.get<std::size_t>();
        else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
        else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "loss_mask_policy") {
            cfg.loss_mask_policy = loss_mask_policy_from_string(value.get<std::string>());
        } else if (key == "lora_r") cfg.lora.r = value.get<std::size_t>();
        else if (key == "lora_alpha") cfg.lora.alpha = value.get<double>();
        else if (key == "lora_dropout") cfg.lora.dropout_p = value.get<double>();
        else if (key == "target_projections") {
            cfg.target_projections = value.get<std::vector<std::string>>();
        } else {
            throw std::invalid_argument("unknown train config key \"" + key + "\"");
        }
    }
    cfg.validate();
    return cfg;
}

std::string TrainConfig::to_json() const {
    json j;
    j["batch_size"] = batch_size;
    j["grad_accum_steps"] = grad_accum_steps;
    j["learning_rate"] = learning_rate;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["loss_mask_policy"] = to_string(loss_mask_policy);
    j["lora_r"] = lora.r;
    j["lora_alpha"] = lora.alpha;
    j["lora_dropout"] = lora.dropout_p;
    j["target_projections"] = target_projections;
    return j.dump();
}

namespace {

std::size_t mask_begin(const EncodedRecord& record, LossMaskPolicy policy) {
    return policy == LossMaskPolicy::ResponseOnly ? record.response_begin : 1;
}

// Mean cross-entropy over the record's masked targets. When dlogits is
// non-null it receives the gradient of that mean, pre-divided by batch_n so
// per-example backward passes accumulate straight into the batch gradient.
double masked_cross_entropy(const nn::Tensor& logits, const EncodedRecord& record,
                            LossMaskPolicy policy, std::size_t batch_n, nn::Tensor* dlogits) {
    const std::size_t len = record.tokens.size();
    const std::size_t vocab = logits.cols();
    const std::size_t begin = mask_begin(record, policy);
    if (begin >= len) {
        throw std::invalid_argument("record has no masked target positions");
    }
    const double n_masked = static_cast<double>(len - begin);
    const double grad_scale = 1.0 / (n_masked * static_cast<double>(batch_n));

    double loss = 0.0;
    std::vector<double> probs(vocab);
    for (std::size_t t = begin; t < len; ++t) {
        const std::size_t row = t - 1;
        const double* lr = &logits.data[row * vocab];
        double max_logit = lr[0];
        for (std::size_t j = 1; j < vocab; ++j) max_logit = std::max(max_logit, lr[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) {
            probs[j] = std::exp(lr[j] - max_logit);
            denom += probs[j];
        }
        const std::size_t target = record.tokens[t];
        loss += -(lr[target] - max_logit - std::log(denom));
        if (dlogits != nullptr) {
            double* dr = &dlogits->data[row * vocab];
            for (std::size_t j = 0; j < vocab; ++j) dr[j] = probs[j] / denom * grad_scale;
            dr[target] -= grad_scale;
        }
    }
    return loss / n_masked;
}

}  // namespace

double sft_batch_gradients(const nn::ToyTransformer& model,
                           const std::vector<const EncodedRecord*>& batch,
                           LossMaskPolicy policy, nn::Rng* rng, nn::ModelGrads& grads) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    double loss_sum = 0.0;
    for (const EncodedRecord* record : batch) {
        nn::ForwardCache cache;
        const nn::Tensor logits = transformer_forward(record->tokens, model, &cache, rng);
        nn::Tensor dlogits = nn::Tensor::zeros(logits.shape);
        loss_sum += masked_cross_entropy(logits, *record, policy, batch.size(), &dlogits);
        transformer_backward(dlogits, model, cache, grads);
    }
    return loss_sum / static_cast<double>(batch.size());
}

double sft_batch_loss(const nn::ToyTransformer& model,
                      const std::vector<const EncodedRecord*>& batch, LossMaskPolicy policy) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    double loss_sum = 0.0;
    for (const EncodedRecord* record : batch) {
        const nn::Tensor logits = transformer_forward(record->tokens, model);
        loss_sum += masked_cross_entropy(logits, *record, policy, batch.size(), nullptr);
    }
    return loss_sum / static_cast<double>(batch.size());
}

void AdamOptimizer::step(nn::ToyTransformer& model, const nn::ModelGrads& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));

    std::map<std::string, nn::LoraLinear*> by_name;
    for (auto& [name, lin] : model.projections()) by_name[name] = lin;

    auto apply = [&](nn::Tensor& param, const nn::Tensor& grad, Slot& slot) {
        if (!param.same_shape(grad)) {
            throw std::invalid_argument("gradient shape does not match the parameter");
        }
        if (slot.m.data.empty()) {
            slot.m = nn::Tensor::zeros(param.shape);
            slot.v = nn::Tensor::zeros(param.shape);
        }
        for (std::size_t i = 0; i < param.data.size(); ++i) {
            const double g = grad.data[i];
            slot.m.data[i] = params_.beta1 * slot.m.data[i] + (1.0 - params_.beta1) * g;
            slot.v.data[i] = params_.beta2 * slot.v.data[i] + (1.0 - params_.beta2) * g * g;
            const double mhat = slot.m.data[i] / bc1;
            const double vhat = slot.v.data[i] / bc2;
            param.data[i] -= params_.learning_rate * mhat / (std::sqrt(vhat) + params_.eps);
        }
    };

    for (const auto& [name, grad] : grads) {
        auto it = by_name.find(name);
        if (it == by_name.end() || !it->second->adapter.has_value()) {
            throw std::invalid_argument("gradient for \"" + name +
                                        "\" does not match an adapted projection");
        }
        apply(it->second->adapter->A, grad.dA, slots_[name + ".A"]);
        apply(it->second->adapter->B, grad.dB, slots_[name + ".B"]);
    }
}

namespace {

void shuffle_indices(std::vector<std::size_t>& indices, nn::Rng& rng) {
    for (std::size_t i = indices.size(); i > 1; --i) {
        const std::size_t j = rng.bounded(i);
        std::swap(indices[i - 1], indices[j]);
    }
}

struct TrainingModeGuard {
    nn::ToyTransformer& model;
    explicit TrainingModeGuard(nn::ToyTransformer& m) : model(m) { model.set_training(true); }
    ~TrainingModeGuard() { model.set_training(false); }
};

void scale_grads(nn::ModelGrads& grads, double scale) {
    for (auto& [name, g] : grads) {
        for (double& v : g.dA.data) v *= scale;
        for (double& v : g.dB.data) v *= scale;
    }
}

}  // namespace

TrainReport train(nn::ToyTransformer& model, const std::vector<EncodedRecord>& dataset,
                  const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("empty training dataset");
    if (!model.any_adapter()) {
        throw std::invalid_argument("model has no adapters; inject them before training");
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    const nn::ParamCount params = count_parameters(model);
    report.trainable_parameters = params.trainable;
    report.frozen_parameters = params.frozen;

    TrainingModeGuard guard(model);
    nn::Rng dropout_rng(config.seed);
    AdamOptimizer optimizer(AdamParams{config.learning_rate});

    std::size_t update_index = 0;
    bool stopped = false;
    for (std::size_t epoch = 0; epoch < config.epochs && !stopped; ++epoch) {
        std::vector<std::size_t> order(dataset.size());
        std::iota(order.begin(), order.end(), 0);
        nn::Rng shuffle_rng(config.seed + epoch + 1);
        shuffle_indices(order, shuffle_rng);

        // Consecutive micro-batches of batch_size, grad_accum_steps of them
        // per optimizer update; the trailing groups may run short.
        std::size_t cursor = 0;
        while (cursor < order.size() && !stopped) {
            nn::ModelGrads grads;
            double loss_sum = 0.0;
            std::size_t micro_batches = 0;
            for (std::size_t a = 0; a < config.grad_accum_steps && cursor < order.size(); ++a) {
                std::vector<const EncodedRecord*> batch;
                batch.reserve(config.batch_size);
                for (std::size_t b = 0; b < config.batch_size && cursor < order.size(); ++b) {
                    batch.push_back(&dataset[order[cursor++]]);
                }
                loss_sum += sft_batch_gradients(model, batch, config.loss_mask_policy,
                                                &dropout_rng, grads);
                ++micro_batches;
            }
            scale_grads(grads, 1.0 / static_cast<double>(micro_batches));
            optimizer.step(model, grads);
            ++update_index;
            const double loss = loss_sum / static_cast<double>(micro_batches);
            report.losses.push_back(loss);
            if (hooks.after_update &&
                !hooks.after_update(UpdateInfo{update_index, epoch, loss})) {
                stopped = true;
            }
        }
        if (!stopped) report.epochs_completed = epoch + 1;
    }

    report.updates = update_index;
    report.final_loss = report.losses.empty() ? 0.0 : report.losses.back();
    report.stopped_early = stopped;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string TrainReport::to_json() const {
    json j;
    j["losses"] = losses;
    j["final_loss"] = final_loss;
    j["updates"] = updates;
    j["epochs_completed"] = epochs_completed;
    j["stopped_early"] = stopped_early;
    j["wall_seconds"] = wall_seconds;
    j["trainable_parameters"] = trainable_parameters;
    j["frozen_parameters"] = frozen_parameters;
    return j.dump();
}

TrainReport TrainReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad train report JSON: ") + e.what());
    }
    TrainReport r;
    r.losses = j.at("losses").get<std::vector<double>>();
    r.final_loss = j.at("final_loss").get<double>();
    r.updates = j.at("updates").get<std::size_t>();
    r.epochs_completed = j.at("epochs_completed").get<std::size_t>();
    r.stopped_early = j.at("stopped_early").get<bool>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.trainable_parameters = j.at("trainable_parameters").get<std::size_t>();
    r.frozen_parameters = j.at("frozen_parameters").get<std::size_t>();
    return r;
}

double label_accuracy(nn::ToyTransformer& model, const Vocab& vocab,
                      const std::vector<EncodedRecord>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("empty dataset");
    const auto zero_id = vocab.word_id("0");
    const auto one_id = vocab.word_id("1");
    if (!zero_id.has_value() || !one_id.has_value()) {
        throw std::invalid_argument("vocabulary lacks the \"0\"/\"1\" label words");
    }

    // Flip to eval mode for clean argmax forwards, restore on exit.
    std::vector<bool> saved;
    for (auto& [name, lin] : model.projections()) saved.push_back(lin->training_mode);
    model.set_training(false);

    std::size_t correct = 0;
    try {
        for (const EncodedRecord& record : dataset) {
            const std::size_t len = record.tokens.size();
            if (len < 3 || record.tokens[len - 1] != Vocab::kEos ||
                (record.tokens[len - 2] != *zero_id && record.tokens[len - 2] != *one_id)) {
                throw std::invalid_argument(
                    "record does not end with a label digit before <eos>");
            }
            const nn::Tensor logits = transformer_forward(record.tokens, model);
            const std::size_t row = len - 3;
            const double* lr = &logits.data[row * logits.cols()];
            std::size_t argmax = 0;
            for (std::size_t j = 1; j < logits.cols(); ++j) {
                if (lr[j] > lr[argmax]) argmax = j;
            }
            if (argmax == record.tokens[len - 2]) ++correct;
        }
    } catch (...) {
        std::size_t i = 0;
        for (auto& [name, lin] : model.projections()) lin->training_mode = saved[i++];
        throw;
    }
    std::size_t i = 0;
    for (auto& [name, lin] : model.projections()) lin->training_mode = saved[i++];
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace relcot::train
