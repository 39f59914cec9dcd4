#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "relcot/model.hpp"
#include "relcot/tokenizer.hpp"

namespace relcot::train {

enum class LossMaskPolicy { ResponseOnly, FullSequence };

std::string to_string(LossMaskPolicy policy);
LossMaskPolicy loss_mask_policy_from_string(const std::string& text);

/// Run hyperparameters. Defaults are the shipped configuration: batches of
/// 8 with 2 accumulation steps, learning rate 2e-4, one epoch, and the
/// adapter settings from LoraConfig applied to all seven projections.
struct TrainConfig {
    std::size_t batch_size = 8;
    std::size_t grad_accum_steps = 2;
    double learning_rate = 2e-4;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    LossMaskPolicy loss_mask_policy = LossMaskPolicy::ResponseOnly;
    nn::LoraConfig lora;
    std::vector<std::string> target_projections = {
        "q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj",
    };

    void validate() const;
    static TrainConfig from_json(const std::string& text);
    std::string to_json() const;

    bool operator==(const TrainConfig&) const = default;
};

/// Per-example mean cross-entropy over masked target positions, averaged
/// across the batch. Accumulates adapter gradients of that mean into
/// `grads`. The rng drives adapter dropout and is required when the model
/// is in training mode with dropout enabled. Throws when the batch is empty
/// or a record has no masked targets.
double sft_batch_gradients(const nn::ToyTransformer& model,
                           const std::vector<const EncodedRecord*>& batch,
                           LossMaskPolicy policy, nn::Rng* rng, nn::ModelGrads& grads);

/// Loss only, no gradients, eval-mode forward.
double sft_batch_loss(const nn::ToyTransformer& model,
                      const std::vector<const EncodedRecord*>& batch, LossMaskPolicy policy);

struct AdamParams {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over adapter tensors only. Moment slots are keyed by projection
/// name and created on first touch.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamParams params) : params_(params) {}

    /// One update from accumulated gradients. Throws when a gradient names
    /// a projection without an adapter.
    void step(nn::ToyTransformer& model, const nn::ModelGrads& grads);

    std::size_t steps_taken() const { return t_; }

private:
    struct Slot {
        nn::Tensor m;
        nn::Tensor v;
    };

    AdamParams params_;
    std::size_t t_ = 0;
    std::map<std::string, Slot> slots_;
};

struct UpdateInfo {
    std::size_t update_index = 0;  // 1-based
    std::size_t epoch = 0;         // 0-based
    double loss = 0.0;
};

struct TrainHooks {
    /// Called after every optimizer update; return false to stop training.
    std::function<bool(const UpdateInfo&)> after_update;
};

struct TrainReport {
    std::vector<double> losses;  // one entry per optimizer update
    double final_loss = 0.0;
    std::size_t updates = 0;
    std::size_t epochs_completed = 0;
    bool stopped_early = false;
    double wall_seconds = 0.0;
    std::size_t trainable_parameters = 0;
    std::size_t frozen_parameters = 0;

    std::string to_json() const;
    static TrainReport from_json(const std::string& text);
};

/// Supervised fine-tuning loop: shuffle each epoch, form micro-batches of
/// batch_size, accumulate grad_accum_steps of them per optimizer update
/// (summed then divided by the number of micro-batches), and step Adam.
/// The model must already carry adapters. Base weights are never touched.
TrainReport train(nn::ToyTransformer& model, const std::vector<EncodedRecord>& dataset,
                  const TrainConfig& config, const TrainHooks& hooks = {});

/// Teacher-forced label accuracy: the fraction of records whose final
/// response token before <eos> (the "0"/"1" verdict) is the model's argmax
/// continuation of the preceding context. Runs eval-mode forwards and
/// restores the model's training flags afterwards. Throws when a record
/// does not end with a label digit before <eos>.
double label_accuracy(nn::ToyTransformer& model, const Vocab& vocab,
                      const std::vector<EncodedRecord>& dataset);

}  // namespace relcot::train
