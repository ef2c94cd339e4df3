#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cgsam/data.hpp"
#include "cgsam/evaluation.hpp"
#include "cgsam/losses.hpp"
#include "cgsam/model.hpp"
#include "cgsam/optimizer.hpp"
#include "cgsam/pipeline.hpp"

namespace cgsam {

class TrainingAborted : public Error {
public:
    using Error::Error;
};

/// Every parameter belongs to exactly one group.
enum class ParamGroup {
    prompt_encoder,
    mask_decoder,
    adapters,
    vision_attention,    // attention of the top-C vision blocks
    image_backbone,      // segmentation encoder without adapters
    vision_frozen,       // rest of the vision tower
    text_encoder,
};

std::string to_string(ParamGroup group);

/// Which groups train. The text encoder, segmentation backbone and frozen
/// vision weights never do.
struct FreezePolicy {
    bool prompt_encoder = true;
    bool mask_decoder = true;
    bool adapters = true;
    bool vision_attention = true;
    bool trains(ParamGroup group) const;
    friend bool operator==(const FreezePolicy&, const FreezePolicy&) = default;
};

/// Throws ConfigError for a name no group claims.
ParamGroup classify_parameter(const std::string& name, const BudgetPlan& plan);

struct TrainableSet {
    std::vector<int> trainable;  // store indices, ascending
    std::map<ParamGroup, std::vector<int>> groups;
    ParamReport report;
};

/// Applies the policy to the model's trainable flags.
TrainableSet build_trainable_set(ClipGuidedSam& model, const FreezePolicy& policy);
/// Name-only predicate for parameter accounting.
TrainablePredicate trainable_predicate(const ModelConfig& config, const FreezePolicy& policy);

struct TrainConfig {
    PromptMode mode = PromptMode::semi_automatic;
    int epochs = 10;
    int batch_size = 8;
    AdamWConfig optimizer;
    std::uint64_t seed = 0;
    LossSwitches loss;
    real tau = kDefaultTau;
    int k = kDefaultPoints;
    FreezePolicy freeze;
    /// Optional first stage: train only the vision attention blocks to make the
    /// similarity map match the ground truth, before joint training.
    int pre_finetune_clip_epochs = 0;
    real eval_threshold = 0.5;
    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
    int epoch = 0;  // 1-based
    LossTerms loss;  // mean over samples
    real val_miou = 0.0;
    real lr = 0.0;
    int steps = 0;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    int best_epoch = 0;
    real best_val_miou = -1.0;
};

/// (image, class) pairs in a fixed order: images in order, classes in their
/// per-image order.
std::vector<std::pair<std::size_t, std::string>> training_pairs(const std::vector<LoadedSample>& samples);

struct TrainHooks {
    /// Called after each epoch (e.g. to append to a log).
    std::function<void(const EpochLog&)> on_epoch;
    /// Called when the validation score improves (e.g. to save a checkpoint).
    std::function<void(const EpochLog&)> on_best;
};

/// Joint training of the trainable set. Leaves the best-validation weights
/// in the model. Throws TrainingAborted on a non-finite loss.
TrainResult train(ClipGuidedSam& model, const TrainConfig& config, const std::vector<LoadedSample>& train_set,
                  const std::vector<LoadedSample>& val_set, const TrainHooks& hooks = {});

/// One optimization step on the given pairs. Returns the mean loss terms.
LossTerms train_step(ClipGuidedSam& model, AdamW& optimizer, const TrainConfig& config,
                     const std::vector<LoadedSample>& samples,
                     const std::vector<std::pair<std::size_t, std::string>>& batch, real lr, std::uint64_t step_seed);

/// Alignment pretraining of the vision-language towers. Stands in for
/// published weights at desk scale: both towers train so that the scaled
/// patch-text cosine similarity, upsampled to the image, matches each class
/// mask (an empty mask for classes absent from the image).
struct ClipPretrainConfig {
    int epochs = 30;
    int batch_size = 2;
    AdamWConfig optimizer{3e-3, 0.9, 0.999, 1e-8, 1e-4};
    real logit_scale = 10.0;
    std::uint64_t seed = 0;
    friend bool operator==(const ClipPretrainConfig&, const ClipPretrainConfig&) = default;
};

/// Returns the mean loss per epoch. Trainable flags are restored afterwards.
std::vector<real> pretrain_clip(ClipGuidedSam& model, const ClipPretrainConfig& config,
                                const std::vector<LoadedSample>& samples);

/// Promptable-segmentation pretraining of the segmentation side, the
/// counterpart of pretrain_clip: the image encoder (without adapters),
/// prompt encoder and mask decoder learn class-agnostic masks from 1..K
/// ground-truth points, with no dense prompt and no semantic inputs.
struct SamPretrainConfig {
    int epochs = 10;
    int batch_size = 4;
    AdamWConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 1e-4};
    int max_points = kDefaultPoints;
    bool image_encoder = true;  // false: only the prompt encoder and decoder learn
    std::uint64_t seed = 0;
    friend bool operator==(const SamPretrainConfig&, const SamPretrainConfig&) = default;
};

/// Returns the mean loss per epoch. Trainable flags are restored afterwards.
std::vector<real> pretrain_sam(ClipGuidedSam& model, const SamPretrainConfig& config,
                               const std::vector<LoadedSample>& samples);

/// Copies the vision_encoder. and text_encoder. weights (same shapes required).
void copy_vision_language(const ClipGuidedSam& from, ClipGuidedSam& to);
/// Copies the image_encoder. (without adapters), prompt_encoder. and mask_decoder. weights.
void copy_segmentation(const ClipGuidedSam& from, ClipGuidedSam& to);

struct GradientGatingReport {
    real vision_encoder_norm = 0.0;                 // all vision-tower parameters
    real text_encoder_norm = 0.0;
    std::vector<real> vision_attention_block_norms;  // one per top-C block
    real decoder_and_prompt_norm = 0.0;
};

/// One forward/backward with gradients recorded for every parameter.
GradientGatingReport check_gradient_gating(const ClipGuidedSam& model, const std::vector<LoadedSample>& samples,
                                           const TrainConfig& config);

}  // namespace cgsam
