#pragma once

// One (image, class) pass through the whole system:
//   text -> vision-language patches -> similarity -> map -> threshold ->
//   dense prompt -> points -> semantically conditioned encoder -> decoder.
// Semi-automatic mode samples points from the thresholded similarity mask;
// manual mode takes user points or samples them from the ground truth. Both
// modes use the similarity mask as the dense prompt.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgsam/model.hpp"

namespace cgsam {

struct PipelineOptions {
    PromptMode mode = PromptMode::semi_automatic;
    real tau = kDefaultTau;
    int k = kDefaultPoints;
    std::uint64_t seed = 0;  // point sampling
    bool adapters = true;
};

struct PipelineInput {
    const Image* image = nullptr;
    std::string class_name;
    const BinaryMask* gt = nullptr;                // manual mode point source
    const std::vector<Point>* user_points = nullptr;  // manual mode, takes precedence over gt
};

struct PipelineTrace {
    Var logits;  // (H*W) x 1
    Var patches;
    Var scores;
    SimilarityMap map;
    BinaryPromptMask mask;
    PromptBundle bundle;
};

/// Records the pass into g (gradients flow to the vision tower only through
/// the semantic adapters; the thresholded prompts are plain values).
PipelineTrace pipeline_forward(Graph& g, const ClipGuidedSam& model, const PipelineInput& input,
                               const PipelineOptions& options);

struct PipelineResult {
    MaskPrediction prediction;
    PromptBundle bundle;
    SimilarityMap map;
    BinaryPromptMask mask;
};

PipelineResult run_mode_pipeline(const ClipGuidedSam& model, const PipelineInput& input, const PipelineOptions& options);

}  // namespace cgsam
