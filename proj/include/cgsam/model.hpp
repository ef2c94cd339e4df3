#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cgsam/backbone.hpp"
#include "cgsam/conditioning.hpp"
#include "cgsam/model_config.hpp"
#include "cgsam/params.hpp"
#include "cgsam/seg_head.hpp"
#include "cgsam/semantic_prompting.hpp"

namespace cgsam {

/// The (t, V, s) triple injected into the semantic adapters.
struct SemanticInputs {
    PatchEmbeddings v;
    SimilarityScores s;
    TextEmbedding t;
};

struct ParamReportEntry {
    std::string name;
    std::size_t total = 0;
    std::size_t trainable = 0;
};

/// Per-component parameter counts. Adapter parameters are attributed to the
/// image_encoder entry.
struct ParamReport {
    std::vector<ParamReportEntry> entries;  // image_encoder, prompt_encoder, mask_decoder, vision_encoder, text_encoder
    std::size_t total = 0;
    std::size_t trainable = 0;
    std::size_t adapters = 0;  // included in image_encoder

    const ParamReportEntry& at(const std::string& name) const;
    /// Image encoder without adapters.
    std::size_t vanilla_image_encoder() const { return at("image_encoder").total - adapters; }
    /// Image encoder without adapters + prompt encoder + mask decoder.
    std::size_t base_segmentation() const;
    /// 100 * adapters / vanilla image encoder.
    real adapter_overhead_percent() const;
};

using TrainablePredicate = std::function<bool(const std::string& name)>;

/// Groups (name, size) records by component prefix.
ParamReport count_parameters(const std::vector<std::pair<std::string, std::size_t>>& shapes,
                             const TrainablePredicate& trainable);

class ClipGuidedSam {
public:
    explicit ClipGuidedSam(const ModelConfig& config);

    /// Parameter accounting without allocating any weights.
    static ParamReport count(const ModelConfig& config, const TrainablePredicate& trainable);

    const ModelConfig& config() const { return config_; }
    const BudgetPlan& plan() const { return plan_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

    /// Replaces the vision-language image tower (its weights must already be in params()).
    void set_patch_encoder(std::shared_ptr<const PatchEncoder> encoder);
    const PatchEncoder& patch_encoder() const { return *patch_encoder_; }

    /// Embeds a raw prompt (no template), always running the text encoder.
    TextEmbedding encode_text(std::string_view prompt) const;
    /// Embeds render_prompt(template, class_name), caching per class name.
    TextEmbedding class_embedding(const std::string& class_name) const;
    /// Uncached graph form of class_embedding, differentiable in the text tower.
    Var class_text_features(Graph& g, const std::string& class_name) const;
    std::size_t text_encoder_runs() const;
    void clear_text_cache();

    PatchEmbeddings encode_image_vl(const Image& image) const;
    FeatureMap encode_image_seg(const Image& image, const SemanticInputs& semantic, bool adapters = true) const;

    // Graph-level building blocks.
    Var vision_features(Graph& g, const Image& image) const;
    /// Full-resolution mask logits ((H*W) x 1).
    Var segment(Graph& g, const Image& image, const SemanticContext* ctx, const PromptBundle& prompts,
                bool adapters = true) const;

private:
    void check_image(const Image& image) const;

    ModelConfig config_;
    BudgetPlan plan_;
    Tokenizer tokenizer_;
    ParameterStore store_;
    TextEncoder text_encoder_;
    std::shared_ptr<const PatchEncoder> patch_encoder_;
    SegmentationEncoder seg_encoder_;
    PromptEncoder prompt_encoder_;
    MaskDecoder mask_decoder_;
    Matrix image_pe_;

    mutable std::mutex text_mutex_;
    mutable std::map<std::string, TextEmbedding> text_cache_;
    mutable std::size_t text_runs_ = 0;
};

}  // namespace cgsam
