#include "cgsam/pipeline.hpp"

namespace cgsam {

PipelineTrace pipeline_forward(Graph& g, const ClipGuidedSam& model, const PipelineInput& input,
                               const PipelineOptions& options)
{
    if (input.image == nullptr) throw InputError("pipeline: no image");
    if (options.mode == PromptMode::manual && input.gt == nullptr &&
        (input.user_points == nullptr || input.user_points->empty()))
        throw InputError("manual mode needs user points or a ground-truth mask");
    const ModelConfig& cfg = model.config();
    const Image& image = *input.image;

    PipelineTrace t;
    const TextEmbedding text = model.class_embedding(input.class_name);
    Var text_var = g.constant(text.values);
    t.patches = model.vision_features(g, image);
    t.scores = ops::cosine_rows(t.patches, text_var, kCosineEps);

    const GridSize grid = model.patch_encoder().grid();
    t.map = similarity_to_map({t.scores.value()}, grid, image.size());
    t.mask = threshold_map(t.map, options.tau);
    t.bundle.mode = options.mode;
    t.bundle.dense = make_dense_prompt(t.mask, cfg.dense_prompt_size());
    if (options.mode == PromptMode::semi_automatic) {
        t.bundle.points = sample_points(t.mask, options.k, options.seed, t.map);
    } else if (input.user_points != nullptr && !input.user_points->empty()) {
        t.bundle.points = {*input.user_points, PointSource::user, false};
    } else {
        t.bundle.points = sample_points_from_gt(*input.gt, options.k, options.seed);
    }

    const SemanticContext ctx{t.patches, t.scores, text_var, grid, cfg.modalities};
    t.logits = model.segment(g, image, &ctx, t.bundle, options.adapters);
    return t;
}

PipelineResult run_mode_pipeline(const ClipGuidedSam& model, const PipelineInput& input, const PipelineOptions& options)
{
    Graph g(GradMode::none);
    PipelineTrace t = pipeline_forward(g, model, input, options);
    PipelineResult r;
    r.prediction = {input.image->height, input.image->width, t.logits.value().data};
    r.bundle = std::move(t.bundle);
    r.map = std::move(t.map);
    r.mask = std::move(t.mask);
    return r;
}

}  // namespace cgsam
