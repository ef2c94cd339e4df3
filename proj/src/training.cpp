#include "cgsam/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cgsam/rng.hpp"

namespace cgsam {

std::string to_string(ParamGroup group)
{
    switch (group) {
    case ParamGroup::prompt_encoder: return "prompt_encoder";
    case ParamGroup::mask_decoder: return "mask_decoder";
    case ParamGroup::adapters: return "adapters";
    case ParamGroup::vision_attention: return "vision_attention";
    case ParamGroup::image_backbone: return "image_backbone";
    case ParamGroup::vision_frozen: return "vision_frozen";
    case ParamGroup::text_encoder: return "text_encoder";
    }
    return "unknown";
}

bool FreezePolicy::trains(ParamGroup group) const
{
    switch (group) {
    case ParamGroup::prompt_encoder: return prompt_encoder;
    case ParamGroup::mask_decoder: return mask_decoder;
    case ParamGroup::adapters: return adapters;
    case ParamGroup::vision_attention: return vision_attention;
    default: return false;
    }
}

ParamGroup classify_parameter(const std::string& name, const BudgetPlan& plan)
{
    if (name.starts_with("prompt_encoder.")) return ParamGroup::prompt_encoder;
    if (name.starts_with("mask_decoder.")) return ParamGroup::mask_decoder;
    if (name.starts_with("adapters.")) return ParamGroup::adapters;
    if (name.starts_with("text_encoder.")) return ParamGroup::text_encoder;
    if (name.starts_with("image_encoder.")) return ParamGroup::image_backbone;
    if (name.starts_with("vision_encoder.")) {
        const std::string blocks = "vision_encoder.blocks.";
        if (name.starts_with(blocks)) {
            const auto dot = name.find('.', blocks.size());
            const int block = std::stoi(name.substr(blocks.size(), dot - blocks.size()));
            if (name.compare(dot, 6, ".attn.") == 0 && plan.vision_block_trainable(block))
                return ParamGroup::vision_attention;
        }
        return ParamGroup::vision_frozen;
    }
    throw ConfigError("parameter '" + name + "' belongs to no freezing group");
}

TrainableSet build_trainable_set(ClipGuidedSam& model, const FreezePolicy& policy)
{
    TrainableSet set;
    ParameterStore& store = model.params();
    std::vector<std::pair<std::string, std::size_t>> shapes;
    for (int i = 0; i < store.size(); ++i) {
        Parameter& p = store[i];
        const ParamGroup group = classify_parameter(p.name, model.plan());
        p.trainable = policy.trains(group);
        set.groups[group].push_back(i);
        if (p.trainable) set.trainable.push_back(i);
        shapes.emplace_back(p.name, p.value.size());
    }
    set.report = count_parameters(shapes, [&](const std::string& n) { return store[store.index(n)].trainable; });
    return set;
}

TrainablePredicate trainable_predicate(const ModelConfig& config, const FreezePolicy& policy)
{
    const BudgetPlan plan = configure_budget(config.clip_trainable_blocks, config.semantic_adapter_blocks,
                                             config.vision_encoder, config.image_encoder, config.regular_adapters);
    return [plan, policy](const std::string& name) { return policy.trains(classify_parameter(name, plan)); };
}

void TrainConfig::validate() const
{
    auto fail = [](const std::string& field, const std::string& what) { throw ConfigError(field + ": " + what); };
    if (epochs < 1) fail("train.epochs", "must be >= 1");
    if (batch_size < 1) fail("train.batch_size", "must be >= 1");
    if (!(optimizer.lr > 0)) fail("train.lr", "must be positive");
    if (optimizer.weight_decay < 0) fail("train.weight_decay", "must be >= 0");
    if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1)) fail("train.beta1", "must be in [0, 1)");
    if (!(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) fail("train.beta2", "must be in [0, 1)");
    if (!(optimizer.eps > 0)) fail("train.eps", "must be positive");
    if (!loss.any()) fail("train.loss", "at least one of bce, dice, iou must be enabled");
    if (!(tau > 0 && tau < 1)) fail("train.tau", "must be in (0, 1)");
    if (k < 1) fail("train.k", "must be >= 1");
    if (pre_finetune_clip_epochs < 0) fail("train.pre_finetune_clip_epochs", "must be >= 0");
    if (!(eval_threshold > 0 && eval_threshold < 1)) fail("train.eval_threshold", "must be in (0, 1)");
}

std::vector<std::pair<std::size_t, std::string>> training_pairs(const std::vector<LoadedSample>& samples)
{
    std::vector<std::pair<std::size_t, std::string>> pairs;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (const auto& c : samples[i].classes) pairs.emplace_back(i, c);
    return pairs;
}

namespace {

bool finite(const GradStore& g)
{
    for (const Matrix& m : g.grads)
        for (real v : m.data)
            if (!std::isfinite(v)) return false;
    return true;
}

std::string describe(const LossTerms& t)
{
    std::ostringstream os;
    os << "bce=" << t.bce << " dice=" << t.dice << " iou=" << t.iou << " total=" << t.total;
    return os.str();
}

std::string batch_ids(const std::vector<LoadedSample>& samples,
                      const std::vector<std::pair<std::size_t, std::string>>& batch)
{
    std::string out;
    for (const auto& [i, c] : batch) out += (out.empty() ? "" : ", ") + samples[i].id + "/" + c;
    return out;
}

void add_terms(LossTerms& acc, const LossTerms& t, real w)
{
    acc.bce += w * t.bce;
    acc.dice += w * t.dice;
    acc.iou += w * t.iou;
    acc.total += w * t.total;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    auto gen = substream(seed, "shuffle", epoch);
    for (std::size_t i = 0; i + 1 < n; ++i) std::swap(p[i], p[i + uniform_index(gen, n - i)]);
    return p;
}

using Pairs = std::vector<std::pair<std::size_t, std::string>>;

/// Similarity logits (scaled cosine, upsampled) against the ground truth.
void pre_finetune_clip(ClipGuidedSam& model, const TrainConfig& config, const std::vector<LoadedSample>& samples)
{
    constexpr real kLogitScale = 10.0;
    FreezePolicy only_vision{false, false, false, true};
    TrainableSet set = build_trainable_set(model, only_vision);
    AdamW opt(model.params(), set.trainable, config.optimizer);
    const Pairs pairs = training_pairs(samples);
    const int per_epoch = static_cast<int>((pairs.size() + config.batch_size - 1) / config.batch_size);
    const int total = per_epoch * config.pre_finetune_clip_epochs;
    const LossSwitches loss{true, true, false};
    int step = 0;
    for (int epoch = 0; epoch < config.pre_finetune_clip_epochs; ++epoch) {
        const auto order = permutation(pairs.size(), config.seed, 1000 + epoch);
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            GradStore grads(model.params().size());
            const std::size_t end = std::min(order.size(), b + config.batch_size);
            for (std::size_t j = b; j < end; ++j) {
                const auto& [i, cls] = pairs[order[j]];
                const LoadedSample& s = samples[i];
                Graph g(GradMode::trainable);
                Var v = model.vision_features(g, s.image);
                Var sim = ops::cosine_rows(v, g.constant(model.class_embedding(cls).values), kCosineEps);
                Var logits = ops::scale(ops::bilinear_resize(sim, model.patch_encoder().grid(), s.image.size()),
                                        kLogitScale);
                LossTerms terms;
                Var l = segmentation_loss(logits, s.masks.at(cls), loss, &terms);
                if (!std::isfinite(terms.total))
                    throw TrainingAborted("non-finite similarity loss on " + s.id + "/" + cls + " (" + describe(terms) + ")");
                g.backward(l);
                g.accumulate_param_grads(grads);
            }
            grads.scale(1.0 / static_cast<real>(end - b));
            opt.step(model.params(), grads, cosine_lr(config.optimizer.lr, step++, total));
        }
    }
}

}  // namespace

LossTerms train_step(ClipGuidedSam& model, AdamW& optimizer, const TrainConfig& config,
                     const std::vector<LoadedSample>& samples, const Pairs& batch, real lr, std::uint64_t step_seed)
{
    GradStore grads(model.params().size());
    LossTerms mean;
    const real w = 1.0 / static_cast<real>(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& [i, cls] = batch[j];
        const LoadedSample& s = samples[i];
        const BinaryMask& gt = s.masks.at(cls);
        PipelineOptions po{config.mode, config.tau, config.k, substream(step_seed, "pair", j)(), true};
        Graph g(GradMode::trainable);
        PipelineTrace t = pipeline_forward(g, model, {&s.image, cls, &gt, nullptr}, po);
        LossTerms terms;
        Var loss = segmentation_loss(t.logits, gt, config.loss, &terms);
        if (!std::isfinite(terms.total))
            throw TrainingAborted("non-finite loss on " + s.id + "/" + cls + " in batch [" + batch_ids(samples, batch) +
                                  "] (" + describe(terms) + ")");
        g.backward(loss);
        g.accumulate_param_grads(grads);
        add_terms(mean, terms, w);
    }
    grads.scale(w);
    if (!finite(grads))
        throw TrainingAborted("non-finite gradient in batch [" + batch_ids(samples, batch) + "] (" + describe(mean) + ")");
    optimizer.step(model.params(), grads, lr);
    return mean;
}

TrainResult train(ClipGuidedSam& model, const TrainConfig& config, const std::vector<LoadedSample>& train_set,
                  const std::vector<LoadedSample>& val_set, const TrainHooks& hooks)
{
    config.validate();
    if (train_set.empty()) throw InputError("training set is empty");
    if (config.pre_finetune_clip_epochs > 0) pre_finetune_clip(model, config, train_set);

    const TrainableSet set = build_trainable_set(model, config.freeze);
    AdamW opt(model.params(), set.trainable, config.optimizer);
    const Pairs pairs = training_pairs(train_set);
    const int per_epoch = static_cast<int>((pairs.size() + config.batch_size - 1) / config.batch_size);
    const int total = per_epoch * config.epochs;

    EvalOptions eval;
    eval.pipeline = {config.mode, config.tau, config.k, config.seed, true};
    eval.threshold = config.eval_threshold;
    eval.full_metrics = false;

    TrainResult result;
    std::vector<Matrix> best;
    int step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto order = permutation(pairs.size(), config.seed, static_cast<std::uint64_t>(epoch));
        EpochLog log;
        log.epoch = epoch;
        log.lr = cosine_lr(config.optimizer.lr, step, total);
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            Pairs batch;
            for (std::size_t j = b; j < std::min(order.size(), b + config.batch_size); ++j) batch.push_back(pairs[order[j]]);
            const real lr = cosine_lr(config.optimizer.lr, step, total);
            const LossTerms t = train_step(model, opt, config, train_set, batch, lr,
                                           substream(config.seed, "points", static_cast<std::uint64_t>(step))());
            add_terms(log.loss, t, static_cast<real>(batch.size()) / static_cast<real>(pairs.size()));
            ++step;
        }
        log.steps = step;
        log.val_miou = val_set.empty() ? 0.0 : evaluate(model, val_set, eval).miou;
        if (log.val_miou > result.best_val_miou) {
            result.best_val_miou = log.val_miou;
            result.best_epoch = epoch;
            best.clear();
            for (int i : set.trainable) best.push_back(model.params()[i].value);
            if (hooks.on_best) hooks.on_best(log);
        }
        result.epochs.push_back(log);
        if (hooks.on_epoch) hooks.on_epoch(log);
    }
    for (std::size_t k = 0; k < set.trainable.size(); ++k) model.params()[set.trainable[k]].value = best[k];
    return result;
}

namespace {

bool is_segmentation_weight(const std::string& n)
{
    return n.starts_with("image_encoder.") || n.starts_with("prompt_encoder.") || n.starts_with("mask_decoder.");
}

bool is_vision_language_weight(const std::string& n)
{
    return n.starts_with("vision_encoder.") || n.starts_with("text_encoder.");
}

void copy_where(const ClipGuidedSam& from, ClipGuidedSam& to, bool (*pred)(const std::string&), const char* what)
{
    const ParameterStore& src = from.params();
    ParameterStore& dst = to.params();
    for (int i = 0; i < src.size(); ++i) {
        const Parameter& p = src[i];
        if (!pred(p.name)) continue;
        const int j = dst.find(p.name);
        if (j < 0 || !dst[j].value.same_shape(p.value))
            throw ConfigError(std::string(what) + " weights do not fit: " + p.name);
        dst[j].value = p.value;
    }
    to.clear_text_cache();
}

}  // namespace

std::vector<real> pretrain_clip(ClipGuidedSam& model, const ClipPretrainConfig& config,
                                const std::vector<LoadedSample>& samples)
{
    if (config.epochs < 0) throw ConfigError("clip_pretrain.epochs: must be >= 0");
    if (config.batch_size < 1) throw ConfigError("clip_pretrain.batch_size: must be >= 1");
    if (samples.empty()) throw InputError("pretraining set is empty");
    ParameterStore& store = model.params();
    std::vector<bool> saved(store.size());
    std::vector<int> indices;
    for (int i = 0; i < store.size(); ++i) {
        saved[i] = store[i].trainable;
        const std::string& n = store[i].name;
        store[i].trainable = is_vision_language_weight(n);
        if (store[i].trainable) indices.push_back(i);
    }

    std::vector<std::string> classes;
    for (const auto& s : samples)
        for (const auto& c : s.classes)
            if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
    std::sort(classes.begin(), classes.end());

    AdamW opt(store, indices, config.optimizer);
    const int per_epoch = static_cast<int>((samples.size() + config.batch_size - 1) / config.batch_size);
    const int total = per_epoch * config.epochs;
    const LossSwitches loss{true, true, false};
    std::vector<real> log;
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = permutation(samples.size(), config.seed, 5000 + epoch);
        real epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            GradStore grads(store.size());
            const std::size_t end = std::min(order.size(), b + config.batch_size);
            for (std::size_t j = b; j < end; ++j) {
                const LoadedSample& s = samples[order[j]];
                Graph g(GradMode::trainable);
                Var v = model.vision_features(g, s.image);
                Var sum;
                for (const std::string& cls : classes) {
                    const auto it = s.masks.find(cls);
                    const BinaryMask gt = it != s.masks.end() ? it->second : BinaryMask(s.image.height, s.image.width);
                    Var sim = ops::cosine_rows(v, model.class_text_features(g, cls), kCosineEps);
                    Var logits = ops::scale(
                        ops::bilinear_resize(sim, model.patch_encoder().grid(), s.image.size()), config.logit_scale);
                    LossTerms terms;
                    Var l = segmentation_loss(logits, gt, loss, &terms);
                    if (!std::isfinite(terms.total))
                        throw TrainingAborted("non-finite alignment loss on " + s.id + "/" + cls + " (" +
                                              describe(terms) + ")");
                    sum = sum.valid() ? ops::add(sum, l) : l;
                }
                sum = ops::scale(sum, 1.0 / static_cast<real>(classes.size()));
                epoch_loss += sum.value()(0, 0);
                g.backward(sum);
                g.accumulate_param_grads(grads);
            }
            grads.scale(1.0 / static_cast<real>(end - b));
            opt.step(store, grads, cosine_lr(config.optimizer.lr, step++, total));
        }
        log.push_back(epoch_loss / static_cast<real>(samples.size()));
    }
    for (int i = 0; i < store.size(); ++i) store[i].trainable = saved[i];
    model.clear_text_cache();
    return log;
}


std::vector<real> pretrain_sam(ClipGuidedSam& model, const SamPretrainConfig& config,
                               const std::vector<LoadedSample>& samples)
{
    if (config.epochs < 0) throw ConfigError("sam_pretrain.epochs: must be >= 0");
    if (config.batch_size < 1) throw ConfigError("sam_pretrain.batch_size: must be >= 1");
    if (config.max_points < 1) throw ConfigError("sam_pretrain.max_points: must be >= 1");
    if (samples.empty()) throw InputError("pretraining set is empty");
    ParameterStore& store = model.params();
    std::vector<bool> saved(store.size());
    std::vector<int> indices;
    for (int i = 0; i < store.size(); ++i) {
        saved[i] = store[i].trainable;
        store[i].trainable = is_segmentation_weight(store[i].name) &&
                             (config.image_encoder || !store[i].name.starts_with("image_encoder."));
        if (store[i].trainable) indices.push_back(i);
    }

    AdamW opt(store, indices, config.optimizer);
    const Pairs pairs = training_pairs(samples);
    const int per_epoch = static_cast<int>((pairs.size() + config.batch_size - 1) / config.batch_size);
    const int total = per_epoch * config.epochs;
    const LossSwitches loss;
    std::vector<real> log;
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = permutation(pairs.size(), config.seed, 9000 + epoch);
        real epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            GradStore grads(store.size());
            const std::size_t end = std::min(order.size(), b + config.batch_size);
            for (std::size_t j = b; j < end; ++j) {
                const auto& [i, cls] = pairs[order[j]];
                const LoadedSample& s = samples[i];
                const BinaryMask& gt = s.masks.at(cls);
                auto gen = substream(config.seed, "sam_pretrain_points", static_cast<std::uint64_t>(step), j);
                const int k = 1 + static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(config.max_points)));
                PromptBundle bundle;
                bundle.mode = PromptMode::manual;
                bundle.points = sample_points_from_gt(gt, k, gen());
                Graph g(GradMode::trainable);
                Var logits = model.segment(g, s.image, nullptr, bundle, false);
                LossTerms terms;
                Var l = segmentation_loss(logits, gt, loss, &terms);
                if (!std::isfinite(terms.total))
                    throw TrainingAborted("non-finite pretraining loss on " + s.id + "/" + cls + " (" +
                                          describe(terms) + ")");
                epoch_loss += terms.total;
                g.backward(l);
                g.accumulate_param_grads(grads);
            }
            grads.scale(1.0 / static_cast<real>(end - b));
            opt.step(store, grads, cosine_lr(config.optimizer.lr, step++, total));
        }
        log.push_back(epoch_loss / static_cast<real>(pairs.size()));
    }
    for (int i = 0; i < store.size(); ++i) store[i].trainable = saved[i];
    return log;
}

void copy_vision_language(const ClipGuidedSam& from, ClipGuidedSam& to)
{
    copy_where(from, to, is_vision_language_weight, "vision-language");
}

void copy_segmentation(const ClipGuidedSam& from, ClipGuidedSam& to)
{
    copy_where(from, to, is_segmentation_weight, "segmentation");
}

GradientGatingReport check_gradient_gating(const ClipGuidedSam& model, const std::vector<LoadedSample>& samples,
                                           const TrainConfig& config)
{
    const ParameterStore& store = model.params();
    GradStore grads(store.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const LoadedSample& s = samples[i];
        const std::string& cls = s.classes.front();
        const BinaryMask& gt = s.masks.at(cls);
        PipelineOptions po{config.mode, config.tau, config.k, substream(config.seed, "gating", i)(), true};
        Graph g(GradMode::all);
        PipelineTrace t = pipeline_forward(g, model, {&s.image, cls, &gt, nullptr}, po);
        g.backward(segmentation_loss(t.logits, gt, config.loss));
        g.accumulate_param_grads(grads);
    }
    auto norm_of = [&](const std::function<bool(const std::string&)>& pred) {
        return std::sqrt(grads.squared_norm(store.select([&](const Parameter& p) { return pred(p.name); })));
    };
    GradientGatingReport r;
    r.vision_encoder_norm = norm_of([](const std::string& n) { return n.starts_with("vision_encoder."); });
    r.text_encoder_norm = norm_of([](const std::string& n) { return n.starts_with("text_encoder."); });
    r.decoder_and_prompt_norm = norm_of(
        [](const std::string& n) { return n.starts_with("mask_decoder.") || n.starts_with("prompt_encoder."); });
    for (int b : model.plan().trainable_vision_blocks) {
        const std::string prefix = "vision_encoder.blocks." + std::to_string(b) + ".attn.";
        r.vision_attention_block_norms.push_back(norm_of([&](const std::string& n) { return n.starts_with(prefix); }));
    }
    return r;
}

}  // namespace cgsam
