#include "cgsam/evaluation.hpp"

#include "cgsam/rng.hpp"

namespace cgsam {

using nlohmann::json;

json to_json(const MetricsRecord& r)
{
    return {{"miou", r.miou},       {"mae", r.mae},         {"s_alpha", r.s_alpha},
            {"e_phi", r.e_phi},     {"f_beta_w", r.f_beta_w}, {"samples", r.samples},
            {"per_class_iou", r.per_class_iou}, {"point_sources", r.point_sources}};
}

MetricsRecord metrics_from_json(const json& j)
{
    MetricsRecord r;
    r.miou = j.at("miou").get<real>();
    r.mae = j.at("mae").get<real>();
    r.s_alpha = j.at("s_alpha").get<real>();
    r.e_phi = j.at("e_phi").get<real>();
    r.f_beta_w = j.at("f_beta_w").get<real>();
    r.samples = j.at("samples").get<std::size_t>();
    r.per_class_iou = j.at("per_class_iou").get<std::map<std::string, real>>();
    r.point_sources = j.at("point_sources").get<std::map<std::string, std::size_t>>();
    return r;
}

real miou_protocol(const std::map<SampleKey, BinaryMask>& predictions, const std::map<SampleKey, BinaryMask>& gts)
{
    IouAccumulator acc;
    for (const auto& [key, gt] : gts) {
        const auto it = predictions.find(key);
        if (it == predictions.end())
            throw EvaluationError("no prediction for image " + key.first + ", class " + key.second);
        acc.add(key.second, it->second, gt);
    }
    return acc.miou();
}

MetricsRecord aggregate_metrics(const std::vector<SampleOutcome>& outcomes, real threshold, bool full)
{
    MetricsRecord r;
    IouAccumulator acc;
    for (const SampleOutcome& o : outcomes) {
        BinaryMask pred(o.gt.height, o.gt.width);
        for (std::size_t i = 0; i < o.probabilities.size(); ++i) pred.values[i] = o.probabilities[i] >= threshold;
        acc.add(o.cls, pred, o.gt);
        if (full) {
            r.mae += mae(o.probabilities, o.gt);
            r.s_alpha += s_measure(o.probabilities, o.gt);
            r.e_phi += e_measure(o.probabilities, o.gt);
            r.f_beta_w += weighted_fbeta(o.probabilities, o.gt);
        }
        ++r.point_sources[to_string(o.source)];
    }
    r.samples = outcomes.size();
    r.per_class_iou = acc.per_class();
    r.miou = acc.miou();
    if (!outcomes.empty()) {
        const real n = static_cast<real>(outcomes.size());
        r.mae /= n;
        r.s_alpha /= n;
        r.e_phi /= n;
        r.f_beta_w /= n;
    }
    return r;
}

std::uint64_t eval_point_seed(std::uint64_t seed, std::size_t index, std::size_t cls_index)
{
    return substream(seed, "eval_points", index, cls_index)();
}

MetricsRecord evaluate(const ClipGuidedSam& model, const std::vector<LoadedSample>& samples, const EvalOptions& options,
                       std::vector<SampleOutcome>* outcomes)
{
    std::vector<SampleOutcome> local;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const LoadedSample& s = samples[i];
        for (std::size_t c = 0; c < s.classes.size(); ++c) {
            const std::string& cls = s.classes[c];
            const BinaryMask& gt = s.masks.at(cls);
            PipelineOptions po = options.pipeline;
            po.seed = eval_point_seed(options.pipeline.seed, i, c);
            const PipelineResult res = run_mode_pipeline(model, {&s.image, cls, &gt, nullptr}, po);
            SampleOutcome o{s.id, cls, res.prediction.probabilities(), gt, res.bundle.points.source};
            if (!options.dump_dir.empty())
                write_png_gray(options.dump_dir / (s.id + "_" + cls + ".png"), gt.height, gt.width, o.probabilities);
            local.push_back(std::move(o));
        }
    }
    MetricsRecord r = aggregate_metrics(local, options.threshold, options.full_metrics);
    if (outcomes != nullptr) *outcomes = std::move(local);
    return r;
}

}  // namespace cgsam
