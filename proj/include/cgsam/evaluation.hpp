#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cgsam/data.hpp"
#include "cgsam/metrics.hpp"
#include "cgsam/pipeline.hpp"
#include "json.hpp"

namespace cgsam {

class EvaluationError : public Error {
public:
    using Error::Error;
};

struct MetricsRecord {
    std::map<std::string, real> per_class_iou;
    real miou = 0.0;
    real mae = 0.0;
    real s_alpha = 0.0;
    real e_phi = 0.0;
    real f_beta_w = 0.0;
    std::size_t samples = 0;
    std::map<std::string, std::size_t> point_sources;  // how many samples drew points from each source
    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

nlohmann::json to_json(const MetricsRecord& record);
MetricsRecord metrics_from_json(const nlohmann::json& j);

/// One evaluated (image, class) pair.
struct SampleOutcome {
    std::string id;
    std::string cls;
    std::vector<real> probabilities;
    BinaryMask gt;
    PointSource source = PointSource::similarity_mask;
};

using SampleKey = std::pair<std::string, std::string>;  // (image id, class)

/// Class-wise accumulate-then-divide mIoU. Every ground-truth key needs a prediction.
real miou_protocol(const std::map<SampleKey, BinaryMask>& predictions, const std::map<SampleKey, BinaryMask>& gts);

/// mIoU on probabilities binarized at threshold; MAE, S, E and weighted F
/// averaged over samples (skipped when full is false).
MetricsRecord aggregate_metrics(const std::vector<SampleOutcome>& outcomes, real threshold = 0.5, bool full = true);

struct EvalOptions {
    PipelineOptions pipeline;
    real threshold = 0.5;
    bool full_metrics = true;
    std::filesystem::path dump_dir;  // per-sample probability PNGs when set
};

/// Point-sampling seed for sample `index`, class `cls_index` of an evaluation run.
std::uint64_t eval_point_seed(std::uint64_t seed, std::size_t index, std::size_t cls_index);

/// Runs the pipeline on every (image, present class) pair of samples.
MetricsRecord evaluate(const ClipGuidedSam& model, const std::vector<LoadedSample>& samples, const EvalOptions& options,
                       std::vector<SampleOutcome>* outcomes = nullptr);

}  // namespace cgsam
