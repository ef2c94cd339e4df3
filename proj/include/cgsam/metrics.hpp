#pragma once

// Segmentation metrics. Prediction maps are row-major probabilities in [0, 1]
// with the same size as the binary ground truth.

#include <map>
#include <string>
#include <vector>

#include "cgsam/image.hpp"

namespace cgsam {

/// |p & g| / |p | g|; two empty masks score 1.
real binary_iou(const BinaryMask& pred, const BinaryMask& gt);

/// Class-wise IoU accumulated over a whole split: IoU_c = sum(I) / sum(U),
/// mIoU = mean over classes with nonzero union.
class IouAccumulator {
public:
    void add(const std::string& cls, const BinaryMask& pred, const BinaryMask& gt);
    std::map<std::string, real> per_class() const;
    real miou() const;

private:
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts_;  // intersection, union
};

real mae(const std::vector<real>& pred, const BinaryMask& gt);
/// Structure measure, alpha = 0.5, clipped at 0.
real s_measure(const std::vector<real>& pred, const BinaryMask& gt);
/// Enhanced-alignment measure of the prediction binarized at 0.5, averaged over pixels.
real e_measure(const std::vector<real>& pred, const BinaryMask& gt);
/// Weighted F-measure (beta^2 = 1, 7x7 Gaussian with sigma 5). Empty ground truth scores 0.
real weighted_fbeta(const std::vector<real>& pred, const BinaryMask& gt);

/// Exact Euclidean distance from every pixel to the nearest foreground pixel
/// of `mask`, with that pixel's row-major index. Ties prefer the smallest
/// column, then the smallest row. Requires a nonempty mask.
void nearest_foreground(const BinaryMask& mask, std::vector<real>& distance, std::vector<int>& index);

}  // namespace cgsam
