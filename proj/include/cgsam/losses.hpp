#pragma once

#include "cgsam/autograd.hpp"
#include "cgsam/image.hpp"

namespace cgsam {

struct LossSwitches {
    bool bce = true;
    bool dice = true;
    bool iou = true;
    bool any() const { return bce || dice || iou; }
    friend bool operator==(const LossSwitches&, const LossSwitches&) = default;
};

struct LossTerms {
    real bce = 0.0;
    real dice = 0.0;
    real iou = 0.0;
    real total = 0.0;
};

inline constexpr real kLogitClamp = 15.0;
inline constexpr real kLossSmooth = 1.0;

struct LossResult {
    LossTerms terms;
    Matrix grad;  // d total / d logits, shaped like the logits
};

/// BCE on sigmoid(clamp(logits, +-15)) averaged over pixels, soft Dice and
/// soft IoU on sigmoid(logits) with smoothing 1. Disabled terms are reported
/// as 0 and excluded from the total. logits: (H*W) x 1.
LossResult segmentation_loss(const Matrix& logits, const BinaryMask& gt, const LossSwitches& switches);

/// Graph op wrapping segmentation_loss; terms (optional) receives the breakdown.
Var segmentation_loss(Var logits, const BinaryMask& gt, const LossSwitches& switches, LossTerms* terms = nullptr);

}  // namespace cgsam
