#pragma once

// Straightforward reimplementations used as test oracles. They favour
// readability over speed and share no code with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cgsam/image.hpp"

namespace cgsam::oracle {

inline BinaryMask random_mask(int h, int w, std::mt19937_64& gen, double p = 0.5)
{
    std::bernoulli_distribution b(p);
    BinaryMask m(h, w);
    for (auto& v : m.values) v = b(gen) ? 1 : 0;
    return m;
}

inline std::vector<real> random_probabilities(std::size_t n, std::mt19937_64& gen)
{
    std::uniform_real_distribution<real> u(0.0, 1.0);
    std::vector<real> p(n);
    for (auto& v : p) v = u(gen);
    return p;
}

inline real sigmoid(real x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Losses {
    real bce, dice, iou;
};

/// Mean BCE, soft Dice and soft IoU with smoothing 1, from the textbook formulas.
inline Losses losses(const std::vector<real>& logits, const BinaryMask& gt)
{
    const std::size_t n = logits.size();
    real bce = 0, sp = 0, sg = 0, spg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const real z = std::clamp(logits[i], -15.0, 15.0);
        const real p = sigmoid(z);
        const real g = gt.values[i];
        bce += -(g * std::log(p) + (1 - g) * std::log(1 - p));
        const real q = sigmoid(logits[i]);
        sp += q;
        sg += g;
        spg += q * g;
    }
    return {bce / static_cast<real>(n), 1 - (2 * spg + 1) / (sp + sg + 1), 1 - (spg + 1) / (sp + sg - spg + 1)};
}

/// Dataset mIoU by pixel loops: per class, sum intersections and unions
/// over all its pairs, then average the classes with a nonzero union.
struct Pair {
    std::string cls;
    BinaryMask pred;
    BinaryMask gt;
};

inline real miou(const std::vector<Pair>& pairs)
{
    std::map<std::string, std::pair<long, long>> acc;
    for (const auto& p : pairs)
        for (int r = 0; r < p.gt.height; ++r)
            for (int c = 0; c < p.gt.width; ++c) {
                const int a = p.pred.at(r, c), b = p.gt.at(r, c);
                acc[p.cls].first += a & b;
                acc[p.cls].second += a | b;
            }
    real s = 0;
    int k = 0;
    for (const auto& [cls, v] : acc)
        if (v.second > 0) {
            s += static_cast<real>(v.first) / static_cast<real>(v.second);
            ++k;
        }
    return k == 0 ? 0.0 : s / k;
}

inline real mae(const std::vector<real>& pred, const BinaryMask& gt)
{
    real s = 0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c) s += std::abs(pred[r * gt.width + c] - gt.at(r, c));
    return s / (gt.height * gt.width);
}

// Structure measure. Block SSIM uses one-pass sums; object similarity uses
// mean and sample standard deviation.
namespace detail {

constexpr real eps = std::numeric_limits<real>::epsilon();

inline real block_ssim(const std::vector<real>& x, const BinaryMask& y, int r0, int r1, int c0, int c1)
{
    const int w = y.width;
    const real n = static_cast<real>((r1 - r0) * (c1 - c0));
    if (n == 0) return 0.0;
    real sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
            const real a = x[r * w + c], b = y.at(r, c);
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    const real mx = sx / n, my = sy / n;
    const real vx = (sxx - n * mx * mx) / (n - 1 + eps);
    const real vy = (syy - n * my * my) / (n - 1 + eps);
    const real cxy = (sxy - n * mx * my) / (n - 1 + eps);
    const real alpha = 4 * mx * my * cxy;
    const real beta = (mx * mx + my * my) * (vx + vy);
    if (alpha != 0) return alpha / (beta + eps);
    return beta == 0 ? 1.0 : 0.0;
}

inline real object_score(const std::vector<real>& vals)
{
    if (vals.empty()) return 0.0;
    real m = 0;
    for (real v : vals) m += v;
    m /= vals.size();
    real ss = 0;
    for (real v : vals) ss += (v - m) * (v - m);
    const real sd = vals.size() > 1 ? std::sqrt(ss / (vals.size() - 1)) : 0.0;
    return 2 * m / (m * m + 1 + sd + eps);
}

}  // namespace detail

inline real s_measure(const std::vector<real>& x, const BinaryMask& gt)
{
    const int h = gt.height, w = gt.width;
    real fg = 0, mean = 0;
    for (int i = 0; i < h * w; ++i) {
        fg += gt.values[i];
        mean += x[i];
    }
    const real y = fg / (h * w);
    mean /= h * w;
    if (y == 0) return 1 - mean;
    if (y == 1) return mean;

    std::vector<real> in_fg, in_bg;
    for (int i = 0; i < h * w; ++i) (gt.values[i] ? in_fg : in_bg).push_back(gt.values[i] ? x[i] : 1 - x[i]);
    const real object = y * detail::object_score(in_fg) + (1 - y) * detail::object_score(in_bg);

    real rs = 0, cs = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (gt.at(r, c)) {
                rs += r;
                cs += c;
            }
    const int cy = static_cast<int>(std::nearbyint(rs / fg)) + 1;
    const int cx = static_cast<int>(std::nearbyint(cs / fg)) + 1;
    const real a = static_cast<real>(h * w);
    const real w1 = cx * cy / a, w2 = (w - cx) * cy / a, w3 = cx * (h - cy) / a;
    const real region = w1 * detail::block_ssim(x, gt, 0, cy, 0, cx) + w2 * detail::block_ssim(x, gt, 0, cy, cx, w) +
                        w3 * detail::block_ssim(x, gt, cy, h, 0, cx) +
                        (1 - w1 - w2 - w3) * detail::block_ssim(x, gt, cy, h, cx, w);
    return std::max(0.0, (object + region) / 2);
}

/// Enhanced-alignment measure of the prediction binarized at 0.5.
inline real e_measure(const std::vector<real>& x, const BinaryMask& gt)
{
    const int n = gt.height * gt.width;
    real fg = 0, pm = 0;
    for (int i = 0; i < n; ++i) {
        fg += gt.values[i];
        pm += x[i] >= 0.5;
    }
    real total = 0;
    for (int i = 0; i < n; ++i) {
        const real b = x[i] >= 0.5;
        real phi;
        if (fg == 0)
            phi = 1 - b;
        else if (fg == n)
            phi = b;
        else {
            const real dp = b - pm / n, dg = gt.values[i] - fg / n;
            const real xi = 2 * dp * dg / (dp * dp + dg * dg + detail::eps);
            phi = (1 + xi) * (1 + xi) / 4;
        }
        total += phi;
    }
    return total / n;
}

/// Weighted F-measure with a brute-force distance transform: each pixel
/// looks at every foreground pixel (ties: smallest column, then row).
inline real weighted_fbeta(const std::vector<real>& x, const BinaryMask& gt)
{
    const int h = gt.height, w = gt.width, n = h * w;
    std::vector<real> err(n), et(n), dist(n);
    for (int i = 0; i < n; ++i) err[i] = std::abs(x[i] - gt.values[i]);
    int fg = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            long best = std::numeric_limits<long>::max();
            int br = 0, bc = 0;
            for (int c2 = 0; c2 < w; ++c2)
                for (int r2 = 0; r2 < h; ++r2) {
                    if (!gt.at(r2, c2)) continue;
                    const long d = static_cast<long>(r - r2) * (r - r2) + static_cast<long>(c - c2) * (c - c2);
                    if (d < best) {
                        best = d;
                        br = r2;
                        bc = c2;
                    }
                }
            if (best == std::numeric_limits<long>::max()) return 0.0;
            dist[r * w + c] = std::sqrt(static_cast<real>(best));
            et[r * w + c] = err[br * w + bc];
            fg += gt.at(r, c);
        }
    real kernel[7][7], ks = 0;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) ks += kernel[i][j] = std::exp(-((i - 3) * (i - 3) + (j - 3) * (j - 3)) / (2 * 25.0));
    real ew_fg = 0, ew_bg = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            real ea = 0;
            for (int i = 0; i < 7; ++i)
                for (int j = 0; j < 7; ++j) {
                    const int rr = r + i - 3, cc = c + j - 3;
                    if (rr >= 0 && rr < h && cc >= 0 && cc < w) ea += kernel[i][j] / ks * et[rr * w + cc];
                }
            const int k = r * w + c;
            if (gt.at(r, c))
                ew_fg += std::min(ea, err[k]);
            else
                ew_bg += err[k] * (2 - std::pow(0.5, dist[k] / 5));
        }
    const real recall = 1 - ew_fg / fg;
    const real tp = fg - ew_fg;
    const real precision = tp / (detail::eps + tp + ew_bg);
    return 2 * recall * precision / (detail::eps + recall + precision);
}

}  // namespace cgsam::oracle
