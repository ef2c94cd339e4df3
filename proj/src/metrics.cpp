#include "cgsam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cgsam {

namespace {

constexpr real kEps = std::numeric_limits<real>::epsilon();

void check_sizes(std::size_t n, const BinaryMask& gt, const char* what)
{
    if (n != gt.values.size() || n == 0)
        throw InputError(std::string(what) + ": prediction and ground truth sizes differ");
}

struct View {
    const std::vector<real>* pred;
    const BinaryMask* gt;
    int r0, r1, c0, c1;  // half-open block
    int count() const { return (r1 - r0) * (c1 - c0); }
};

real ssim(const View& v)
{
    const int n = v.count();
    if (n == 0) return 0.0;
    const int w = v.gt->width;
    real mx = 0, my = 0;
    for (int r = v.r0; r < v.r1; ++r)
        for (int c = v.c0; c < v.c1; ++c) {
            mx += (*v.pred)[r * w + c];
            my += v.gt->values[r * w + c];
        }
    mx /= n;
    my /= n;
    real sx = 0, sy = 0, sxy = 0;
    for (int r = v.r0; r < v.r1; ++r)
        for (int c = v.c0; c < v.c1; ++c) {
            const real dx = (*v.pred)[r * w + c] - mx, dy = v.gt->values[r * w + c] - my;
            sx += dx * dx;
            sy += dy * dy;
            sxy += dx * dy;
        }
    const real denom = n - 1 + kEps;
    sx /= denom;
    sy /= denom;
    sxy /= denom;
    const real alpha = 4 * mx * my * sxy;
    const real beta = (mx * mx + my * my) * (sx + sy);
    if (alpha != 0) return alpha / (beta + kEps);
    return beta == 0 ? 1.0 : 0.0;
}

real s_object(const std::vector<real>& x, const BinaryMask& gt, bool foreground)
{
    std::vector<real> vals;
    for (std::size_t i = 0; i < x.size(); ++i)
        if ((gt.values[i] != 0) == foreground) vals.push_back(foreground ? x[i] : 1 - x[i]);
    if (vals.empty()) return 0.0;
    const real mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    real var = 0;
    for (real v : vals) var += (v - mean) * (v - mean);
    const real sigma = vals.size() > 1 ? std::sqrt(var / (vals.size() - 1)) : 0.0;
    return 2 * mean / (mean * mean + 1 + sigma + kEps);
}

}  // namespace

real binary_iou(const BinaryMask& pred, const BinaryMask& gt)
{
    if (pred.height != gt.height || pred.width != gt.width) throw InputError("binary_iou: mask sizes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        const bool p = pred.values[i] != 0, g = gt.values[i] != 0;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<real>(inter) / static_cast<real>(uni);
}

void IouAccumulator::add(const std::string& cls, const BinaryMask& pred, const BinaryMask& gt)
{
    if (pred.height != gt.height || pred.width != gt.width) throw InputError("mIoU: mask sizes differ");
    auto& [inter, uni] = counts_[cls];
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        const bool p = pred.values[i] != 0, g = gt.values[i] != 0;
        inter += p && g;
        uni += p || g;
    }
}

std::map<std::string, real> IouAccumulator::per_class() const
{
    std::map<std::string, real> out;
    for (const auto& [cls, c] : counts_)
        if (c.second > 0) out[cls] = static_cast<real>(c.first) / static_cast<real>(c.second);
    return out;
}

real IouAccumulator::miou() const
{
    const auto per = per_class();
    if (per.empty()) return 0.0;
    real s = 0;
    for (const auto& [cls, v] : per) s += v;
    return s / static_cast<real>(per.size());
}

real mae(const std::vector<real>& pred, const BinaryMask& gt)
{
    check_sizes(pred.size(), gt, "mae");
    real s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt.values[i]);
    return s / static_cast<real>(pred.size());
}

real s_measure(const std::vector<real>& pred, const BinaryMask& gt)
{
    check_sizes(pred.size(), gt, "s_measure");
    const real n = static_cast<real>(pred.size());
    const real y = static_cast<real>(gt.count()) / n;
    const real mean_pred = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
    if (y == 0) return 1 - mean_pred;
    if (y == 1) return mean_pred;

    const real object = y * s_object(pred, gt, true) + (1 - y) * s_object(pred, gt, false);

    // Centroid of the ground truth, rounded half-to-even, then shifted by one.
    real sr = 0, sc = 0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c)
            if (gt.at(r, c)) {
                sr += r;
                sc += c;
            }
    const real cnt = static_cast<real>(gt.count());
    const int h = gt.height, w = gt.width;
    const int cy = static_cast<int>(std::nearbyint(sr / cnt)) + 1;
    const int cx = static_cast<int>(std::nearbyint(sc / cnt)) + 1;
    const real area = static_cast<real>(h) * w;
    const real w1 = static_cast<real>(cx) * cy / area;
    const real w2 = static_cast<real>(cy) * (w - cx) / area;
    const real w3 = static_cast<real>(h - cy) * cx / area;
    const real w4 = 1 - w1 - w2 - w3;
    const real region = w1 * ssim({&pred, &gt, 0, cy, 0, cx}) + w2 * ssim({&pred, &gt, 0, cy, cx, w}) +
                        w3 * ssim({&pred, &gt, cy, h, 0, cx}) + w4 * ssim({&pred, &gt, cy, h, cx, w});
    return std::max(0.0, 0.5 * object + 0.5 * region);
}

real e_measure(const std::vector<real>& pred, const BinaryMask& gt)
{
    check_sizes(pred.size(), gt, "e_measure");
    const std::size_t n = pred.size();
    std::vector<real> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = pred[i] >= 0.5 ? 1.0 : 0.0;
    const std::size_t g_fg = gt.count();
    real sum = 0;
    if (g_fg == 0) {
        for (real v : b) sum += 1 - v;
    } else if (g_fg == n) {
        for (real v : b) sum += v;
    } else {
        const real mp = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<real>(n);
        const real mg = static_cast<real>(g_fg) / static_cast<real>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const real a = b[i] - mp, c = gt.values[i] - mg;
            const real align = 2 * a * c / (a * a + c * c + kEps);
            sum += (align + 1) * (align + 1) / 4;
        }
    }
    return sum / static_cast<real>(n);
}

void nearest_foreground(const BinaryMask& mask, std::vector<real>& distance, std::vector<int>& index)
{
    const int h = mask.height, w = mask.width;
    if (mask.count() == 0) throw InputError("nearest_foreground: mask is empty");
    // Vertical pass: nearest foreground row within each column (smaller row on ties).
    constexpr int none = -1;
    std::vector<int> near_row(static_cast<std::size_t>(h) * w, none);
    for (int c = 0; c < w; ++c) {
        int last = none;
        for (int r = 0; r < h; ++r) {
            if (mask.at(r, c)) last = r;
            near_row[r * w + c] = last;
        }
        int next = none;
        for (int r = h - 1; r >= 0; --r) {
            if (mask.at(r, c)) next = r;
            int& best = near_row[r * w + c];
            if (next != none && (best == none || next - r < r - best)) best = next;
        }
    }
    distance.assign(static_cast<std::size_t>(h) * w, 0.0);
    index.assign(static_cast<std::size_t>(h) * w, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            long best = std::numeric_limits<long>::max();
            int arg = 0;
            for (int c2 = 0; c2 < w; ++c2) {
                const int r2 = near_row[r * w + c2];
                if (r2 == none) continue;
                const long d = static_cast<long>(r - r2) * (r - r2) + static_cast<long>(c - c2) * (c - c2);
                if (d < best) {
                    best = d;
                    arg = r2 * w + c2;
                }
            }
            distance[r * w + c] = std::sqrt(static_cast<real>(best));
            index[r * w + c] = arg;
        }
}

real weighted_fbeta(const std::vector<real>& pred, const BinaryMask& gt)
{
    check_sizes(pred.size(), gt, "weighted_fbeta");
    if (gt.count() == 0) return 0.0;
    const int h = gt.height, w = gt.width;
    const std::size_t n = pred.size();
    std::vector<real> dist;
    std::vector<int> idx;
    nearest_foreground(gt, dist, idx);

    std::vector<real> e(n), et(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = std::abs(pred[i] - gt.values[i]);
    for (std::size_t i = 0; i < n; ++i) et[i] = gt.values[i] ? e[i] : e[idx[i]];

    // 7x7 Gaussian, sigma 5, normalized; zero padding outside the image.
    real kernel[7][7];
    real ksum = 0;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) ksum += kernel[dy + 3][dx + 3] = std::exp(-(dx * dx + dy * dy) / 50.0);
    for (auto& row : kernel)
        for (real& v : row) v /= ksum;

    real sum_ew_fg = 0, sum_ew_bg = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const int i = r * w + c;
            real ea = 0;
            for (int dy = -3; dy <= 3; ++dy)
                for (int dx = -3; dx <= 3; ++dx) {
                    const int rr = r + dy, cc = c + dx;
                    if (rr >= 0 && rr < h && cc >= 0 && cc < w) ea += kernel[dy + 3][dx + 3] * et[rr * w + cc];
                }
            const bool fg = gt.values[i] != 0;
            const real min_e = fg && ea < e[i] ? ea : e[i];
            const real b = fg ? 1.0 : 2.0 - std::exp(std::log(0.5) / 5.0 * dist[i]);
            (fg ? sum_ew_fg : sum_ew_bg) += min_e * b;
        }
    const real g_fg = static_cast<real>(gt.count());
    const real tpw = g_fg - sum_ew_fg;
    const real recall = 1 - sum_ew_fg / g_fg;
    const real precision = tpw / (tpw + sum_ew_bg + kEps);
    return 2 * recall * precision / (recall + precision + kEps);
}

}  // namespace cgsam
