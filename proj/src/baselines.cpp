#include "nowcast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nowcast/errors.hpp"

namespace nowcast::baseline {

namespace {

std::vector<double> echo_field(const Grid& g) {
    std::vector<double> out(g.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.values[i] <= kRadarMissing ? 0.0 : g.values[i];
    return out;
}

int median_of(std::vector<int> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    // lower median keeps the result an integer displacement that was observed
    return xs[(n - 1) / 2];
}

}  // namespace

MotionField MotionField::zero(int height, int width, int block, int radius) {
    MotionField m;
    m.height = height;
    m.width = width;
    m.block = block;
    m.radius = radius;
    m.rows = (height + block - 1) / block;
    m.cols = (width + block - 1) / block;
    m.u.assign(static_cast<std::size_t>(m.rows) * m.cols, 0);
    m.v.assign(m.u.size(), 0);
    m.matched.assign(m.u.size(), false);
    return m;
}

ForecastBundle persistence_forecast(const SequenceSample& sample, int lag_minutes) {
    if (lag_minutes <= 0 || lag_minutes % kFrameStep != 0 || lag_minutes > kInputFrames * kFrameStep)
        throw Error(ErrorKind::MissingFrame, "no input frame " + std::to_string(lag_minutes) + " min before anchor");
    const Grid& src = sample.rain_in[kInputFrames - lag_minutes / kFrameStep];
    if (src.values.empty()) throw Error(ErrorKind::MissingFrame, "lagged frame is empty");
    ForecastBundle fb;
    fb.source = "Last " + std::to_string(lag_minutes) + "min";
    for (int t = 0; t < kHours; ++t) {
        fb.predictions[t] = src;
        fb.predictions[t].timestamp = sample.anchor + 60 * t;
    }
    return fb;
}

MotionField estimate_motion(const Grid& prev, const Grid& curr, int block, int radius) {
    if (!prev.same_shape(curr))
        throw Error(ErrorKind::DimensionMismatch, "motion needs equally sized frames");
    if (block < 2 || radius < 0) throw Error(ErrorKind::DomainError, "bad block size or search radius");
    const int h = curr.height, w = curr.width;
    MotionField m = MotionField::zero(h, w, block, radius);
    const std::vector<double> a = echo_field(prev);
    const std::vector<double> b = echo_field(curr);
    auto prev_at = [&](int y, int x) { return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : a[y * w + x]; };

    std::vector<int> good_u, good_v;
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            const int y0 = r * block, x0 = c * block;
            const int y1 = std::min(h, y0 + block), x1 = std::min(w, x0 + block);
            const double n = static_cast<double>((y1 - y0) * (x1 - x0));
            double mean_b = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) mean_b += b[y * w + x];
            mean_b /= n;
            double var_b = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) var_b += (b[y * w + x] - mean_b) * (b[y * w + x] - mean_b);
            if (var_b / n < kEnergyFloor) continue;

            double best = -std::numeric_limits<double>::infinity();
            int bu = 0, bv = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    double mean_a = 0.0;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) mean_a += prev_at(y - dy, x - dx);
                    mean_a /= n;
                    double sab = 0.0, saa = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) {
                            const double da = prev_at(y - dy, x - dx) - mean_a;
                            sab += da * (b[y * w + x] - mean_b);
                            saa += da * da;
                        }
                    }
                    if (saa <= 0.0) continue;
                    const double ncc = sab / std::sqrt(saa * var_b);
                    const bool better = ncc > best + 1e-12 ||
                                        (ncc > best - 1e-12 && dx * dx + dy * dy < bu * bu + bv * bv);
                    if (better) {
                        best = std::max(best, ncc);
                        bu = dx;
                        bv = dy;
                    }
                }
            }
            if (!std::isfinite(best)) continue;
            const std::size_t k = static_cast<std::size_t>(r) * m.cols + c;
            m.u[k] = bu;
            m.v[k] = bv;
            m.matched[k] = true;
            good_u.push_back(bu);
            good_v.push_back(bv);
        }
    }
    if (good_u.empty()) {
        m.degenerate = true;
        return m;
    }
    const int mu = median_of(good_u), mv = median_of(good_v);
    for (std::size_t k = 0; k < m.u.size(); ++k) {
        if (!m.matched[k]) {
            m.u[k] = mu;
            m.v[k] = mv;
        }
    }
    return m;
}

Grid advect(const Grid& field, const MotionField& motion) {
    if (motion.height != field.height || motion.width != field.width)
        throw Error(ErrorKind::DimensionMismatch, "motion field does not match the grid");
    const int h = field.height, w = field.width;
    Grid out(field.kind, h, w, field.timestamp);
    auto at = [&](int y, int x) { return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : field.values[y * w + x]; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sy = y - static_cast<double>(motion.v_at(y, x));
            const double sx = x - static_cast<double>(motion.u_at(y, x));
            const int iy = static_cast<int>(std::floor(sy)), ix = static_cast<int>(std::floor(sx));
            const double fy = sy - iy, fx = sx - ix;
            // zero-weight corners are skipped so integer offsets copy values exactly
            double v = 0.0;
            if (fy == 0.0 && fx == 0.0) {
                v = at(iy, ix);
            } else {
                v = (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix + 1)) +
                    fy * ((1 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1));
            }
            out.values[y * w + x] = std::max(0.0, v);
        }
    }
    return out;
}

ForecastBundle extrapolate(const SequenceSample& sample, const MotionField& motion) {
    Grid step = sample.latest_rain();
    Grid mean(ChannelKind::Rain, step.height, step.width, sample.anchor);
    for (int k = 1; k <= kFramesPerHour; ++k) {
        step = advect(step, motion);
        for (std::size_t i = 0; i < mean.values.size(); ++i)
            mean.values[i] += (step.values[i] - mean.values[i]) / static_cast<double>(k);
    }
    ForecastBundle fb;
    fb.source = "Extrapolation";
    for (int t = 0; t < kHours; ++t) {
        fb.predictions[t] = mean;
        fb.predictions[t].timestamp = sample.anchor + 60 * t;
    }
    return fb;
}

ForecastBundle extrapolate(const SequenceSample& sample) {
    return extrapolate(sample, estimate_motion(sample.radar_in[kInputFrames - 2], sample.radar_in[kInputFrames - 1]));
}

}  // namespace nowcast::baseline
