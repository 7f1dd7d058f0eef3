#include "nowcast/blender.hpp"

#include <algorithm>
#include <string>

#include "nowcast/errors.hpp"

namespace nowcast::blend {

BlendWeights rescale_probabilities(std::span<const Grid> prob_maps) {
    if (prob_maps.size() != kHours) throw Error(ErrorKind::ShapeMismatch, "expected three probability maps");
    std::array<double, kHours> q{};
    for (int t = 0; t < kHours; ++t) {
        if (!prob_maps[t].same_shape(prob_maps[0])) throw Error(ErrorKind::ShapeMismatch, "probability maps differ");
        q[t] = quantile_linear(prob_maps[t].values, kRescaleQuantile);
        if (!(q[t] > 0.0)) throw Error(ErrorKind::DegenerateMap, "hour " + std::to_string(t) + " map has q99 = 0");
    }
    BlendWeights w;
    for (int t = 0; t < kHours; ++t) {
        w.factors[t] = t == 0 ? 1.0 : q[0] / q[t];
        w.maps[t] = prob_maps[t];
        for (double& v : w.maps[t].values) v = std::clamp(v * w.factors[t], 0.0, 1.0);
    }
    return w;
}

ForecastBundle blend(const BlendWeights& weights, const ForecastBundle& model_pred,
                     const ForecastBundle& persistence_pred) {
    ForecastBundle out;
    out.source = "Blended";
    for (int t = 0; t < kHours; ++t) {
        const Grid& w = weights.maps[t];
        const Grid& m = model_pred.predictions[t];
        const Grid& p = persistence_pred.predictions[t];
        if (!w.same_shape(m) || !m.same_shape(p)) throw Error(ErrorKind::ShapeMismatch, "blend inputs differ in shape");
        Grid g = m;
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            const double a = w.values[i];
            const double lo = std::min(m.values[i], p.values[i]), hi = std::max(m.values[i], p.values[i]);
            // endpoints are exact; the clamp absorbs rounding in between
            g.values[i] = a == 1.0   ? m.values[i]
                          : a == 0.0 ? p.values[i]
                                     : std::clamp(a * m.values[i] + (1.0 - a) * p.values[i], lo, hi);
        }
        out.predictions[t] = std::move(g);
    }
    return out;
}

}  // namespace nowcast::blend
