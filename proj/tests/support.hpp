#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nowcast/autodiff.hpp"
#include "nowcast/grid_store.hpp"
#include "nowcast/synthetic_weather.hpp"

namespace testsupport {

using nowcast::ad::Graph;
using nowcast::ad::Parameter;
using nowcast::ad::Var;

struct GradCheck {
    double max_rel = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

/// Central differences on every entry (or `max_per_param` evenly spaced
/// entries) of each parameter. `loss` rebuilds the graph from current values.
/// Relative error uses max(|analytic|, |numeric|, 1e-3 * largest |analytic|
/// in the same parameter) as denominator.
inline GradCheck check_gradients(const std::vector<Parameter*>& params, const std::function<Var(Graph&)>& loss,
                                 double step = 1e-3, std::size_t max_per_param = 0) {
    for (auto* p : params) p->zero_grad();
    {
        Graph g;
        g.backward(loss(g));
    }
    GradCheck out;
    for (auto* p : params) {
        double group_max = 0.0;
        for (double v : p->grad.data) group_max = std::max(group_max, std::abs(v));
        const std::size_t n = p->value.size();
        const std::size_t stride = (max_per_param == 0 || n <= max_per_param) ? 1 : n / max_per_param;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = p->value[i];
            p->value[i] = orig + step;
            double up, down;
            {
                Graph g;
                up = loss(g).value()[0];
            }
            p->value[i] = orig - step;
            {
                Graph g;
                down = loss(g).value()[0];
            }
            p->value[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * group_max, 1e-12});
            const double rel = std::abs(analytic - numeric) / denom;
            ++out.checked;
            if (rel > out.max_rel) {
                out.max_rel = rel;
                out.worst = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) +
                            " numeric " + std::to_string(numeric);
            }
        }
    }
    return out;
}

inline void fill_uniform(Parameter& p, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : p.value.data) v = d(rng);
}

inline nowcast::Grid constant_grid(int h, int w, double v, nowcast::Minutes ts = 0,
                                   nowcast::ChannelKind k = nowcast::ChannelKind::Rain) {
    return nowcast::Grid(k, h, w, ts, v);
}

inline nowcast::Grid random_grid(int h, int w, std::mt19937_64& rng, double hi = 10.0, nowcast::Minutes ts = 0) {
    nowcast::Grid g(nowcast::ChannelKind::Rain, h, w, ts);
    std::uniform_real_distribution<double> d(0.0, hi);
    for (double& v : g.values) v = d(rng);
    return g;
}

/// Frames of one rendered scene, loaded into a memory source.
inline nowcast::MemoryFrameSource source_from_scene(const nowcast::StormScene& scene) {
    nowcast::MemoryFrameSource src;
    for (auto& f : nowcast::render_scene(scene)) src.add(std::move(f.rain), std::move(f.radar));
    return src;
}

/// The single complete window of a 24-frame scene.
inline nowcast::SequenceSample scene_sample(const nowcast::StormScene& scene) {
    const auto src = source_from_scene(scene);
    auto samples = nowcast::window_samples(src);
    return samples.at(0);
}

}  // namespace testsupport
