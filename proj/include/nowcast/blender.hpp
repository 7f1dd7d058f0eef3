#pragma once

#include <array>
#include <span>

#include "nowcast/forecast.hpp"
#include "nowcast/grid_store.hpp"

namespace nowcast::blend {

inline constexpr double kRescaleQuantile = 0.99;

/// Per-hour mixing maps in [0,1]; not to be confused with the loss weight.
struct BlendWeights {
    std::array<Grid, kHours> maps;
    std::array<double, kHours> factors{1.0, 1.0, 1.0};
};

/// Hour h is multiplied by q99(hour 0) / q99(hour h) and clipped to [0,1].
BlendWeights rescale_probabilities(std::span<const Grid> prob_maps);

/// W * model + (1 - W) * persistence, pixelwise.
ForecastBundle blend(const BlendWeights& weights, const ForecastBundle& model_pred,
                     const ForecastBundle& persistence_pred);

}  // namespace nowcast::blend
