#pragma once

#include <array>
#include <string>
#include <vector>

#include "nowcast/grid_store.hpp"

namespace nowcast {

/// Per-hour rain predictions in mm/hr, plus attention maps when the model has them.
struct ForecastBundle {
    std::array<Grid, kHours> predictions;
    std::vector<Grid> attention;  // empty, or kHours maps in [0,1]
    std::string source;
};

}  // namespace nowcast
