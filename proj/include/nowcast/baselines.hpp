#pragma once

#include <vector>

#include "nowcast/forecast.hpp"
#include "nowcast/grid_store.hpp"

namespace nowcast::baseline {

inline constexpr int kDefaultBlock = 16;
inline constexpr int kDefaultSearch = 8;
/// Blocks whose reflectivity variance (dBZ^2) is below this carry no texture
/// to match and take the median vector of the matched blocks instead.
inline constexpr double kEnergyFloor = 1.0;

/// Integer displacement per block, in pixels per 10-minute frame.
/// Content at (x, y) in the earlier frame appears at (x + u, y + v) later.
struct MotionField {
    int height = 0;
    int width = 0;
    int block = kDefaultBlock;
    int radius = kDefaultSearch;
    int rows = 0;
    int cols = 0;
    std::vector<int> u;         // rows x cols
    std::vector<int> v;         // rows x cols
    std::vector<bool> matched;  // false where the block fell below the energy floor
    bool degenerate = false;    // no block had texture; the field is all zero

    int u_at(int y, int x) const { return u[(y / block) * cols + x / block]; }
    int v_at(int y, int x) const { return v[(y / block) * cols + x / block]; }
    static MotionField zero(int height, int width, int block = kDefaultBlock, int radius = kDefaultSearch);
};

/// Every hour gets the rain frame observed `lag_minutes` before the anchor.
ForecastBundle persistence_forecast(const SequenceSample& sample, int lag_minutes = 10);

/// Block matching by normalized cross-correlation. Missing-echo sentinels
/// and anything outside the grid count as 0 dBZ.
MotionField estimate_motion(const Grid& prev, const Grid& curr, int block = kDefaultBlock,
                            int radius = kDefaultSearch);

/// One backward semi-Lagrangian step with bilinear sampling; samples that
/// leave the grid read as no rain.
Grid advect(const Grid& field, const MotionField& motion);

/// Hour 0 is the mean of six advected 10-minute steps from the latest rain
/// frame; hours 1 and 2 repeat hour 0.
ForecastBundle extrapolate(const SequenceSample& sample, const MotionField& motion);
/// Motion from the last two radar frames, then extrapolate.
ForecastBundle extrapolate(const SequenceSample& sample);

}  // namespace nowcast::baseline
