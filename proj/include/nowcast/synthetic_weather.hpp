#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "nowcast/config.hpp"
#include "nowcast/grid_store.hpp"

namespace nowcast {

struct StormCell {
    double x = 0.0;          // column of the center, px
    double y = 0.0;          // row of the center, px
    double amplitude = 0.0;  // peak rain rate, mm/hr
    double radius = 1.0;     // Gaussian sigma, px
    double growth = 0.0;     // log-amplitude change per frame
};

struct Velocity {
    double u = 0.0;  // px/frame along columns
    double v = 0.0;  // px/frame along rows
};

/// Gaussian rain cells advected by a shared, per-frame velocity.
/// `velocity[k]` moves the cells from frame k to k+1, so it has `frames - 1`
/// entries (an empty vector means no motion).
struct StormScene {
    int height = 64;
    int width = 64;
    int frames = 24;
    Minutes start = 0;
    std::vector<StormCell> cells;
    std::vector<Velocity> velocity;
    double radar_noise_db = 0.0;
    double rain_floor = 0.0;  // rain below this is reported as 0 mm/hr; 0 keeps the raw Gaussian sum
    std::uint64_t seed = 0;
};

void validate(const StormScene& scene);

/// Noise-free Marshall-Palmer reflectivity, 10*log10(200 * R^1.6).
double reflectivity_dbz(double rain_rate);

/// Rain below this rate has no radar echo and is stored as kRadarMissing.
inline constexpr double kRadarEchoFloor = 0.1;

struct RenderedFrame {
    Grid rain;
    Grid radar;
};

std::vector<RenderedFrame> render_scene(const StormScene& scene);

/// Cell centers for frame `k` after advection.
std::vector<std::pair<double, double>> cell_centers(const StormScene& scene, int k);

/// Pure translation by (dx, dy) px/frame with fixed, textured cells and no
/// growth or radar noise. Throws ShiftTooLarge unless |dx|,|dy| < size/4.
StormScene make_translation_scene(double dx, double dy, int size = 64, int frames = 24,
                                  std::uint64_t seed = 7);

struct CorpusConfig {
    int scenes = 200;
    int frames_per_scene = 24;
    int height = 64;
    int width = 64;
    double val_fraction = 0.2;
    double test_fraction = 0.2;
    // rain-regime mixture weights
    double weight_dry = 0.15;
    double weight_stratiform = 0.45;
    double weight_convective = 0.40;
    double max_speed = 0.8;        // px/frame, at 64 px
    double ou_theta = 0.2;         // velocity mean reversion per frame
    double ou_sigma = 0.05;        // velocity noise per frame
    double growth_sd = 0.015;      // per-frame log-growth spread
    double radar_noise_db = 0.5;
    double rain_floor = 0.0;
    std::uint64_t seed = 1;
};

CorpusConfig parse_corpus_config(const KeyValueFile& kv);
KeyValueFile corpus_config_to_kv(const CorpusConfig& cfg);

/// Draws one scene of the configured mixture starting at `start`.
StormScene random_scene(const CorpusConfig& cfg, std::mt19937_64& rng, Minutes start);

/// Renders `cfg.scenes` scenes to NWG1 files under `out_dir/frames`, writes
/// `out_dir/manifest.tsv` (relative paths) and returns the manifest.
/// One scene per calendar day starting at 00:00 UTC; scene days are drawn so
/// the time-based split yields the configured val/test fractions.
DatasetManifest sample_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir);

/// Same scenes without touching the filesystem.
MemoryFrameSource sample_corpus_in_memory(const CorpusConfig& cfg);

/// Share of rain pixels per bin 0-1,1-3,3-5,5-10,10-20,20-30,30-40,40+ mm/hr.
std::array<double, 8> rain_rate_histogram(std::span<const Grid> grids);

}  // namespace nowcast
