#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nowcast {

/// Minutes since 1970-01-01T00:00Z. Valid frame timestamps are multiples of 10.
using Minutes = std::int64_t;

inline constexpr Minutes kFrameStep = 10;
inline constexpr int kInputFrames = 6;   // N: one hour of 10-min frames
inline constexpr int kHours = 3;         // T: hourly targets to predict
inline constexpr int kFramesPerHour = 6;

/// Reflectivity value marking a missing radar cell.
inline constexpr double kRadarMissing = -999.0;

enum class ChannelKind : std::uint8_t { Rain = 0, Radar = 1 };

/// A single-timestamp 2D field, row-major. Rain grids hold mm/hr, radar grids dBZ.
struct Grid {
    ChannelKind kind = ChannelKind::Rain;
    int height = 0;
    int width = 0;
    Minutes timestamp = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(ChannelKind k, int h, int w, Minutes ts, double fill = 0.0)
        : kind(k), height(h), width(w), timestamp(ts),
          values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    std::size_t size() const { return values.size(); }
    bool same_shape(const Grid& o) const { return height == o.height && width == o.width; }

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Throws InvalidGrid when the kind-specific invariants do not hold: rain is
/// finite and non-negative, radar is finite, and the timestamp is on the 10-min lattice.
void validate(const Grid& grid);

/// Mean of six consecutive 10-min rain frames; `hour_index` counts hours after the anchor.
struct HourlyTarget {
    Grid grid;
    int hour_index = 0;
    Minutes base_timestamp = 0;
};

/// One training/evaluation window: an hour of inputs and three hourly targets.
/// Inputs are ordered oldest first, so index kInputFrames-1 is the frame at anchor-10.
struct SequenceSample {
    Minutes anchor = 0;
    std::array<Grid, kInputFrames> rain_in;
    std::array<Grid, kInputFrames> radar_in;
    std::array<HourlyTarget, kHours> targets;

    const Grid& latest_rain() const { return rain_in[kInputFrames - 1]; }
    int height() const { return rain_in[0].height; }
    int width() const { return rain_in[0].width; }
};

// ---------------------------------------------------------------------------
// NWG1 binary format
//
//   offset  size  field
//   0       4     magic "NWG1"
//   4       1     channel kind (0 = rain, 1 = radar)
//   5       4     height, u32 little-endian
//   9       4     width, u32 little-endian
//   13      8     timestamp minutes, i64 little-endian
//   21      4*h*w values, float32 little-endian, row-major
// ---------------------------------------------------------------------------

inline constexpr std::size_t kGridHeaderBytes = 21;

std::vector<std::uint8_t> encode_grid(const Grid& grid);
Grid decode_grid(std::span<const std::uint8_t> bytes);

void write_grid(const std::filesystem::path& path, const Grid& grid);
Grid read_grid(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

HourlyTarget hourly_average(std::span<const Grid> frames, int hour_index = 0);

/// Centered window, offsets floor((dim - out) / 2).
Grid center_crop(const Grid& grid, int out_h, int out_w);

/// Pixelwise max over the 21 vertical levels of a reflectivity volume.
inline constexpr int kRadarLevels = 21;
Grid column_max_reduce(std::span<const Grid> levels);

/// Linear-interpolation ("type 7") quantile. `values` is copied and sorted.
double quantile_linear(std::vector<double> values, double q);

struct NormStats {
    double rain_q95 = 1.0;
    double radar_q95 = 1.0;

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// 95th percentiles over all training pixels; missing radar cells are excluded.
NormStats fit_norm_stats(std::span<const Grid> rain_grids, std::span<const Grid> radar_grids);

/// Divides by the channel's q95. Missing radar cells become 0.
Grid normalize(const Grid& grid, const NormStats& stats);
Grid denormalize(const Grid& grid, const NormStats& stats);

// ---------------------------------------------------------------------------
// Time-based split
// ---------------------------------------------------------------------------

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Years before `eval_year` train; inside `eval_year` days 1..val_last_day
/// validate and the rest test; later years test.
struct SplitScheme {
    int eval_year = 2018;
    unsigned val_last_day = 15;
};

Split split_by_time(Minutes timestamp, const SplitScheme& scheme = {});

/// Minutes since epoch for a UTC civil time.
Minutes to_minutes(int year, unsigned month, unsigned day, int hour = 0, int minute = 0);

/// Days since epoch (UTC calendar day) of a timestamp.
std::int64_t day_index(Minutes timestamp);
/// "YYYY-MM-DDTHH:MM" (UTC).
std::string format_timestamp(Minutes timestamp);
/// Accepts the format above or a plain minute count; InvalidGrid on anything else.
Minutes parse_timestamp(std::string_view text);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
    Minutes timestamp = 0;
    std::filesystem::path rain_path;
    std::filesystem::path radar_path;
};

/// Paths in `entries` are stored as written; relative paths resolve against `base_dir`.
struct DatasetManifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;
    SplitScheme scheme;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Text format: one `timestamp<TAB>rain_path<TAB>radar_path` line per frame,
/// `#` starts a comment line.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// Random-access view of paired rain/radar frames keyed by timestamp.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual std::vector<Minutes> timestamps() const = 0;  // ascending
    virtual bool has(Minutes ts) const = 0;
    virtual std::pair<Grid, Grid> load(Minutes ts) const = 0;
};

class ManifestFrameSource final : public FrameSource {
public:
    explicit ManifestFrameSource(DatasetManifest manifest);
    std::vector<Minutes> timestamps() const override;
    bool has(Minutes ts) const override;
    std::pair<Grid, Grid> load(Minutes ts) const override;

private:
    DatasetManifest manifest_;
    std::map<Minutes, std::size_t> index_;
};

class MemoryFrameSource final : public FrameSource {
public:
    void add(Grid rain, Grid radar);
    std::vector<Minutes> timestamps() const override;
    bool has(Minutes ts) const override;
    std::pair<Grid, Grid> load(Minutes ts) const override;

private:
    std::map<Minutes, std::pair<Grid, Grid>> frames_;
};

struct GapReport {
    std::size_t candidates = 0;  // anchors whose first input frame exists
    std::size_t emitted = 0;
    std::size_t gapped = 0;      // candidates skipped for missing frames
};

/// Streams complete windows. A candidate anchor t exists for every frame
/// timestamp s (t = s + 60); it is emitted when frames t-60 .. t+170 are all
/// present and, if a split filter is set, split_by_time(t) matches.
class SampleWindower {
public:
    SampleWindower(const FrameSource& source, std::optional<Split> filter = std::nullopt,
                   SplitScheme scheme = {});

    std::optional<SequenceSample> next();
    const GapReport& gaps() const { return gaps_; }

private:
    const FrameSource& source_;
    std::optional<Split> filter_;
    SplitScheme scheme_;
    std::vector<Minutes> starts_;
    std::size_t cursor_ = 0;
    GapReport gaps_;
};

std::vector<SequenceSample> window_samples(const FrameSource& source,
                                           std::optional<Split> filter = std::nullopt,
                                           SplitScheme scheme = {},
                                           GapReport* report = nullptr);

}  // namespace nowcast
