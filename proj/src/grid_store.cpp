#include "nowcast/grid_store.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nowcast/errors.hpp"

namespace nowcast {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

constexpr std::array<char, 4> kMagic{'N', 'W', 'G', '1'};

}  // namespace

void validate(const Grid& grid) {
    if (grid.height <= 0 || grid.width <= 0 || grid.size() != static_cast<std::size_t>(grid.height) * grid.width)
        throw Error(ErrorKind::InvalidGrid, "grid dimensions do not match value count");
    if (grid.timestamp % kFrameStep != 0)
        throw Error(ErrorKind::InvalidGrid, "timestamp not a multiple of 10 minutes");
    for (double v : grid.values) {
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidGrid, "non-finite value");
        if (grid.kind == ChannelKind::Rain && v < 0.0)
            throw Error(ErrorKind::InvalidGrid, "negative rain rate");
    }
}

std::vector<std::uint8_t> encode_grid(const Grid& grid) {
    if (grid.size() != static_cast<std::size_t>(grid.height) * static_cast<std::size_t>(grid.width))
        throw Error(ErrorKind::DimensionMismatch, "value count does not match height*width");
    std::vector<std::uint8_t> out;
    out.reserve(kGridHeaderBytes + 4 * grid.size());
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    out.push_back(static_cast<std::uint8_t>(grid.kind));
    put_u32(out, static_cast<std::uint32_t>(grid.height));
    put_u32(out, static_cast<std::uint32_t>(grid.width));
    put_u64(out, static_cast<std::uint64_t>(grid.timestamp));
    for (double v : grid.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

Grid decode_grid(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw Error(ErrorKind::TruncatedFile, "file shorter than magic");
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
        throw Error(ErrorKind::BadMagic, "expected NWG1");
    if (bytes.size() < kGridHeaderBytes) throw Error(ErrorKind::TruncatedFile, "incomplete header");
    const std::uint8_t kind = bytes[4];
    if (kind > 1) throw Error(ErrorKind::BadMagic, "unknown channel kind " + std::to_string(kind));
    const std::uint32_t h = get_u32(&bytes[5]);
    const std::uint32_t w = get_u32(&bytes[9]);
    const auto ts = static_cast<Minutes>(get_u64(&bytes[13]));
    const std::uint64_t count = static_cast<std::uint64_t>(h) * w;
    const std::uint64_t expected = kGridHeaderBytes + 4 * count;
    if (bytes.size() < expected) throw Error(ErrorKind::TruncatedFile, "payload shorter than height*width");
    if (bytes.size() > expected) throw Error(ErrorKind::DimensionMismatch, "trailing bytes after payload");

    Grid g(static_cast<ChannelKind>(kind), static_cast<int>(h), static_cast<int>(w), ts);
    const std::uint8_t* p = bytes.data() + kGridHeaderBytes;
    for (std::uint64_t i = 0; i < count; ++i, p += 4)
        g.values[i] = static_cast<double>(std::bit_cast<float>(get_u32(p)));
    return g;
}

void write_grid(const std::filesystem::path& path, const Grid& grid) {
    const auto bytes = encode_grid(grid);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

Grid read_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_grid(bytes);
}

HourlyTarget hourly_average(std::span<const Grid> frames, int hour_index) {
    if (frames.size() != kFramesPerHour)
        throw Error(ErrorKind::WrongFrameCount,
                    "hourly average needs 6 frames, got " + std::to_string(frames.size()));
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].timestamp != frames[i - 1].timestamp + kFrameStep)
            throw Error(ErrorKind::NonConsecutive, "frames are not at consecutive 10-min steps");
        if (!frames[i].same_shape(frames[0]))
            throw Error(ErrorKind::DimensionMismatch, "frames differ in shape");
    }
    HourlyTarget out;
    out.hour_index = hour_index;
    out.base_timestamp = frames[0].timestamp;
    out.grid = Grid(ChannelKind::Rain, frames[0].height, frames[0].width, frames[0].timestamp);
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        double sum = 0.0;
        for (const auto& f : frames) sum += f.values[i];
        out.grid.values[i] = sum / kFramesPerHour;
    }
    return out;
}

Grid center_crop(const Grid& grid, int out_h, int out_w) {
    if (out_h > grid.height || out_w > grid.width || out_h <= 0 || out_w <= 0)
        throw Error(ErrorKind::CropTooLarge, std::to_string(out_h) + "x" + std::to_string(out_w) +
                                                 " from " + std::to_string(grid.height) + "x" +
                                                 std::to_string(grid.width));
    const int r0 = (grid.height - out_h) / 2;
    const int c0 = (grid.width - out_w) / 2;
    Grid out(grid.kind, out_h, out_w, grid.timestamp);
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) out.at(r, c) = grid.at(r + r0, c + c0);
    return out;
}

Grid column_max_reduce(std::span<const Grid> levels) {
    if (levels.size() != kRadarLevels)
        throw Error(ErrorKind::WrongLevelCount,
                    "expected 21 levels, got " + std::to_string(levels.size()));
    Grid out = levels[0];
    out.kind = ChannelKind::Radar;
    for (std::size_t l = 1; l < levels.size(); ++l) {
        if (!levels[l].same_shape(out)) throw Error(ErrorKind::DimensionMismatch, "level shapes differ");
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = std::max(out.values[i], levels[l].values[i]);
    }
    return out;
}

double quantile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw Error(ErrorKind::EmptyTrainingSet, "quantile of empty set");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NormStats fit_norm_stats(std::span<const Grid> rain_grids, std::span<const Grid> radar_grids) {
    std::vector<double> rain;
    std::vector<double> radar;
    for (const auto& g : rain_grids) rain.insert(rain.end(), g.values.begin(), g.values.end());
    for (const auto& g : radar_grids)
        for (double v : g.values)
            if (v != kRadarMissing) radar.push_back(v);
    if (rain.empty() || radar.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no training pixels");
    NormStats s{quantile_linear(std::move(rain), 0.95), quantile_linear(std::move(radar), 0.95)};
    if (!(s.rain_q95 > 0.0)) throw Error(ErrorKind::DegenerateQuantile, "rain q95 is not positive");
    if (!(s.radar_q95 > 0.0)) throw Error(ErrorKind::DegenerateQuantile, "radar q95 is not positive");
    return s;
}

namespace {
void check_stats(const NormStats& s) {
    if (!(s.rain_q95 > 0.0) || !(s.radar_q95 > 0.0))
        throw Error(ErrorKind::DegenerateQuantile, "normalization stats must be positive");
}
}  // namespace

Grid normalize(const Grid& grid, const NormStats& stats) {
    check_stats(stats);
    Grid out = grid;
    if (grid.kind == ChannelKind::Rain) {
        for (double& v : out.values) v /= stats.rain_q95;
    } else {
        for (double& v : out.values) v = (v == kRadarMissing) ? 0.0 : v / stats.radar_q95;
    }
    return out;
}

Grid denormalize(const Grid& grid, const NormStats& stats) {
    check_stats(stats);
    Grid out = grid;
    const double scale = grid.kind == ChannelKind::Rain ? stats.rain_q95 : stats.radar_q95;
    for (double& v : out.values) v *= scale;
    return out;
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    throw Error(ErrorKind::UsageError, "unknown split '" + std::string(text) + "' (train|val|test)");
}

Minutes to_minutes(int year, unsigned month, unsigned day, int hour, int minute) {
    using namespace std::chrono;
    const sys_days d = std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day};
    return static_cast<Minutes>(d.time_since_epoch().count()) * 1440 + hour * 60 + minute;
}

std::int64_t day_index(Minutes timestamp) {
    // floor division so pre-epoch timestamps land on the right day
    return timestamp >= 0 ? timestamp / 1440 : -((-timestamp + 1439) / 1440);
}

std::string format_timestamp(Minutes timestamp) {
    using namespace std::chrono;
    const std::int64_t day = day_index(timestamp);
    const year_month_day ymd{sys_days{days{day}}};
    const Minutes rest = timestamp - day * 1440;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rest / 60),
                  static_cast<int>(rest % 60));
    return buf;
}

Minutes parse_timestamp(std::string_view text) {
    const std::string s(text);
    int y = 0, h = 0, mi = 0;
    unsigned mo = 0, d = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%d-%u-%uT%d:%d%c", &y, &mo, &d, &h, &mi, &tail) == 5) {
        using namespace std::chrono;
        const year_month_day ymd{year{y}, month{mo}, day{d}};
        if (ymd.ok() && h >= 0 && h < 24 && mi >= 0 && mi < 60) return to_minutes(y, mo, d, h, mi);
    }
    Minutes v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && p == s.data() + s.size() && !s.empty()) return v;
    throw Error(ErrorKind::InvalidGrid, "cannot parse timestamp '" + s + "'");
}

Split split_by_time(Minutes timestamp, const SplitScheme& scheme) {
    using namespace std::chrono;
    const sys_days d{days{day_index(timestamp)}};
    const year_month_day ymd{d};
    const int year = static_cast<int>(ymd.year());
    if (year < scheme.eval_year) return Split::Train;
    if (year > scheme.eval_year) return Split::Test;
    return static_cast<unsigned>(ymd.day()) <= scheme.val_last_day ? Split::Val : Split::Test;
}

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open manifest " + path.string());
    DatasetManifest m;
    m.base_dir = path.parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw Error(ErrorKind::IoError, path.string() + ":" + std::to_string(lineno) +
                                                ": expected timestamp<TAB>rain<TAB>radar");
        ManifestEntry e;
        try {
            std::size_t used = 0;
            e.timestamp = std::stoll(line.substr(0, t1), &used);
            if (used != t1) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw Error(ErrorKind::IoError,
                        path.string() + ":" + std::to_string(lineno) + ": bad timestamp");
        }
        e.rain_path = line.substr(t1 + 1, t2 - t1 - 1);
        e.radar_path = line.substr(t2 + 1);
        m.entries.push_back(std::move(e));
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.timestamp < b.timestamp; });
    return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write manifest " + path.string());
    out << "# timestamp_minutes\train_path\tradar_path\n";
    for (const auto& e : manifest.entries)
        out << e.timestamp << '\t' << e.rain_path.generic_string() << '\t' << e.radar_path.generic_string() << '\n';
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

ManifestFrameSource::ManifestFrameSource(DatasetManifest manifest) : manifest_(std::move(manifest)) {
    for (std::size_t i = 0; i < manifest_.entries.size(); ++i) index_[manifest_.entries[i].timestamp] = i;
}

std::vector<Minutes> ManifestFrameSource::timestamps() const {
    std::vector<Minutes> out;
    out.reserve(index_.size());
    for (const auto& [ts, _] : index_) out.push_back(ts);
    return out;
}

bool ManifestFrameSource::has(Minutes ts) const { return index_.contains(ts); }

std::pair<Grid, Grid> ManifestFrameSource::load(Minutes ts) const {
    const auto it = index_.find(ts);
    if (it == index_.end()) throw Error(ErrorKind::MissingFrame, "no frame at " + std::to_string(ts));
    const auto& e = manifest_.entries[it->second];
    Grid rain = read_grid(manifest_.resolve(e.rain_path));
    Grid radar = read_grid(manifest_.resolve(e.radar_path));
    if (rain.kind != ChannelKind::Rain || radar.kind != ChannelKind::Radar)
        throw Error(ErrorKind::DimensionMismatch, "channel kinds swapped at " + std::to_string(ts));
    if (!rain.same_shape(radar)) throw Error(ErrorKind::DimensionMismatch, "rain/radar shapes differ");
    return {std::move(rain), std::move(radar)};
}

void MemoryFrameSource::add(Grid rain, Grid radar) {
    const Minutes ts = rain.timestamp;
    frames_[ts] = {std::move(rain), std::move(radar)};
}

std::vector<Minutes> MemoryFrameSource::timestamps() const {
    std::vector<Minutes> out;
    for (const auto& [ts, _] : frames_) out.push_back(ts);
    return out;
}

bool MemoryFrameSource::has(Minutes ts) const { return frames_.contains(ts); }

std::pair<Grid, Grid> MemoryFrameSource::load(Minutes ts) const {
    const auto it = frames_.find(ts);
    if (it == frames_.end()) throw Error(ErrorKind::MissingFrame, "no frame at " + std::to_string(ts));
    return it->second;
}

SampleWindower::SampleWindower(const FrameSource& source, std::optional<Split> filter, SplitScheme scheme)
    : source_(source), filter_(filter), scheme_(scheme), starts_(source.timestamps()) {}

std::optional<SequenceSample> SampleWindower::next() {
    constexpr int kWindowFrames = kInputFrames + kHours * kFramesPerHour;
    while (cursor_ < starts_.size()) {
        const Minutes first = starts_[cursor_++];
        const Minutes anchor = first + kInputFrames * kFrameStep;
        if (filter_ && split_by_time(anchor, scheme_) != *filter_) continue;
        ++gaps_.candidates;
        bool complete = true;
        for (int k = 0; k < kWindowFrames && complete; ++k) complete = source_.has(first + k * kFrameStep);
        if (!complete) {
            ++gaps_.gapped;
            continue;
        }
        SequenceSample s;
        s.anchor = anchor;
        for (int k = 0; k < kInputFrames; ++k) {
            auto [rain, radar] = source_.load(first + k * kFrameStep);
            s.rain_in[k] = std::move(rain);
            s.radar_in[k] = std::move(radar);
        }
        for (int h = 0; h < kHours; ++h) {
            std::array<Grid, kFramesPerHour> frames;
            for (int i = 0; i < kFramesPerHour; ++i)
                frames[i] = source_.load(anchor + (h * kFramesPerHour + i) * kFrameStep).first;
            s.targets[h] = hourly_average(frames, h);
        }
        ++gaps_.emitted;
        return s;
    }
    return std::nullopt;
}

std::vector<SequenceSample> window_samples(const FrameSource& source, std::optional<Split> filter,
                                           SplitScheme scheme, GapReport* report) {
    SampleWindower w(source, filter, scheme);
    std::vector<SequenceSample> out;
    while (auto s = w.next()) out.push_back(std::move(*s));
    if (report) *report = w.gaps();
    return out;
}

}  // namespace nowcast
