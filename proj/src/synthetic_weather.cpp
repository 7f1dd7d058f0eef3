#include "nowcast/synthetic_weather.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "nowcast/errors.hpp"

namespace nowcast {

void validate(const StormScene& scene) {
    if (scene.height <= 0 || scene.width <= 0 || scene.frames <= 0)
        throw Error(ErrorKind::InvalidScene, "scene needs positive size and frame count");
    if (!scene.velocity.empty() && scene.velocity.size() != static_cast<std::size_t>(scene.frames - 1))
        throw Error(ErrorKind::InvalidScene, "velocity needs frames-1 entries");
    if (scene.start % kFrameStep != 0) throw Error(ErrorKind::InvalidScene, "start not on the 10-min lattice");
    for (const auto& c : scene.cells) {
        if (!(c.amplitude >= 0.0)) throw Error(ErrorKind::InvalidScene, "negative cell amplitude");
        if (!(c.radius > 0.0)) throw Error(ErrorKind::InvalidScene, "cell radius must be positive");
    }
    if (scene.radar_noise_db < 0.0) throw Error(ErrorKind::InvalidScene, "negative radar noise");
    if (!(scene.rain_floor >= 0.0)) throw Error(ErrorKind::InvalidScene, "negative rain floor");
}

double reflectivity_dbz(double rain_rate) { return 10.0 * std::log10(200.0 * std::pow(rain_rate, 1.6)); }

std::vector<std::pair<double, double>> cell_centers(const StormScene& scene, int k) {
    double dx = 0.0, dy = 0.0;
    for (int j = 0; j < k && j < static_cast<int>(scene.velocity.size()); ++j) {
        dx += scene.velocity[j].u;
        dy += scene.velocity[j].v;
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(scene.cells.size());
    for (const auto& c : scene.cells) out.emplace_back(c.x + dx, c.y + dy);
    return out;
}

std::vector<RenderedFrame> render_scene(const StormScene& scene) {
    validate(scene);
    std::mt19937_64 noise_rng(scene.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<RenderedFrame> frames;
    frames.reserve(scene.frames);
    for (int k = 0; k < scene.frames; ++k) {
        const Minutes ts = scene.start + k * kFrameStep;
        Grid rain(ChannelKind::Rain, scene.height, scene.width, ts);
        const auto centers = cell_centers(scene, k);
        for (std::size_t i = 0; i < scene.cells.size(); ++i) {
            const auto& cell = scene.cells[i];
            const double amp = cell.amplitude * std::exp(cell.growth * k);
            const double inv2s2 = 1.0 / (2.0 * cell.radius * cell.radius);
            const auto [cx, cy] = centers[i];
            for (int r = 0; r < scene.height; ++r) {
                const double dy2 = (r - cy) * (r - cy);
                for (int c = 0; c < scene.width; ++c) {
                    const double d2 = (c - cx) * (c - cx) + dy2;
                    rain.at(r, c) += amp * std::exp(-d2 * inv2s2);
                }
            }
        }
        if (scene.rain_floor > 0.0)
            for (double& v : rain.values)
                if (v < scene.rain_floor) v = 0.0;
        Grid radar(ChannelKind::Radar, scene.height, scene.width, ts);
        for (std::size_t i = 0; i < rain.size(); ++i) {
            const double eps = noise(noise_rng);
            const double r = rain.values[i];
            radar.values[i] = r > kRadarEchoFloor ? reflectivity_dbz(r) + scene.radar_noise_db * eps : kRadarMissing;
        }
        frames.push_back({std::move(rain), std::move(radar)});
    }
    return frames;
}

StormScene make_translation_scene(double dx, double dy, int size, int frames, std::uint64_t seed) {
    if (std::abs(dx) >= size / 4.0 || std::abs(dy) >= size / 4.0)
        throw Error(ErrorKind::ShiftTooLarge, "shift must be below a quarter of the grid size");
    StormScene s;
    s.height = s.width = size;
    s.frames = frames;
    s.seed = seed;
    s.radar_noise_db = 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(0.15 * size, 0.85 * size);
    std::uniform_real_distribution<double> amp(5.0, 30.0);
    std::uniform_real_distribution<double> rad(0.05 * size, 0.09 * size);
    const int n_cells = std::max(4, size / 8);
    for (int i = 0; i < n_cells; ++i) s.cells.push_back({pos(rng), pos(rng), amp(rng), rad(rng), 0.0});
    s.velocity.assign(frames > 0 ? frames - 1 : 0, Velocity{dx, dy});
    return s;
}

CorpusConfig parse_corpus_config(const KeyValueFile& kv) {
    kv.require_known({"scenes", "frames_per_scene", "height", "width", "val_fraction", "test_fraction",
                      "weight_dry", "weight_stratiform", "weight_convective", "max_speed", "ou_theta",
                      "ou_sigma", "growth_sd", "radar_noise_db", "rain_floor", "seed"});
    CorpusConfig c;
    c.scenes = static_cast<int>(kv.get_int("scenes", c.scenes));
    c.frames_per_scene = static_cast<int>(kv.get_int("frames_per_scene", c.frames_per_scene));
    c.height = static_cast<int>(kv.get_int("height", c.height));
    c.width = static_cast<int>(kv.get_int("width", c.width));
    c.val_fraction = kv.get_double("val_fraction", c.val_fraction);
    c.test_fraction = kv.get_double("test_fraction", c.test_fraction);
    c.weight_dry = kv.get_double("weight_dry", c.weight_dry);
    c.weight_stratiform = kv.get_double("weight_stratiform", c.weight_stratiform);
    c.weight_convective = kv.get_double("weight_convective", c.weight_convective);
    c.max_speed = kv.get_double("max_speed", c.max_speed);
    c.ou_theta = kv.get_double("ou_theta", c.ou_theta);
    c.ou_sigma = kv.get_double("ou_sigma", c.ou_sigma);
    c.growth_sd = kv.get_double("growth_sd", c.growth_sd);
    c.radar_noise_db = kv.get_double("radar_noise_db", c.radar_noise_db);
    c.rain_floor = kv.get_double("rain_floor", c.rain_floor);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));

    auto fail = [&](const std::string& key, const std::string& msg) {
        throw Error(ErrorKind::ConfigError, kv.where(key) + ": " + msg);
    };
    if (c.scenes < 0) fail("scenes", "scenes must be >= 0");
    if (c.frames_per_scene < 1 || c.frames_per_scene > 144)
        fail("frames_per_scene", "frames_per_scene must be in 1..144 (one scene per day)");
    if (c.height < 8 || c.width < 8) fail("height", "grid must be at least 8x8");
    if (c.val_fraction < 0 || c.test_fraction < 0 || c.val_fraction + c.test_fraction > 1)
        fail("val_fraction", "split fractions must be non-negative and sum to <= 1");
    if (c.weight_dry < 0 || c.weight_stratiform < 0 || c.weight_convective < 0 ||
        c.weight_dry + c.weight_stratiform + c.weight_convective <= 0)
        fail("weight_dry", "regime weights must be non-negative with a positive sum");
    if (c.radar_noise_db < 0) fail("radar_noise_db", "radar noise must be >= 0");
    if (!(c.rain_floor >= 0)) fail("rain_floor", "rain floor must be >= 0");
    return c;
}

KeyValueFile corpus_config_to_kv(const CorpusConfig& c) {
    KeyValueFile kv;
    auto num = [](double v) {
        char buf[64];
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    kv.set("scenes", std::to_string(c.scenes));
    kv.set("frames_per_scene", std::to_string(c.frames_per_scene));
    kv.set("height", std::to_string(c.height));
    kv.set("width", std::to_string(c.width));
    kv.set("val_fraction", num(c.val_fraction));
    kv.set("test_fraction", num(c.test_fraction));
    kv.set("weight_dry", num(c.weight_dry));
    kv.set("weight_stratiform", num(c.weight_stratiform));
    kv.set("weight_convective", num(c.weight_convective));
    kv.set("max_speed", num(c.max_speed));
    kv.set("ou_theta", num(c.ou_theta));
    kv.set("ou_sigma", num(c.ou_sigma));
    kv.set("growth_sd", num(c.growth_sd));
    kv.set("radar_noise_db", num(c.radar_noise_db));
    kv.set("rain_floor", num(c.rain_floor));
    kv.set("seed", std::to_string(c.seed));
    return kv;
}

StormScene random_scene(const CorpusConfig& cfg, std::mt19937_64& rng, Minutes start) {
    using U = std::uniform_real_distribution<double>;
    StormScene s;
    s.height = cfg.height;
    s.width = cfg.width;
    s.frames = cfg.frames_per_scene;
    s.start = start;
    s.radar_noise_db = cfg.radar_noise_db;
    s.rain_floor = cfg.rain_floor;
    s.seed = rng();

    const double scale = std::min(cfg.height, cfg.width) / 64.0;
    std::discrete_distribution<int> regime({cfg.weight_dry, cfg.weight_stratiform, cfg.weight_convective});
    std::normal_distribution<double> growth(0.0, cfg.growth_sd);
    U px(-0.1 * cfg.width, 1.1 * cfg.width);
    U py(-0.1 * cfg.height, 1.1 * cfg.height);

    auto add_cells = [&](int lo, int hi, double amp_lo, double amp_hi, double rad_lo, double rad_hi, bool log_amp) {
        const int n = std::uniform_int_distribution<int>(lo, hi)(rng);
        for (int i = 0; i < n; ++i) {
            StormCell c;
            c.x = px(rng);
            c.y = py(rng);
            c.amplitude = log_amp ? std::exp(U(std::log(amp_lo), std::log(amp_hi))(rng)) : U(amp_lo, amp_hi)(rng);
            c.radius = std::max(1.0, U(rad_lo, rad_hi)(rng) * scale);
            c.growth = growth(rng);
            s.cells.push_back(c);
        }
    };
    switch (regime(rng)) {
        case 0:  // drizzle
            add_cells(0, 2, 0.2, 0.9, 6.0, 12.0, false);
            break;
        case 1:  // stratiform shield, occasionally with an embedded core
            add_cells(1, 2, 1.0, 6.0, 4.0, 8.0, false);
            add_cells(0, 1, 5.0, 20.0, 2.0, 3.5, true);
            break;
        default:  // convective cluster
            add_cells(1, 4, 4.0, 60.0, 2.0, 4.0, true);
            break;
    }

    const double angle = U(0.0, 2.0 * std::numbers::pi)(rng);
    const double speed = U(0.0, cfg.max_speed * scale)(rng);
    const Velocity base{speed * std::cos(angle), speed * std::sin(angle)};
    std::normal_distribution<double> jitter(0.0, cfg.ou_sigma * scale);
    Velocity v = base;
    for (int k = 0; k + 1 < s.frames; ++k) {
        s.velocity.push_back(v);
        v.u += cfg.ou_theta * (base.u - v.u) + jitter(rng);
        v.v += cfg.ou_theta * (base.v - v.v) + jitter(rng);
    }
    return s;
}

namespace {

std::vector<Minutes> draw_scene_days(const CorpusConfig& cfg, std::mt19937_64& rng) {
    const int n_val = static_cast<int>(std::llround(cfg.scenes * cfg.val_fraction));
    const int n_test = static_cast<int>(std::llround(cfg.scenes * cfg.test_fraction));
    const int n_train = cfg.scenes - n_val - n_test;

    std::vector<Minutes> train_days, val_days, test_days;
    for (Minutes d = to_minutes(2015, 1, 1); d < to_minutes(2018, 1, 1); d += 1440) train_days.push_back(d);
    for (unsigned m = 1; m <= 12; ++m) {
        for (unsigned day = 1; day <= 15; ++day) val_days.push_back(to_minutes(2018, m, day));
        for (unsigned day = 16; day <= 28; ++day) test_days.push_back(to_minutes(2018, m, day));
    }
    auto take = [&](std::vector<Minutes>& pool, int n, const char* what) {
        if (n > static_cast<int>(pool.size()))
            throw Error(ErrorKind::ConfigError, std::string("too many ") + what + " scenes for the calendar");
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(static_cast<std::size_t>(n));
        return pool;
    };
    std::vector<Minutes> days = take(train_days, n_train, "train");
    const auto v = take(val_days, n_val, "val");
    const auto t = take(test_days, n_test, "test");
    days.insert(days.end(), v.begin(), v.end());
    days.insert(days.end(), t.begin(), t.end());
    return days;
}

template <typename Sink>
void generate(const CorpusConfig& cfg, Sink&& sink) {
    std::mt19937_64 rng(cfg.seed);
    const auto days = draw_scene_days(cfg, rng);
    for (const Minutes day : days) {
        const StormScene scene = random_scene(cfg, rng, day);
        for (auto& f : render_scene(scene)) sink(std::move(f));
    }
}

}  // namespace

DatasetManifest sample_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir / "frames", ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + (out_dir / "frames").string() + ": " + ec.message());
    DatasetManifest m;
    m.base_dir = out_dir;
    generate(cfg, [&](RenderedFrame f) {
        const std::string stem = std::to_string(f.rain.timestamp);
        ManifestEntry e{f.rain.timestamp, fs::path("frames") / (stem + "_rain.nwg"),
                        fs::path("frames") / (stem + "_radar.nwg")};
        write_grid(out_dir / e.rain_path, f.rain);
        write_grid(out_dir / e.radar_path, f.radar);
        m.entries.push_back(std::move(e));
    });
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.timestamp < b.timestamp; });
    write_manifest(out_dir / "manifest.tsv", m);
    return m;
}

MemoryFrameSource sample_corpus_in_memory(const CorpusConfig& cfg) {
    MemoryFrameSource src;
    generate(cfg, [&](RenderedFrame f) { src.add(std::move(f.rain), std::move(f.radar)); });
    return src;
}

std::array<double, 8> rain_rate_histogram(std::span<const Grid> grids) {
    static constexpr std::array<double, 7> edges{1, 3, 5, 10, 20, 30, 40};
    std::array<double, 8> counts{};
    double total = 0;
    for (const auto& g : grids) {
        for (double v : g.values) {
            const auto bin = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
            counts[static_cast<std::size_t>(bin)] += 1.0;
            total += 1.0;
        }
    }
    if (total > 0)
        for (double& c : counts) c /= total;
    return counts;
}

}  // namespace nowcast
