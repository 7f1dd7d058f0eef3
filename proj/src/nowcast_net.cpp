#include "nowcast/nowcast_net.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "nowcast/errors.hpp"

namespace nowcast::net {

int NetConfig::effective_pool() const {
    if (discriminator_pool > 0) return discriminator_pool;
    return (height <= 64 && width <= 64) ? 1 : 8;
}

void validate(const NetConfig& cfg) {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::ShapeMismatch, "NetConfig: " + m); };
    if (cfg.attention_channels != kAttentionChannels) fail("attention channels must be [16,32,32,32,1]");
    if (cfg.stride != 2) fail("stride must be 2");
    if (cfg.height <= 0 || cfg.width <= 0 || cfg.height % 4 != 0 || cfg.width % 4 != 0)
        fail("height and width must be positive multiples of 4");
    if (cfg.input_channels < 1 || cfg.stem_channels < 1) fail("channel counts must be positive");
    for (int c : cfg.encoder_channels)
        if (c < 1) fail("encoder channels must be positive");
    if (cfg.gru_kernel % 2 != 1) fail("ConvGRU kernel must be odd");
    if (cfg.discriminator_units[2] != 1) fail("discriminator must end in one unit");
    if (cfg.input_frames < 1 || cfg.hours < 1) fail("frame and hour counts must be positive");
    if (!(cfg.leaky_slope >= 0.0 && cfg.leaky_slope < 1.0)) fail("leaky slope must be in [0,1)");
}

Var Binder::operator()(Parameter& p) {
    const auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    const Var v = graph_.parameter(p, trainable_(p));
    bound_.emplace(&p, v);
    return v;
}

Batch make_batch(std::span<const SequenceSample* const> samples, const NormStats& stats) {
    if (samples.empty()) throw Error(ErrorKind::EmptySplit, "empty batch");
    const int n = static_cast<int>(samples.size());
    const int h = samples[0]->height();
    const int w = samples[0]->width();
    Batch b;
    b.size = n;
    b.frames.assign(kInputFrames, Tensor(Shape{n, 2, h, w}));
    b.latest_rain = Tensor(Shape{n, 1, h, w});
    for (int t = 0; t < kHours; ++t) {
        b.targets[t] = Tensor(Shape{n, 1, h, w});
        b.targets_norm[t] = Tensor(Shape{n, 1, h, w});
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        const SequenceSample& s = *samples[i];
        if (s.height() != h || s.width() != w) throw Error(ErrorKind::ShapeMismatch, "samples differ in size");
        b.anchors.push_back(s.anchor);
        for (int k = 0; k < kInputFrames; ++k) {
            const Grid rain = normalize(s.rain_in[k], stats);
            const Grid radar = normalize(s.radar_in[k], stats);
            double* dst = b.frames[k].data.data() + static_cast<std::size_t>(i) * 2 * plane;
            std::copy(rain.values.begin(), rain.values.end(), dst);
            std::copy(radar.values.begin(), radar.values.end(), dst + plane);
            if (k == kInputFrames - 1)
                std::copy(rain.values.begin(), rain.values.end(), b.latest_rain.data.data() + i * plane);
        }
        for (int t = 0; t < kHours; ++t) {
            const auto& y = s.targets[t].grid.values;
            std::copy(y.begin(), y.end(), b.targets[t].data.data() + i * plane);
            for (std::size_t j = 0; j < plane; ++j) b.targets_norm[t][i * plane + j] = y[j] / stats.rain_q95;
        }
    }
    return b;
}

NowcastModel::NowcastModel(NetConfig cfg, ModelOptions options, std::uint64_t seed)
    : cfg_(cfg), options_(options), seed_(seed) {
    validate(cfg_);
    const auto& ch = cfg_.encoder_channels;
    const int k = cfg_.gru_kernel;
    params_.reserve(64);

    enc_conv_[0] = add_conv("enc.conv0", cfg_.input_channels, cfg_.stem_channels, 3, 1, 1);
    gru_["enc.gru0"] = add_gru("enc.gru0", cfg_.stem_channels, ch[0]);
    enc_conv_[1] = add_conv("enc.conv1", ch[0], ch[0], 3, 2, 1);
    gru_["enc.gru1"] = add_gru("enc.gru1", ch[0], ch[1]);
    enc_conv_[2] = add_conv("enc.conv2", ch[1], ch[1], 3, 2, 1);
    gru_["enc.gru2"] = add_gru("enc.gru2", ch[1], ch[2]);

    gru_["dec.gru2"] = add_gru("dec.gru2", 0, ch[2]);
    dec_up_[0] = add_deconv("dec.up0", ch[2], ch[1], 4, 2, 1);
    gru_["dec.gru1"] = add_gru("dec.gru1", ch[1], ch[1]);
    dec_up_[1] = add_deconv("dec.up1", ch[1], ch[0], 4, 2, 1);
    gru_["dec.gru0"] = add_gru("dec.gru0", ch[0], ch[0]);
    head_ = add_conv("head", ch[0], 1, 1, 1, 0);
    (void)k;

    if (options_.attention) {
        int cin = 2;
        for (std::size_t i = 0; i < cfg_.attention_channels.size(); ++i) {
            attn_[i] = add_conv("attn.conv" + std::to_string(i), cin, cfg_.attention_channels[i],
                                cfg_.attention_kernel, 1, cfg_.attention_padding);
            cin = cfg_.attention_channels[i];
        }
    }
    first_disc_param_ = params_.size();
    if (options_.discriminator) {
        const int pool = cfg_.effective_pool();
        int fin = ((cfg_.height + pool - 1) / pool) * ((cfg_.width + pool - 1) / pool);
        for (int i = 0; i < 3; ++i) {
            const int fout = cfg_.discriminator_units[i];
            disc_w_[i] = add_param("disc.dense" + std::to_string(i) + ".w", Shape{fout, fin, 1, 1});
            disc_b_[i] = add_param("disc.dense" + std::to_string(i) + ".b", Shape{1, fout, 1, 1});
            fin = fout;
        }
    }
    initialize(seed);
}

int NowcastModel::add_param(const std::string& name, Shape shape) {
    params_.emplace_back(name, shape);
    index_[name] = static_cast<int>(params_.size()) - 1;
    return static_cast<int>(params_.size()) - 1;
}

NowcastModel::ConvLayer NowcastModel::add_conv(const std::string& name, int cin, int cout, int k, int stride, int pad) {
    ConvLayer l;
    l.weight = add_param(name + ".w", Shape{cout, cin, k, k});
    l.bias = add_param(name + ".b", Shape{1, cout, 1, 1});
    l.stride = stride;
    l.pad = pad;
    return l;
}

NowcastModel::ConvLayer NowcastModel::add_deconv(const std::string& name, int cin, int cout, int k, int stride,
                                                 int pad) {
    ConvLayer l;
    l.weight = add_param(name + ".w", Shape{cin, cout, k, k});
    l.bias = add_param(name + ".b", Shape{1, cout, 1, 1});
    l.stride = stride;
    l.pad = pad;
    return l;
}

NowcastModel::GruCell NowcastModel::add_gru(const std::string& name, int cin, int hidden) {
    const int k = cfg_.gru_kernel;
    GruCell c;
    c.input_channels = cin;
    c.hidden_channels = hidden;
    c.gate_w = add_param(name + ".gate_w", Shape{2 * hidden, cin + hidden, k, k});
    c.gate_b = add_param(name + ".gate_b", Shape{1, 2 * hidden, 1, 1});
    c.cand_w = add_param(name + ".cand_w", Shape{hidden, cin + hidden, k, k});
    c.cand_b = add_param(name + ".cand_b", Shape{1, hidden, 1, 1});
    return c;
}

void NowcastModel::initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
        const Shape s = p.value.shape;
        const bool is_bias = p.name.ends_with(".b") || p.name.ends_with("_b");
        if (is_bias) {
            std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
        } else if (p.name.starts_with("dec.up")) {
            // deconv weight {Cin, Cout, k, k}: each input feeds Cout*k*k outputs
            init_glorot(p, static_cast<double>(s.n) * s.h * s.w, static_cast<double>(s.c) * s.h * s.w, rng);
        } else {
            init_glorot(p, static_cast<double>(s.c) * s.h * s.w, static_cast<double>(s.n) * s.h * s.w, rng);
        }
    }
    // last attention layer starts at zero so sigmoid(0) * 2 leaves predictions unchanged
    if (options_.attention) {
        std::fill(params_[attn_[4].weight].value.data.begin(), params_[attn_[4].weight].value.data.end(), 0.0);
        std::fill(params_[attn_[4].bias].value.data.begin(), params_[attn_[4].bias].value.data.end(), 0.0);
    }
}

Parameter* NowcastModel::find(const std::string& name) {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* NowcastModel::find(const std::string& name) const {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t NowcastModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

bool NowcastModel::is_discriminator(const Parameter& p) const { return p.name.starts_with("disc."); }

bool NowcastModel::all_finite() const {
    for (const auto& p : params_)
        for (double v : p.value.data)
            if (!std::isfinite(v)) return false;
    return true;
}

Var NowcastModel::conv(Binder& b, const ConvLayer& layer, Var x) {
    return ad::conv2d(x, b(params_[layer.weight]), b(params_[layer.bias]), layer.stride, layer.pad);
}

Var NowcastModel::deconv(Binder& b, const ConvLayer& layer, Var x) {
    return ad::conv_transpose2d(x, b(params_[layer.weight]), b(params_[layer.bias]), layer.stride, layer.pad);
}

Var NowcastModel::gru_step(Binder& b, const std::string& cell_name, Var h_prev, Var x) {
    const auto it = gru_.find(cell_name);
    if (it == gru_.end()) throw Error(ErrorKind::ShapeMismatch, "unknown ConvGRU cell " + cell_name);
    const GruCell& cell = it->second;
    const Shape hs = h_prev.shape();
    if (hs.c != cell.hidden_channels)
        throw Error(ErrorKind::ShapeMismatch, cell_name + ": hidden state " + hs.str());
    if (x.valid()) {
        const Shape xs = x.shape();
        if (xs.c != cell.input_channels || xs.n != hs.n || xs.h != hs.h || xs.w != hs.w)
            throw Error(ErrorKind::ShapeMismatch, cell_name + ": input " + xs.str() + " state " + hs.str());
    } else if (cell.input_channels != 0) {
        throw Error(ErrorKind::ShapeMismatch, cell_name + ": missing input");
    }
    const int c = cell.hidden_channels;
    const int pad = cfg_.gru_kernel / 2;

    auto with_input = [&](Var h) {
        if (!x.valid()) return h;
        const Var parts[] = {x, h};
        return ad::concat_channels(parts);
    };
    const Var gates =
        ad::sigmoid(ad::conv2d(with_input(h_prev), b(params_[cell.gate_w]), b(params_[cell.gate_b]), 1, pad));
    const Var z = ad::slice_channels(gates, 0, c);
    const Var r = ad::slice_channels(gates, c, 2 * c);
    const Var candidate = ad::tanh(
        ad::conv2d(with_input(ad::mul(r, h_prev)), b(params_[cell.cand_w]), b(params_[cell.cand_b]), 1, pad));
    return ad::add(ad::mul(ad::one_minus(z), h_prev), ad::mul(z, candidate));
}

EncoderStates NowcastModel::encode(Binder& b, std::span<const Var> frames) {
    if (frames.size() != static_cast<std::size_t>(cfg_.input_frames))
        throw Error(ErrorKind::ShapeMismatch, "encoder expects " + std::to_string(cfg_.input_frames) + " frames");
    const Shape fs = frames[0].shape();
    if (fs.c != cfg_.input_channels || fs.h % 4 != 0 || fs.w % 4 != 0)
        throw Error(ErrorKind::ShapeMismatch, "encoder input " + fs.str());
    Graph& g = b.graph();
    const auto& ch = cfg_.encoder_channels;
    EncoderStates s;
    s.hidden[0] = g.constant(Tensor(Shape{fs.n, ch[0], fs.h, fs.w}));
    s.hidden[1] = g.constant(Tensor(Shape{fs.n, ch[1], fs.h / 2, fs.w / 2}));
    s.hidden[2] = g.constant(Tensor(Shape{fs.n, ch[2], fs.h / 4, fs.w / 4}));
    const double slope = cfg_.leaky_slope;
    for (const Var& frame : frames) {
        if (!(frame.shape() == fs)) throw Error(ErrorKind::ShapeMismatch, "frames differ in shape");
        Var in = ad::leaky_relu(conv(b, enc_conv_[0], frame), slope);
        s.hidden[0] = gru_step(b, "enc.gru0", s.hidden[0], in);
        in = ad::leaky_relu(conv(b, enc_conv_[1], s.hidden[0]), slope);
        s.hidden[1] = gru_step(b, "enc.gru1", s.hidden[1], in);
        in = ad::leaky_relu(conv(b, enc_conv_[2], s.hidden[1]), slope);
        s.hidden[2] = gru_step(b, "enc.gru2", s.hidden[2], in);
    }
    return s;
}

std::vector<Var> NowcastModel::forecast(Binder& b, const EncoderStates& states) {
    const double slope = cfg_.leaky_slope;
    std::array<Var, 3> h = states.hidden;
    if (h[2].shape().h * 2 != h[1].shape().h || h[1].shape().h * 2 != h[0].shape().h)
        throw Error(ErrorKind::ShapeMismatch, "encoder states do not form a /1,/2,/4 pyramid");
    std::vector<Var> out;
    for (int t = 0; t < cfg_.hours; ++t) {
        h[2] = gru_step(b, "dec.gru2", h[2], Var{});
        Var up = ad::leaky_relu(deconv(b, dec_up_[0], h[2]), slope);
        h[1] = gru_step(b, "dec.gru1", h[1], up);
        up = ad::leaky_relu(deconv(b, dec_up_[1], h[1]), slope);
        h[0] = gru_step(b, "dec.gru0", h[0], up);
        out.push_back(conv(b, head_, h[0]));
    }
    return out;
}

Var NowcastModel::attention_step(Binder& b, Var a_prev, Var raw_prediction) {
    if (!options_.attention) throw Error(ErrorKind::ShapeMismatch, "model has no attention module");
    if (!(a_prev.shape() == raw_prediction.shape()) || a_prev.shape().c != 1)
        throw Error(ErrorKind::ShapeMismatch,
                    "attention inputs " + a_prev.shape().str() + " and " + raw_prediction.shape().str());
    const Var parts[] = {a_prev, raw_prediction};
    Var x = ad::concat_channels(parts);
    for (std::size_t i = 0; i < attn_.size(); ++i) {
        x = conv(b, attn_[i], x);
        x = (i + 1 < attn_.size()) ? ad::leaky_relu(x, cfg_.leaky_slope) : ad::sigmoid(x);
    }
    return x;
}

Var NowcastModel::discriminate(Binder& b, Var map) {
    if (!options_.discriminator) throw Error(ErrorKind::ShapeMismatch, "model has no discriminator");
    const Shape s = map.shape();
    if (s.c != 1 || s.h != cfg_.height || s.w != cfg_.width)
        throw Error(ErrorKind::ShapeMismatch, "discriminator input " + s.str());
    Var x = ad::avg_pool(map, cfg_.effective_pool());
    x = ad::reshape(x, Shape{s.n, static_cast<int>(x.shape().per_sample()), 1, 1});
    for (int i = 0; i < 3; ++i) {
        x = ad::dense(x, b(params_[disc_w_[i]]), b(params_[disc_b_[i]]));
        x = i < 2 ? ad::leaky_relu(x, cfg_.leaky_slope) : ad::sigmoid(x);
    }
    return x;
}

PredictorOutput NowcastModel::predict(Binder& b, std::span<const Var> frames, Var latest_rain_norm) {
    PredictorOutput out;
    out.raw = forecast(b, encode(b, frames));
    if (options_.attention) {
        Var a = ad::sigmoid(latest_rain_norm);
        for (const Var& p : out.raw) {
            a = attention_step(b, a, p);
            out.attention.push_back(a);
            out.scaled.push_back(ad::mul(p, ad::scale(a, 2.0)));
        }
    } else {
        out.scaled = out.raw;
    }
    for (const Var& s : out.scaled)
        out.output.push_back(options_.head == OutputHead::Rain ? ad::relu(s) : ad::sigmoid(s));
    return out;
}

std::array<Tensor, kHours> NowcastModel::infer(const Batch& batch, std::vector<Tensor>* attention) {
    Graph g;
    Binder b(g, [](const Parameter&) { return false; });
    std::vector<Var> frames;
    for (const auto& f : batch.frames) frames.push_back(g.constant(f));
    const auto out = predict(b, frames, g.constant(batch.latest_rain));
    std::array<Tensor, kHours> result;
    for (int t = 0; t < kHours; ++t) result[t] = out.output[t].value();
    if (attention) {
        attention->clear();
        for (const auto& a : out.attention) attention->push_back(a.value());
    }
    return result;
}

ForecastBundle NowcastModel::forecast_sample(const SequenceSample& sample, const NormStats& stats,
                                             const std::string& source) {
    const SequenceSample* ptr[] = {&sample};
    const Batch batch = make_batch(ptr, stats);
    std::vector<Tensor> attention;
    const auto out = infer(batch, &attention);
    ForecastBundle fb;
    fb.source = source;
    const int h = sample.height(), w = sample.width();
    const double scale = options_.head == OutputHead::Rain ? stats.rain_q95 : 1.0;
    for (int t = 0; t < kHours; ++t) {
        Grid g(ChannelKind::Rain, h, w, sample.anchor + t * 60);
        for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = out[t][i] * scale;
        fb.predictions[t] = std::move(g);
    }
    for (int t = 0; t < static_cast<int>(attention.size()); ++t) {
        Grid g(ChannelKind::Rain, h, w, sample.anchor + t * 60);
        g.values = attention[t].data;
        fb.attention.push_back(std::move(g));
    }
    return fb;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json config_to_json(const NetConfig& c) {
    return json{{"input_channels", c.input_channels},
                {"encoder_channels", c.encoder_channels},
                {"stem_channels", c.stem_channels},
                {"stride", c.stride},
                {"gru_kernel", c.gru_kernel},
                {"attention_channels", c.attention_channels},
                {"attention_kernel", c.attention_kernel},
                {"attention_padding", c.attention_padding},
                {"discriminator_units", c.discriminator_units},
                {"discriminator_pool", c.discriminator_pool},
                {"leaky_slope", c.leaky_slope},
                {"height", c.height},
                {"width", c.width},
                {"input_frames", c.input_frames},
                {"hours", c.hours}};
}

NetConfig config_from_json(const json& j) {
    NetConfig c;
    c.input_channels = j.at("input_channels");
    c.encoder_channels = j.at("encoder_channels");
    c.stem_channels = j.at("stem_channels");
    c.stride = j.at("stride");
    c.gru_kernel = j.at("gru_kernel");
    c.attention_channels = j.at("attention_channels");
    c.attention_kernel = j.at("attention_kernel");
    c.attention_padding = j.at("attention_padding");
    c.discriminator_units = j.at("discriminator_units");
    c.discriminator_pool = j.at("discriminator_pool");
    c.leaky_slope = j.at("leaky_slope");
    c.height = j.at("height");
    c.width = j.at("width");
    c.input_frames = j.at("input_frames");
    c.hours = j.at("hours");
    return c;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
    return v;
}

}  // namespace

void round_to_float32(NowcastModel& model) {
    for (auto& p : model.parameters())
        for (double& v : p.value.data) v = static_cast<double>(static_cast<float>(v));
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
    const NowcastModel& m = state.model;
    json header;
    header["format"] = "nowcast-checkpoint";
    header["variant"] = state.variant;
    header["config"] = config_to_json(m.config());
    header["options"] = {{"attention", m.options().attention},
                         {"discriminator", m.options().discriminator},
                         {"head", m.options().head == OutputHead::Rain ? "rain" : "probability"}};
    header["norm"] = {{"rain_q95", state.norm.rain_q95}, {"radar_q95", state.norm.radar_q95}};
    header["seed"] = m.seed();
    json table = json::array();
    std::size_t offset = 0;
    for (const auto& p : m.parameters()) {
        const Shape s = p.value.shape;
        table.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
        offset += p.value.size();
    }
    header["tensors"] = table;
    const std::string text = header.dump();

    std::string out = "NWCK";
    put_u32(out, kCheckpointVersion);
    const std::uint64_t len = text.size();
    put_u32(out, static_cast<std::uint32_t>(len & 0xffffffffu));
    put_u32(out, static_cast<std::uint32_t>(len >> 32));
    out += text;
    out.reserve(out.size() + 4 * offset);
    for (const auto& p : m.parameters())
        for (double v : p.value.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || bytes.compare(0, 4, "NWCK") != 0)
        throw Error(ErrorKind::BadCheckpoint, path.string() + " is not a checkpoint");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kCheckpointVersion)
        throw Error(ErrorKind::CheckpointVersionMismatch, "checkpoint version " + std::to_string(version) +
                                                              ", expected " + std::to_string(kCheckpointVersion));
    const std::uint64_t len = get_u32(bytes, 8) | (static_cast<std::uint64_t>(get_u32(bytes, 12)) << 32);
    if (16 + len > bytes.size()) throw Error(ErrorKind::BadCheckpoint, "truncated header");
    json header;
    try {
        header = json::parse(bytes.substr(16, len));
    } catch (const std::exception& e) {
        throw Error(ErrorKind::BadCheckpoint, std::string("header: ") + e.what());
    }
    try {
        ModelOptions opt;
        opt.attention = header.at("options").at("attention");
        opt.discriminator = header.at("options").at("discriminator");
        opt.head = header.at("options").at("head") == "rain" ? OutputHead::Rain : OutputHead::Probability;
        NowcastModel model(config_from_json(header.at("config")), opt, header.at("seed").get<std::uint64_t>());
        const std::size_t data_start = 16 + len;
        const auto& table = header.at("tensors");
        if (table.size() != model.parameters().size())
            throw Error(ErrorKind::BadCheckpoint, "tensor table does not match the architecture");
        for (const auto& entry : table) {
            Parameter* p = model.find(entry.at("name"));
            if (!p) throw Error(ErrorKind::BadCheckpoint, "unknown tensor " + entry.at("name").get<std::string>());
            const auto shape = entry.at("shape").get<std::array<int, 4>>();
            if (!(Shape{shape[0], shape[1], shape[2], shape[3]} == p->value.shape))
                throw Error(ErrorKind::BadCheckpoint, "shape mismatch for " + p->name);
            const std::size_t off = data_start + 4 * entry.at("offset").get<std::size_t>();
            if (off + 4 * p->value.size() > bytes.size()) throw Error(ErrorKind::BadCheckpoint, "truncated payload");
            for (std::size_t i = 0; i < p->value.size(); ++i)
                p->value[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, off + 4 * i)));
        }
        NormStats norm{header.at("norm").at("rain_q95"), header.at("norm").at("radar_q95")};
        return ModelState{header.at("variant"), std::move(model), norm};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::BadCheckpoint, std::string("header field: ") + e.what());
    }
}

}  // namespace nowcast::net
