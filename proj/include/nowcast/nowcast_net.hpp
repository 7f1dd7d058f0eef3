#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nowcast/autodiff.hpp"
#include "nowcast/forecast.hpp"
#include "nowcast/grid_store.hpp"

namespace nowcast::net {

using ad::Graph;
using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

inline constexpr std::array<int, 5> kAttentionChannels{16, 32, 32, 32, 1};

struct NetConfig {
    int input_channels = 2;                          // rain + radar
    std::array<int, 3> encoder_channels{32, 64, 96};  // ConvGRU hidden width per stage
    int stem_channels = 8;                           // stage-1 input convolution width
    int stride = 2;
    int gru_kernel = 3;
    std::array<int, 5> attention_channels = kAttentionChannels;
    int attention_kernel = 5;
    int attention_padding = 2;
    std::array<int, 3> discriminator_units{128, 128, 1};
    int discriminator_pool = 0;  // 0: none up to 64x64, 8 above
    double leaky_slope = 0.01;
    int height = 64;
    int width = 64;
    int input_frames = kInputFrames;
    int hours = kHours;

    int effective_pool() const;
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Throws ShapeMismatch/ConfigError-style errors when the structural
/// invariants fail (attention widths, divisibility of the grid by 4, ...).
void validate(const NetConfig& cfg);

enum class OutputHead {
    Rain,         // ReLU clamp, normalized rain rate
    Probability,  // sigmoid, rain/no-rain probability
};

struct ModelOptions {
    bool attention = false;
    bool discriminator = false;
    OutputHead head = OutputHead::Rain;

    friend bool operator==(const ModelOptions&, const ModelOptions&) = default;
};

/// Binds model parameters to a graph once, so every reuse inside an unrolled
/// recurrence shares a single leaf. `trainable` decides which parameters
/// receive gradient; the rest enter as constants.
class Binder {
public:
    using Predicate = std::function<bool(const Parameter&)>;

    explicit Binder(Graph& g, Predicate trainable = [](const Parameter&) { return true; })
        : graph_(g), trainable_(std::move(trainable)) {}

    Var operator()(Parameter& p);
    Graph& graph() { return graph_; }

private:
    Graph& graph_;
    Predicate trainable_;
    std::unordered_map<const Parameter*, Var> bound_;
};

struct EncoderStates {
    std::array<Var, 3> hidden;  // full, 1/2 and 1/4 resolution
};

struct PredictorOutput {
    std::vector<Var> raw;        // forecaster maps before attention, normalized units
    std::vector<Var> scaled;     // after attention scaling (== raw without attention)
    std::vector<Var> output;     // after the output head (ReLU or sigmoid)
    std::vector<Var> attention;  // attention maps, empty without attention
};

/// Network inputs for a batch, built from physical-unit samples.
struct Batch {
    int size = 0;
    std::vector<Tensor> frames;               // input_frames x {N, 2, H, W}, oldest first
    Tensor latest_rain;                       // {N, 1, H, W}, normalized
    std::array<Tensor, kHours> targets;       // {N, 1, H, W}, mm/hr
    std::array<Tensor, kHours> targets_norm;  // targets / rain_q95
    std::vector<Minutes> anchors;
};

Batch make_batch(std::span<const SequenceSample* const> samples, const NormStats& stats);

class NowcastModel {
public:
    NowcastModel(NetConfig cfg, ModelOptions options, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    const ModelOptions& options() const { return options_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    std::size_t parameter_count() const;
    bool is_discriminator(const Parameter& p) const;
    bool all_finite() const;

    // ---- differentiable building blocks --------------------------------
    /// One ConvGRU update. `x` may be invalid for input-free cells.
    Var gru_step(Binder& b, const std::string& cell, Var h_prev, Var x);
    EncoderStates encode(Binder& b, std::span<const Var> frames);
    std::vector<Var> forecast(Binder& b, const EncoderStates& states);
    /// Returns the next attention map a_t in (0,1).
    Var attention_step(Binder& b, Var a_prev, Var raw_prediction);
    /// Probability that each map in the batch is a real rain map, {N,1,1,1}.
    Var discriminate(Binder& b, Var map);

    /// encode -> forecast -> attention chain -> output head.
    PredictorOutput predict(Binder& b, std::span<const Var> frames, Var latest_rain_norm);

    /// Inference in physical units for one sample.
    ForecastBundle forecast_sample(const SequenceSample& sample, const NormStats& stats,
                                   const std::string& source);
    /// Batched inference; returns normalized head outputs per hour as {N,1,H,W} tensors.
    std::array<Tensor, kHours> infer(const Batch& batch, std::vector<Tensor>* attention = nullptr);

private:
    struct ConvLayer {
        int weight = -1;
        int bias = -1;
        int stride = 1;
        int pad = 0;
    };
    struct GruCell {
        int gate_w = -1, gate_b = -1, cand_w = -1, cand_b = -1;
        int input_channels = 0;
        int hidden_channels = 0;
    };

    int add_param(const std::string& name, Shape shape);
    ConvLayer add_conv(const std::string& name, int cin, int cout, int k, int stride, int pad);
    ConvLayer add_deconv(const std::string& name, int cin, int cout, int k, int stride, int pad);
    GruCell add_gru(const std::string& name, int cin, int hidden);
    Var conv(Binder& b, const ConvLayer& layer, Var x);
    Var deconv(Binder& b, const ConvLayer& layer, Var x);
    void initialize(std::uint64_t seed);

    NetConfig cfg_;
    ModelOptions options_;
    std::uint64_t seed_;
    std::vector<Parameter> params_;
    std::unordered_map<std::string, int> index_;
    std::unordered_map<std::string, GruCell> gru_;
    std::array<ConvLayer, 3> enc_conv_{};
    std::array<ConvLayer, 2> dec_up_{};
    ConvLayer head_{};
    std::array<ConvLayer, 5> attn_{};
    std::array<int, 3> disc_w_{};
    std::array<int, 3> disc_b_{};
    std::size_t first_disc_param_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint container
//
//   "NWCK" | u32 version | u64 header bytes | JSON header | float32 payload
//
// The JSON header carries the variant tag, NetConfig, ModelOptions,
// NormStats, seed and a tensor table (name, shape, element offset). Payload
// arrays are little-endian float32 in table order.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelState {
    std::string variant;
    NowcastModel model;
    NormStats norm;
};

void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to float32, matching what a checkpoint stores.
void round_to_float32(NowcastModel& model);

}  // namespace nowcast::net
