#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nowcast/config.hpp"
#include "nowcast/forecast.hpp"
#include "nowcast/grid_store.hpp"
#include "nowcast/losses.hpp"
#include "nowcast/nowcast_net.hpp"
#include "nowcast/verification_metrics.hpp"

namespace nowcast::train {

enum class Variant { GruWmae, GruWmaeBal, GruWmaeAdv, GruWmaeAtn, GruWmaeAdvAtn, Classifier };

std::string_view to_string(Variant v);
/// ConfigError listing the valid tags on an unknown string.
Variant parse_variant(std::string_view tag);
const std::vector<std::string>& variant_tags();
net::ModelOptions options_for(Variant v);
loss::LossSpec default_loss_for(Variant v);

struct TrainConfig {
    Variant variant = Variant::GruWmae;
    double learning_rate = 1e-4;
    int batch_size = 4;
    int epochs = 15;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // global L2 norm per parameter group; <= 0 disables
    loss::LossSpec loss;
    std::uint64_t seed = 1;
    std::filesystem::path checkpoint_dir;  // empty: keep everything in memory
    net::NetConfig net;                    // height/width are taken from the data
    std::size_t max_train_samples = 0;     // 0 = all
    std::size_t max_val_samples = 0;
    bool check_frozen = false;  // hash the frozen group around every step and throw if it moved
};

void validate(const TrainConfig& cfg);
/// Sections [train], [loss], [net]. Unknown keys are rejected with file:line.
TrainConfig parse_train_config(const KeyValueFile& kv);
KeyValueFile train_config_to_kv(const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_lpred = 0.0;
    std::optional<double> d_loss;  // only with an adversary
    double seconds = 0.0;
};

struct RunLedger {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;

    /// Columns epoch,train_loss,val_lpred,d_loss,seconds.
    std::string csv(bool with_seconds = true) const;
    void write_csv(const std::filesystem::path& path) const;
};

/// Index of the smallest value; the first one wins ties.
int best_epoch(std::span<const double> val_losses);

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
    void step(std::span<ad::Parameter* const> params);
    std::int64_t steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

/// Scales gradients so their joint L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_gradients(std::span<ad::Parameter* const> params, double max_norm);

/// FNV-1a over parameter bit patterns of one group.
std::uint64_t parameter_hash(const net::NowcastModel& model, bool discriminator_group);

/// Normalization quantiles over every training-split frame of the source.
NormStats fit_training_stats(const FrameSource& source, const SplitScheme& scheme = {});

struct StepStats {
    double total = 0.0;
    double l_pred = 0.0;
    std::optional<double> d_loss;
};

class Trainer {
public:
    Trainer(const TrainConfig& cfg, const NormStats& norm, int height, int width);

    net::NowcastModel& model() { return model_; }
    const NormStats& norm() const { return norm_; }

    /// One D step (when adversarial) then one G step.
    StepStats step(const net::Batch& batch);
    /// Mean per-sample prediction loss (BCE for the classifier).
    double validation_loss(std::span<const SequenceSample> samples);

private:
    TrainConfig cfg_;
    NormStats norm_;
    net::NowcastModel model_;
    Adam g_opt_, d_opt_;
    std::vector<ad::Parameter*> g_params_, d_params_;
};

struct TrainResult {
    net::ModelState state;
    RunLedger ledger;
};

/// Trains on in-memory windows. The returned model holds the best
/// validation epoch, rounded to float32 exactly as its checkpoint stores it.
TrainResult train(const TrainConfig& cfg, std::span<const SequenceSample> train_set,
                  std::span<const SequenceSample> val_set, const NormStats& norm);
TrainResult train(const TrainConfig& cfg, const FrameSource& source, const SplitScheme& scheme = {});
/// Same loop with the probability head and pixelwise cross-entropy.
TrainResult train_classifier(TrainConfig cfg, const FrameSource& source, const SplitScheme& scheme = {});

using Forecaster = std::function<ForecastBundle(const SequenceSample&)>;

/// Single code path for every model and baseline.
metrics::VerificationReport evaluate_forecaster(const Forecaster& forecaster, std::span<const SequenceSample> samples,
                                                const std::string& model_name, const std::string& split,
                                                const std::vector<double>& thresholds = metrics::kDefaultThresholds,
                                                const std::vector<int>& hours = {0, 1, 2});
metrics::VerificationReport evaluate_checkpoint(net::ModelState& state, std::span<const SequenceSample> samples,
                                                const std::string& split,
                                                const std::vector<double>& thresholds = metrics::kDefaultThresholds,
                                                const std::vector<int>& hours = {0, 1, 2});
metrics::VerificationReport evaluate_checkpoint(net::ModelState& state, const FrameSource& source, Split split,
                                                const SplitScheme& scheme = {},
                                                const std::vector<double>& thresholds = metrics::kDefaultThresholds,
                                                const std::vector<int>& hours = {0, 1, 2});

}  // namespace nowcast::train
