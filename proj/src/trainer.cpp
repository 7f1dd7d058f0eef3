#include "nowcast/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nowcast/errors.hpp"

namespace nowcast::train {

namespace {

struct VariantInfo {
    Variant variant;
    const char* tag;
};

constexpr VariantInfo kVariants[] = {
    {Variant::GruWmae, "GRU+WMAE"},           {Variant::GruWmaeBal, "GRU+WMAE+Bal"},
    {Variant::GruWmaeAdv, "GRU+WMAE+Adv"},    {Variant::GruWmaeAtn, "GRU+WMAE+Atn"},
    {Variant::GruWmaeAdvAtn, "GRU+WMAE+Adv+Atn"}, {Variant::Classifier, "classifier"},
};

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T, std::size_t N>
std::string join(const std::array<T, N>& xs) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
}

template <std::size_t N>
std::array<int, N> to_array(const std::vector<int>& v, const KeyValueFile& kv, const std::string& key) {
    if (v.size() != N)
        throw Error(ErrorKind::ConfigError, kv.where(key) + ": '" + key + "' needs " + std::to_string(N) + " values");
    std::array<int, N> a{};
    std::copy(v.begin(), v.end(), a.begin());
    return a;
}

std::vector<ad::Parameter*> group(net::NowcastModel& m, bool disc) {
    std::vector<ad::Parameter*> out;
    for (auto& p : m.parameters())
        if (m.is_discriminator(p) == disc) out.push_back(&p);
    return out;
}

bool finite(double x) { return std::isfinite(x); }

void zero_grads(std::span<ad::Parameter* const> ps) {
    for (auto* p : ps) p->zero_grad();
}

std::string epoch_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03d.nwck", epoch);
    return buf;
}

double sample_bce(std::span<const ad::Tensor> probs, std::span<const ad::Tensor> targets, std::size_t n,
                  std::size_t plane) {
    double s = 0.0;
    for (std::size_t t = 0; t < probs.size(); ++t) {
        for (std::size_t i = n * plane; i < (n + 1) * plane; ++i) {
            const double p = std::clamp(probs[t][i], loss::kLogEps, 1.0 - loss::kLogEps);
            s -= targets[t][i] > loss::kBalancedThreshold ? std::log(p) : std::log(1.0 - p);
        }
    }
    return s / (static_cast<double>(probs.size()) * static_cast<double>(plane));
}

}  // namespace

std::string_view to_string(Variant v) {
    for (const auto& info : kVariants)
        if (info.variant == v) return info.tag;
    return "?";
}

const std::vector<std::string>& variant_tags() {
    static const std::vector<std::string> tags = [] {
        std::vector<std::string> t;
        for (const auto& info : kVariants) t.emplace_back(info.tag);
        return t;
    }();
    return tags;
}

Variant parse_variant(std::string_view tag) {
    for (const auto& info : kVariants)
        if (tag == info.tag) return info.variant;
    std::string valid;
    for (const auto& t : variant_tags()) valid += (valid.empty() ? "" : ", ") + t;
    throw Error(ErrorKind::ConfigError, "unknown variant '" + std::string(tag) + "'; valid tags: " + valid);
}

net::ModelOptions options_for(Variant v) {
    net::ModelOptions o;
    o.attention = v == Variant::GruWmaeAtn || v == Variant::GruWmaeAdvAtn;
    o.discriminator = v == Variant::GruWmaeAdv || v == Variant::GruWmaeAdvAtn;
    o.head = v == Variant::Classifier ? net::OutputHead::Probability : net::OutputHead::Rain;
    return o;
}

loss::LossSpec default_loss_for(Variant v) {
    loss::LossSpec s;
    s.use_adv = v == Variant::GruWmaeAdv || v == Variant::GruWmaeAdvAtn;
    s.use_bal = v == Variant::GruWmaeBal;
    return s;
}

void validate(const TrainConfig& cfg) {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::ConfigError, m); };
    if (!(cfg.learning_rate > 0.0) || !finite(cfg.learning_rate)) bad("learning_rate must be > 0");
    if (cfg.epochs < 1) bad("epochs must be >= 1");
    if (cfg.batch_size < 1) bad("batch_size must be >= 1");
    if (!(cfg.adam_beta1 >= 0 && cfg.adam_beta1 < 1) || !(cfg.adam_beta2 >= 0 && cfg.adam_beta2 < 1))
        bad("Adam betas must be in [0,1)");
    if (!(cfg.adam_eps > 0)) bad("adam_eps must be > 0");
    loss::validate(cfg.loss);
    const auto opt = options_for(cfg.variant);
    if (cfg.loss.use_adv && !opt.discriminator)
        bad("loss uses the adversarial term but variant " + std::string(to_string(cfg.variant)) + " has no discriminator");
}

TrainConfig parse_train_config(const KeyValueFile& kv) {
    kv.require_known({"train.variant", "train.learning_rate", "train.batch_size", "train.epochs", "train.seed",
                      "train.adam_beta1", "train.adam_beta2", "train.adam_eps", "train.clip_norm",
                      "train.max_train_samples", "train.max_val_samples", "loss.base", "loss.threshold",
                      "loss.w_adv", "loss.w_bal", "net.encoder_channels", "net.stem_channels", "net.gru_kernel",
                      "net.discriminator_units", "net.discriminator_pool", "net.leaky_slope"});
    TrainConfig c;
    c.variant = parse_variant(kv.get_string("train.variant", std::string(to_string(c.variant))));
    c.loss = default_loss_for(c.variant);
    c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
    c.batch_size = static_cast<int>(kv.get_int("train.batch_size", c.batch_size));
    c.epochs = static_cast<int>(kv.get_int("train.epochs", c.epochs));
    const long long seed = kv.get_int("train.seed", static_cast<long long>(c.seed));
    if (seed < 0) throw Error(ErrorKind::ConfigError, kv.where("train.seed") + ": seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.adam_beta1 = kv.get_double("train.adam_beta1", c.adam_beta1);
    c.adam_beta2 = kv.get_double("train.adam_beta2", c.adam_beta2);
    c.adam_eps = kv.get_double("train.adam_eps", c.adam_eps);
    c.clip_norm = kv.get_double("train.clip_norm", c.clip_norm);
    c.max_train_samples = static_cast<std::size_t>(std::max(0LL, kv.get_int("train.max_train_samples", 0)));
    c.max_val_samples = static_cast<std::size_t>(std::max(0LL, kv.get_int("train.max_val_samples", 0)));

    const std::string base = kv.get_string("loss.base", "WMAE");
    if (base == "WMAE") c.loss.base = loss::BaseLoss::WMAE;
    else if (base == "WMSE") c.loss.base = loss::BaseLoss::WMSE;
    else throw Error(ErrorKind::ConfigError, kv.where("loss.base") + ": loss.base must be WMAE or WMSE");
    c.loss.threshold = kv.get_double("loss.threshold", c.loss.threshold);
    c.loss.w_adv = kv.get_double("loss.w_adv", c.loss.w_adv);
    c.loss.w_bal = kv.get_double("loss.w_bal", c.loss.w_bal);

    c.net.encoder_channels =
        to_array<3>(kv.get_int_list("net.encoder_channels", {c.net.encoder_channels.begin(), c.net.encoder_channels.end()}),
                    kv, "net.encoder_channels");
    c.net.stem_channels = static_cast<int>(kv.get_int("net.stem_channels", c.net.stem_channels));
    c.net.gru_kernel = static_cast<int>(kv.get_int("net.gru_kernel", c.net.gru_kernel));
    c.net.discriminator_units = to_array<3>(
        kv.get_int_list("net.discriminator_units",
                        {c.net.discriminator_units.begin(), c.net.discriminator_units.end()}),
        kv, "net.discriminator_units");
    c.net.discriminator_pool = static_cast<int>(kv.get_int("net.discriminator_pool", c.net.discriminator_pool));
    c.net.leaky_slope = kv.get_double("net.leaky_slope", c.net.leaky_slope);
    try {
        validate(c);
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, kv.source() + ": " + e.what());
    }
    return c;
}

KeyValueFile train_config_to_kv(const TrainConfig& c) {
    KeyValueFile kv;
    kv.set("train.variant", std::string(to_string(c.variant)));
    kv.set("train.learning_rate", num(c.learning_rate));
    kv.set("train.batch_size", std::to_string(c.batch_size));
    kv.set("train.epochs", std::to_string(c.epochs));
    kv.set("train.seed", std::to_string(c.seed));
    kv.set("train.adam_beta1", num(c.adam_beta1));
    kv.set("train.adam_beta2", num(c.adam_beta2));
    kv.set("train.adam_eps", num(c.adam_eps));
    kv.set("train.clip_norm", num(c.clip_norm));
    kv.set("train.max_train_samples", std::to_string(c.max_train_samples));
    kv.set("train.max_val_samples", std::to_string(c.max_val_samples));
    kv.set("loss.base", c.loss.base == loss::BaseLoss::WMAE ? "WMAE" : "WMSE");
    kv.set("loss.threshold", num(c.loss.threshold));
    kv.set("loss.w_adv", num(c.loss.w_adv));
    kv.set("loss.w_bal", num(c.loss.w_bal));
    kv.set("net.encoder_channels", join(c.net.encoder_channels));
    kv.set("net.stem_channels", std::to_string(c.net.stem_channels));
    kv.set("net.gru_kernel", std::to_string(c.net.gru_kernel));
    kv.set("net.discriminator_units", join(c.net.discriminator_units));
    kv.set("net.discriminator_pool", std::to_string(c.net.discriminator_pool));
    kv.set("net.leaky_slope", num(c.net.leaky_slope));
    return kv;
}

std::string RunLedger::csv(bool with_seconds) const {
    std::ostringstream os;
    os << "epoch,train_loss,val_lpred,d_loss" << (with_seconds ? ",seconds" : "") << '\n';
    for (const auto& e : epochs) {
        os << e.epoch << ',' << metrics::format_optional(e.train_loss) << ','
           << metrics::format_optional(e.val_lpred) << ',' << metrics::format_optional(e.d_loss);
        if (with_seconds) os << ',' << metrics::format_optional(e.seconds);
        os << '\n';
    }
    return os.str();
}

void RunLedger::write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    f << csv(true);
}

int best_epoch(std::span<const double> val_losses) {
    if (val_losses.empty()) return -1;
    int best = 0;
    for (std::size_t i = 1; i < val_losses.size(); ++i)
        if (val_losses[i] < val_losses[best]) best = static_cast<int>(i);
    return best;
}

void Adam::step(std::span<ad::Parameter* const> params) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            p->adam_m[i] = b1_ * p->adam_m[i] + (1.0 - b1_) * g;
            p->adam_v[i] = b2_ * p->adam_v[i] + (1.0 - b2_) * g * g;
            p->value[i] -= lr_ * (p->adam_m[i] / c1) / (std::sqrt(p->adam_v[i] / c2) + eps_);
        }
    }
}

double clip_gradients(std::span<ad::Parameter* const> params, double max_norm) {
    double ss = 0.0;
    for (auto* p : params)
        for (double g : p->grad.data) ss += g * g;
    const double norm = std::sqrt(ss);
    if (max_norm > 0.0 && norm > max_norm) {
        const double k = max_norm / norm;
        for (auto* p : params)
            for (double& g : p->grad.data) g *= k;
    }
    return norm;
}

std::uint64_t parameter_hash(const net::NowcastModel& model, bool discriminator_group) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : model.parameters()) {
        if (model.is_discriminator(p) != discriminator_group) continue;
        for (double v : p.value.data) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                h ^= bits & 0xff;
                h *= 1099511628211ULL;
                bits >>= 8;
            }
        }
    }
    return h;
}

NormStats fit_training_stats(const FrameSource& source, const SplitScheme& scheme) {
    std::vector<Grid> rain, radar;
    for (Minutes ts : source.timestamps()) {
        if (split_by_time(ts, scheme) != Split::Train) continue;
        auto [r, d] = source.load(ts);
        rain.push_back(std::move(r));
        radar.push_back(std::move(d));
    }
    return nowcast::fit_norm_stats(rain, radar);
}

Trainer::Trainer(const TrainConfig& cfg, const NormStats& norm, int height, int width)
    : cfg_(cfg),
      norm_(norm),
      model_(
          [&] {
              net::NetConfig n = cfg.net;
              n.height = height;
              n.width = width;
              return n;
          }(),
          options_for(cfg.variant), cfg.seed),
      g_opt_(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      d_opt_(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {
    validate(cfg_);
    g_params_ = group(model_, false);
    d_params_ = group(model_, true);
}

StepStats Trainer::step(const net::Batch& batch) {
    StepStats st;
    const bool classifier = cfg_.variant == Variant::Classifier;
    const bool adversarial = cfg_.loss.use_adv && model_.options().discriminator;

    ad::Graph g;
    net::Binder bind_g(g, [this](const ad::Parameter& p) { return !model_.is_discriminator(p); });
    std::vector<ad::Var> frames;
    for (const auto& f : batch.frames) frames.push_back(g.constant(f));
    const auto out = model_.predict(bind_g, frames, g.constant(batch.latest_rain));

    if (adversarial) {
        // D step on detached predictions; the predictor is not touched here
        const std::uint64_t g_before = cfg_.check_frozen ? parameter_hash(model_, false) : 0;
        ad::Graph gd;
        net::Binder bind_d(gd, [this](const ad::Parameter& p) { return model_.is_discriminator(p); });
        std::vector<ad::Var> real, fake;
        for (int t = 0; t < kHours; ++t) {
            real.push_back(model_.discriminate(bind_d, gd.constant(batch.targets_norm[t])));
            fake.push_back(model_.discriminate(bind_d, gd.constant(out.output[t].value())));
        }
        const ad::Var ld = loss::d_loss(real, fake);
        st.d_loss = ld.value()[0];
        if (!finite(*st.d_loss)) throw Error(ErrorKind::NaNLoss, "discriminator loss is not finite");
        zero_grads(d_params_);
        gd.backward(ld);
        clip_gradients(d_params_, cfg_.clip_norm);
        d_opt_.step(d_params_);
        if (cfg_.check_frozen && parameter_hash(model_, false) != g_before)
            throw Error(ErrorKind::DomainError, "predictor parameters changed during the discriminator step");
    }

    const std::uint64_t d_before = cfg_.check_frozen ? parameter_hash(model_, true) : 0;
    ad::Var total;
    if (classifier) {
        total = loss::binary_cross_entropy(out.output, batch.targets);
        st.l_pred = total.value()[0];
    } else {
        std::vector<ad::Var> phys;
        for (const auto& o : out.output) phys.push_back(ad::scale(o, norm_.rain_q95));
        const ad::Var l_pred = loss::prediction_loss(cfg_.loss, phys, batch.targets);
        st.l_pred = l_pred.value()[0];
        ad::Var l_bal, l_gd;
        if (cfg_.loss.use_bal) l_bal = loss::balanced_loss(phys, batch.targets);
        if (adversarial) {
            // discriminator bound as constants: it scores but does not learn here
            std::vector<ad::Var> fake;
            for (const auto& o : out.output) fake.push_back(model_.discriminate(bind_g, o));
            l_gd = loss::g_adv_loss(fake);
        }
        total = loss::combine(cfg_.loss, l_pred, l_bal, l_gd);
    }
    st.total = total.value()[0];
    if (!finite(st.total)) throw Error(ErrorKind::NaNLoss, "training loss is not finite");
    zero_grads(g_params_);
    g.backward(total);
    clip_gradients(g_params_, cfg_.clip_norm);
    g_opt_.step(g_params_);
    if (cfg_.check_frozen && parameter_hash(model_, true) != d_before)
        throw Error(ErrorKind::DomainError, "discriminator parameters changed during the predictor step");
    if (!model_.all_finite()) throw Error(ErrorKind::NaNLoss, "parameters became non-finite");
    return st;
}

double Trainer::validation_loss(std::span<const SequenceSample> samples) {
    if (samples.empty()) throw Error(ErrorKind::EmptySplit, "validation split is empty");
    const bool classifier = cfg_.variant == Variant::Classifier;
    double acc = 0.0;
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t start = 0; start < samples.size(); start += bs) {
        std::vector<const SequenceSample*> ptrs;
        for (std::size_t i = start; i < std::min(samples.size(), start + bs); ++i) ptrs.push_back(&samples[i]);
        const net::Batch batch = net::make_batch(ptrs, norm_);
        const auto out = model_.infer(batch);
        const std::size_t plane = batch.targets[0].shape.plane();
        for (std::size_t n = 0; n < ptrs.size(); ++n) {
            if (classifier) {
                acc += sample_bce(out, batch.targets, n, plane);
                continue;
            }
            std::vector<double> y, p;
            for (int t = 0; t < kHours; ++t) {
                const auto yb = batch.targets[t].data.begin() + static_cast<std::ptrdiff_t>(n * plane);
                y.insert(y.end(), yb, yb + static_cast<std::ptrdiff_t>(plane));
                for (std::size_t i = n * plane; i < (n + 1) * plane; ++i) p.push_back(out[t][i] * norm_.rain_q95);
            }
            acc += cfg_.loss.base == loss::BaseLoss::WMAE ? loss::wmae(y, p, cfg_.loss.threshold)
                                                          : loss::wmse(y, p, cfg_.loss.threshold);
        }
    }
    return acc / static_cast<double>(samples.size());
}

TrainResult train(const TrainConfig& cfg, std::span<const SequenceSample> train_set,
                  std::span<const SequenceSample> val_set, const NormStats& norm) {
    validate(cfg);
    if (train_set.empty()) throw Error(ErrorKind::EmptySplit, "training split is empty");
    if (val_set.empty()) throw Error(ErrorKind::EmptySplit, "validation split is empty");
    if (cfg.max_train_samples > 0 && train_set.size() > cfg.max_train_samples)
        train_set = train_set.first(cfg.max_train_samples);
    if (cfg.max_val_samples > 0 && val_set.size() > cfg.max_val_samples) val_set = val_set.first(cfg.max_val_samples);

    Trainer trainer(cfg, norm, train_set[0].height(), train_set[0].width());
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
    const std::string tag(to_string(cfg.variant));

    RunLedger ledger;
    std::vector<double> val_history;
    std::vector<ad::Tensor> best_values;
    std::vector<std::size_t> order(train_set.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0, d_sum = 0.0;
        std::size_t batches = 0;
        bool any_d = false;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const SequenceSample*> ptrs;
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
                ptrs.push_back(&train_set[order[i]]);
            const StepStats st = trainer.step(net::make_batch(ptrs, norm));
            loss_sum += st.total;
            if (st.d_loss) {
                d_sum += *st.d_loss;
                any_d = true;
            }
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        if (any_d) rec.d_loss = d_sum / static_cast<double>(batches);
        rec.val_lpred = trainer.validation_loss(val_set);
        if (!finite(rec.val_lpred)) throw Error(ErrorKind::NaNLoss, "validation loss is not finite");
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        val_history.push_back(rec.val_lpred);
        ledger.epochs.push_back(rec);

        const int best = best_epoch(val_history);
        if (best == epoch) {
            best_values.clear();
            for (const auto& p : trainer.model().parameters()) best_values.push_back(p.value);
        }
        ledger.best_epoch = best;
        if (!cfg.checkpoint_dir.empty()) {
            const net::ModelState snapshot{tag, trainer.model(), norm};
            net::save_checkpoint(cfg.checkpoint_dir / epoch_name(epoch), snapshot);
            if (best == epoch) net::save_checkpoint(cfg.checkpoint_dir / "best.nwck", snapshot);
            ledger.write_csv(cfg.checkpoint_dir / "ledger.csv");
        }
    }

    net::NowcastModel model = trainer.model();
    for (std::size_t i = 0; i < best_values.size(); ++i) model.parameters()[i].value = best_values[i];
    for (auto& p : model.parameters()) {
        p.zero_grad();
        std::fill(p.adam_m.data.begin(), p.adam_m.data.end(), 0.0);
        std::fill(p.adam_v.data.begin(), p.adam_v.data.end(), 0.0);
    }
    net::round_to_float32(model);
    return TrainResult{net::ModelState{tag, std::move(model), norm}, std::move(ledger)};
}

TrainResult train(const TrainConfig& cfg, const FrameSource& source, const SplitScheme& scheme) {
    const NormStats norm = fit_training_stats(source, scheme);
    const auto train_set = window_samples(source, Split::Train, scheme);
    const auto val_set = window_samples(source, Split::Val, scheme);
    return train(cfg, train_set, val_set, norm);
}

TrainResult train_classifier(TrainConfig cfg, const FrameSource& source, const SplitScheme& scheme) {
    cfg.variant = Variant::Classifier;
    cfg.loss = default_loss_for(Variant::Classifier);
    return train(cfg, source, scheme);
}

metrics::VerificationReport evaluate_forecaster(const Forecaster& forecaster, std::span<const SequenceSample> samples,
                                                const std::string& model_name, const std::string& split,
                                                const std::vector<double>& thresholds, const std::vector<int>& hours) {
    if (samples.empty()) throw Error(ErrorKind::EmptySplit, "no samples in split " + split);
    metrics::ReportBuilder builder(model_name, split, thresholds, hours);
    for (const auto& s : samples) builder.add(s, forecaster(s));
    return builder.finish();
}

metrics::VerificationReport evaluate_checkpoint(net::ModelState& state, std::span<const SequenceSample> samples,
                                                const std::string& split, const std::vector<double>& thresholds,
                                                const std::vector<int>& hours) {
    auto fc = [&](const SequenceSample& s) { return state.model.forecast_sample(s, state.norm, state.variant); };
    return evaluate_forecaster(fc, samples, state.variant, split, thresholds, hours);
}

metrics::VerificationReport evaluate_checkpoint(net::ModelState& state, const FrameSource& source, Split split,
                                                const SplitScheme& scheme, const std::vector<double>& thresholds,
                                                const std::vector<int>& hours) {
    const auto samples = window_samples(source, split, scheme);
    return evaluate_checkpoint(state, samples, std::string(to_string(split)), thresholds, hours);
}

}  // namespace nowcast::train
