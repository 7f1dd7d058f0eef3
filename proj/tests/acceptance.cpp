// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 3 7        run a subset
//
// Exit status is nonzero when any selected criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nowcast/baselines.hpp"
#include "nowcast/blender.hpp"
#include "nowcast/errors.hpp"
#include "nowcast/grid_store.hpp"
#include "nowcast/losses.hpp"
#include "nowcast/nowcast_net.hpp"
#include "nowcast/synthetic_weather.hpp"
#include "nowcast/trainer.hpp"
#include "nowcast/verification_metrics.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace nowcast;
using ad::Graph;
using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

// ---- tolerances -----------------------------------------------------------
constexpr double kLossRelTol = 1e-9;
constexpr double kGradStep = 1e-3;
constexpr double kGradRelTol = 1e-3;
constexpr double kDiagramTol = 1e-12;
constexpr double kTargetTol = 1e-9;
constexpr int kMotionTolPx = 1;
// evenly spaced entries per attention tensor; the 5x5 stack is too wide to sweep exhaustively
constexpr std::size_t kAttentionSamples = 64;
constexpr double kValDropRequired = 0.30;
constexpr double kWmae05SlackRel = 0.10;

/// Collects failed checks; a criterion passes when none were recorded.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        ++count_;
        if (!ok && failures_.size() < 8) failures_.push_back(what);
        if (!ok) ++failed_;
    }
    void note(const std::string& s) { notes_.push_back(s); }
    bool ok() const { return failed_ == 0; }
    std::string summary() const {
        std::ostringstream s;
        s << count_ << " checks";
        if (failed_) s << ", " << failed_ << " failed";
        for (const auto& n : notes_) s << "; " << n;
        for (const auto& f : failures_) s << "\n      - " << f;
        return s.str();
    }

private:
    std::size_t count_ = 0, failed_ = 0;
    std::vector<std::string> failures_, notes_;
};

std::string fmt(const char* f, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

bool rel_close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(s);
    for (double& v : t.data) v = d(rng);
    return t;
}

Var probe(Graph& g, const std::vector<Var>& ys, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Var total;
    for (const Var& y : ys) {
        const Var s = ad::sum(ad::mul(y, g.constant(random_tensor(y.shape(), rng, -1.0, 1.0))));
        total = total.valid() ? ad::add(total, s) : s;
    }
    return total;
}

struct FdResult {
    double max_rel = 0.0;
    std::string worst;
    std::size_t checked = 0;
    std::size_t straddled = 0;  // some node changed sign inside the stencil; compared at kFineStep
};

constexpr double kToyRainFloor = 0.1;  // mm/hr, same as the radar echo floor
constexpr double kFineStep = 1e-6;

/// Central differences at kGradStep. The tape is rebuilt identically for
/// every evaluation, so node i means the same quantity each time; when any
/// node value changes sign between theta-h and theta+h the stencil may cross a
/// (leaky) ReLU kink, and that coordinate is compared at kFineStep instead.
FdResult fd_check(const std::vector<Parameter*>& params, const std::function<Var(Graph&)>& loss,
                  std::size_t max_per_param = 0) {
    auto eval = [&](std::vector<bool>* signs) {
        Graph g;
        const double v = loss(g).value()[0];
        if (signs) {
            signs->clear();
            for (std::size_t id = 0; id < g.node_count(); ++id)
                for (double x : g.value(static_cast<int>(id)).data) signs->push_back(x > 0.0);
        }
        return v;
    };
    for (auto* p : params) p->zero_grad();
    {
        Graph g;
        g.backward(loss(g));
    }
    FdResult out;
    std::vector<bool> s_up, s_down;
    for (auto* p : params) {
        double group_max = 0.0;
        for (double v : p->grad.data) group_max = std::max(group_max, std::abs(v));
        const std::size_t n = p->value.size();
        const std::size_t stride = (max_per_param == 0 || n <= max_per_param) ? 1 : n / max_per_param;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = p->value[i];
            auto at = [&](double delta, std::vector<bool>* signs) {
                p->value[i] = orig + delta;
                const double v = eval(signs);
                p->value[i] = orig;
                return v;
            };
            double numeric = (at(kGradStep, &s_up) - at(-kGradStep, &s_down)) / (2.0 * kGradStep);
            if (s_up != s_down) {
                ++out.straddled;
                numeric = (at(kFineStep, nullptr) - at(-kFineStep, nullptr)) / (2.0 * kFineStep);
            }
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * group_max, 1e-12});
            const double rel = std::abs(analytic - numeric) / denom;
            ++out.checked;
            if (rel > out.max_rel) {
                out.max_rel = rel;
                out.worst = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) +
                            " numeric " + std::to_string(numeric);
            }
        }
    }
    return out;
}

void grad_expect(Checker& c, const std::string& what, const FdResult& r) {
    c.expect(r.checked > 0 && r.max_rel < kGradRelTol,
             what + ": max rel " + fmt("%.3g", r.max_rel) + " at " + r.worst);
    c.note(what + " " + fmt("%.1e", r.max_rel) +
           (r.straddled ? " (" + std::to_string(r.straddled) + "/" + std::to_string(r.checked) + " at fine step)" : ""));
}

// ---- 1 ------------------------------------------------------------------
void weight_table(Checker& c) {
    const double th = 0.5, eps = 1e-9;
    const std::pair<double, double> table[] = {
        {th - eps, 0}, {th, 1},   {1.999, 1},   {2, 2},   {4.999, 2}, {5, 5},
        {9.999, 5},    {10, 10}, {29.999, 10}, {30, 30}, {1000, 30},
    };
    for (auto [x, w] : table) c.expect(loss::weight(x, th) == w, "weight(" + fmt("%.9g", x) + ", 0.5)");
    c.expect(loss::weight(0.3, 0.0) == 1.0, "weight(0.3, 0)");
    c.expect(loss::weight(0.0, -1.0) > 0.0, "weight(0, -1)");
}

// ---- 2 ------------------------------------------------------------------
void loss_identities(Checker& c) {
    using V = std::vector<double>;
    auto near = [&](double got, double want, const std::string& what) {
        c.expect(rel_close(got, want, kLossRelTol), what + " = " + fmt("%.17g", got));
    };
    near(loss::wmae(V{5}, V{3}, 0.5), 10.0, "wmae 1x1");
    near(loss::wmse(V{5}, V{3}, 0.5), 20.0, "wmse 1x1");
    near(loss::balanced_loss(V{0.2}, V{1.2}), 1.0, "balanced 1x1");
    near(loss::d_loss(V{0.5, 0.5, 0.5}, V{0.5, 0.5, 0.5}), 6.0 * std::numbers::ln2, "d_loss at 0.5");
    near(loss::g_adv_loss(V{0.5, 0.5, 0.5}), 3.0 * std::numbers::ln2, "g_adv at 0.5");
    loss::LossSpec adv;
    adv.use_adv = true;
    near(loss::combine(adv, 10, 0, 2), 9.6, "adversarial mix");
    loss::LossSpec bal;
    bal.use_bal = true;
    near(loss::combine(bal, 10, 1, 0), 9.91, "balanced mix");
    adv.w_adv = 0;
    c.expect(loss::combine(adv, 10, 0, 2) == 10.0, "w_adv = 0 gives L_pred");
    c.expect(loss::wmae(V{5, 1}, V{5, 1}, 0.5) == 0.0, "perfect prediction");

    // masks partition the pixels
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> d(0.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        V y(64), p(64);
        for (int i = 0; i < 64; ++i) {
            y[i] = i % 3 == 0 ? d(rng) / 4.0 : d(rng);
            p[i] = y[i] + 0.25 + d(rng);  // never equal to the target
        }
        bool ok = true;
        double wsum = 0.0, bsum = 0.0;
        for (int i = 0; i < 64; ++i) {
            const bool in_w = loss::wmae(V{y[i]}, V{p[i]}, 0.5) > 0.0;
            const bool in_b = loss::balanced_loss(V{y[i]}, V{p[i]}) > 0.0;
            ok = ok && (in_w != in_b);
            wsum += in_w;
            bsum += in_b;
        }
        // with Th=0.5 and every wet target below 2 mm/hr the weights are 1, so the two terms add up to plain MAE
        V yc = y;
        for (double& v : yc) v = std::min(v, 1.999);
        double mae_c = 0.0;
        for (int i = 0; i < 64; ++i) mae_c += std::abs(yc[i] - p[i]);
        const double sum = loss::wmae(yc, p, 0.5) + loss::balanced_loss(yc, p);
        ok = ok && rel_close(sum, mae_c / 64.0, kLossRelTol) && wsum + bsum == 64;
        if (!ok) {
            c.expect(false, "mask partition, trial " + std::to_string(trial));
            return;
        }
    }
    c.expect(true, "mask partition");
}

// ---- 3 ------------------------------------------------------------------
void gradient_suite(Checker& c) {
    using net::Binder;
    using net::NetConfig;
    using net::NowcastModel;
    std::mt19937_64 rng(31);

    NetConfig cfg;
    cfg.encoder_channels = {3, 4, 4};
    cfg.stem_channels = 2;
    cfg.discriminator_units = {4, 3, 1};
    cfg.height = cfg.width = 8;
    NowcastModel m(cfg, net::ModelOptions{true, true, net::OutputHead::Rain}, 5);
    std::mt19937_64 init(6);
    for (auto& p : m.parameters())
        if (p.name.starts_with("attn.conv4") || p.name.ends_with("_b") || p.name.ends_with(".b"))
            testsupport::fill_uniform(p, -0.3, 0.3, init);
    auto group = [&](const std::string& prefix) {
        std::vector<Parameter*> out;
        for (auto& p : m.parameters())
            if (p.name.starts_with(prefix)) out.push_back(&p);
        return out;
    };

    {  // ConvGRU step
        Parameter h("h", Shape{2, 4, 4, 4}), x("x", Shape{2, 3, 4, 4});
        testsupport::fill_uniform(h, -1, 1, rng);
        testsupport::fill_uniform(x, -1, 1, rng);
        auto ps = group("enc.gru1.");
        ps.push_back(&h);
        ps.push_back(&x);
        grad_expect(c, "gru", fd_check(ps, [&](Graph& g) {
                        Binder b(g);
                        return probe(g, {m.gru_step(b, "enc.gru1", g.parameter(h), g.parameter(x))}, 1);
                    }));
    }
    {  // encode -> forecast, raw maps
        std::vector<Tensor> frames;
        for (int k = 0; k < kInputFrames; ++k) frames.push_back(random_tensor(Shape{1, 2, 8, 8}, rng, 0, 1));
        std::vector<Parameter*> ps;
        for (auto& p : m.parameters())
            if (p.name.starts_with("enc.") || p.name.starts_with("dec.") || p.name.starts_with("head."))
                ps.push_back(&p);
        grad_expect(c, "encode-forecast", fd_check(ps, [&](Graph& g) {
                        Binder b(g);
                        std::vector<Var> fv;
                        for (const auto& f : frames) fv.push_back(g.constant(f));
                        const auto states = m.encode(b, fv);
                        return probe(g, m.forecast(b, states), 2);
                    }));
    }
    {  // three chained attention steps
        Parameter a0("a0", Shape{1, 1, 8, 8});
        std::vector<Parameter> raw(3, Parameter("raw", Shape{1, 1, 8, 8}));
        testsupport::fill_uniform(a0, 0.1, 0.9, rng);
        for (auto& r : raw) testsupport::fill_uniform(r, -1, 2, rng);
        auto ps = group("attn.");
        ps.push_back(&a0);
        for (auto& r : raw) ps.push_back(&r);
        grad_expect(c, "attention chain", fd_check(ps, [&](Graph& g) {
                        Binder b(g);
                        Var a = g.parameter(a0);
                        std::vector<Var> outs;
                        for (auto& r : raw) {
                            const Var rv = g.parameter(r);
                            a = m.attention_step(b, a, rv);
                            outs.push_back(ad::mul(rv, ad::scale(a, 2.0)));
                        }
                        return probe(g, outs, 3);
                    }, kAttentionSamples));
    }
    {  // discriminator under both adversarial losses
        NetConfig dc = cfg;
        dc.height = dc.width = 4;
        NowcastModel dm(dc, net::ModelOptions{false, true, net::OutputHead::Rain}, 8);
        std::vector<Parameter> real(3, Parameter("real", Shape{2, 1, 4, 4})), fake = real;
        for (auto& r : real) testsupport::fill_uniform(r, 0, 2, rng);
        for (auto& f : fake) testsupport::fill_uniform(f, 0, 2, rng);
        std::vector<Parameter*> ps;
        for (auto& p : dm.parameters())
            if (dm.is_discriminator(p)) ps.push_back(&p);
        for (auto& f : fake) ps.push_back(&f);
        auto scores = [&](Graph& g, Binder& b, std::vector<Parameter>& src, bool trainable) {
            std::vector<Var> out;
            for (auto& s : src) out.push_back(dm.discriminate(b, g.parameter(s, trainable)));
            return out;
        };
        grad_expect(c, "d_loss", fd_check(ps, [&](Graph& g) {
                        Binder b(g);
                        return loss::d_loss(scores(g, b, real, false), scores(g, b, fake, true));
                    }));
        grad_expect(c, "g_adv", fd_check(ps, [&](Graph& g) {
                        Binder b(g);
                        return loss::g_adv_loss(scores(g, b, fake, true));
                    }));
    }
    {  // prediction losses, targets kept away from the |y - p| = 0 kink
        std::vector<Parameter> preds(3, Parameter("pred", Shape{2, 1, 4, 4}));
        std::vector<Tensor> targets;
        for (auto& p : preds) {
            testsupport::fill_uniform(p, 0.05, 0.95, rng);
            Tensor t(p.value.shape);
            for (std::size_t i = 0; i < t.size(); ++i)
                t[i] = p.value[i] + (i % 2 ? 0.5 + 20.0 * p.value[i] : -0.04);
            targets.push_back(t);
        }
        std::vector<Parameter*> ps;
        for (auto& p : preds) ps.push_back(&p);
        auto vars = [&](Graph& g) {
            std::vector<Var> v;
            for (auto& p : preds) v.push_back(g.parameter(p));
            return v;
        };
        loss::LossSpec bal;
        bal.use_bal = true;
        grad_expect(c, "wmae", fd_check(ps, [&](Graph& g) { return loss::wmae(vars(g), targets, 0.5); }));
        grad_expect(c, "wmse", fd_check(ps, [&](Graph& g) { return loss::wmse(vars(g), targets, 0.5); }));
        grad_expect(c, "balanced mix", fd_check(ps, [&](Graph& g) {
                        const auto v = vars(g);
                        return loss::combine(bal, loss::wmae(v, targets, 0.5), loss::balanced_loss(v, targets), Var{});
                    }));
        grad_expect(c, "cross-entropy", fd_check(ps, [&](Graph& g) {
                        return loss::binary_cross_entropy(vars(g), targets);
                    }));
    }
}

// ---- 4 ------------------------------------------------------------------
void shape_identity(Checker& c) {
    std::mt19937_64 rng(41);
    auto inputs = [&](int n, int size) {
        std::vector<Tensor> frames;
        for (int k = 0; k < kInputFrames; ++k) frames.push_back(random_tensor(Shape{n, 2, size, size}, rng, 0, 1));
        return std::pair{frames, random_tensor(Shape{n, 1, size, size}, rng, 0, 1)};
    };
    auto run = [](net::NowcastModel& m, Graph& g, const std::pair<std::vector<Tensor>, Tensor>& in) {
        net::Binder b(g);
        std::vector<Var> fv;
        for (const auto& f : in.first) fv.push_back(g.constant(f));
        return m.predict(b, fv, g.constant(in.second));
    };
    for (int size : {16, 32, 64}) {
        net::NetConfig cfg;
        cfg.encoder_channels = {4, 6, 8};
        cfg.stem_channels = 3;
        cfg.height = cfg.width = size;
        const auto in = inputs(2, size);
        net::NowcastModel m(cfg, net::ModelOptions{true, false, net::OutputHead::Rain}, 3);
        net::NowcastModel plain(cfg, net::ModelOptions{}, 3);
        Graph g1, g2;
        const auto a = run(m, g1, in);
        const auto b = run(plain, g2, in);
        const std::string tag = std::to_string(size) + "x" + std::to_string(size);
        c.expect(a.output.size() == kHours, tag + ": three maps");
        for (int t = 0; t < kHours; ++t) {
            c.expect(a.output[t].shape() == Shape{2, 1, size, size}, tag + ": map shape " + a.output[t].shape().str());
            c.expect(a.output[t].value().data == b.output[t].value().data, tag + ": zero attention is an identity");
        }
    }
    {
        net::NetConfig cfg;
        cfg.encoder_channels = {4, 6, 8};
        cfg.stem_channels = 3;
        cfg.height = cfg.width = 16;
        net::NowcastModel m(cfg, net::ModelOptions{}, 4);
        for (const char* cell : {"enc.gru0", "enc.gru1", "dec.gru2"}) {
            Parameter* gb = m.find(std::string(cell) + ".gate_b");
            const int hidden = gb->value.shape.c / 2;
            for (int i = 0; i < hidden; ++i) gb->value[i] = -1e30;  // update gate shut
        }
        Graph g;
        net::Binder b(g);
        const Tensor h = random_tensor(Shape{2, 6, 8, 8}, rng, -1, 1);
        const Tensor x = random_tensor(Shape{2, 4, 8, 8}, rng, -1, 1);
        c.expect(m.gru_step(b, "enc.gru1", g.constant(h), g.constant(x)).value().data == h.data,
                 "closed gate keeps the state");
        const Tensor h2 = random_tensor(Shape{1, 8, 4, 4}, rng, -1, 1);
        c.expect(m.gru_step(b, "dec.gru2", g.constant(h2), Var{}).value().data == h2.data,
                 "closed gate keeps the state, input-free cell");
    }
}

// ---- 5 ------------------------------------------------------------------
void metric_oracles(Checker& c) {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> d(0.0, 12.0);
    const double thresholds[] = {1.0, 3.0, 5.0, 10.0};
    std::size_t defined_rows = 0;
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        std::vector<double> t(64), p(64);
        for (int i = 0; i < 64; ++i) {
            t[i] = d(rng) * (i % 5 == 0 ? 0.1 : 1.0);
            p[i] = d(rng);
        }
        for (double th : thresholds) {
            std::int64_t tp = 0, fp = 0, tn = 0, fn = 0, inter = 0, uni = 0;
            for (int i = 0; i < 64; ++i) {
                const bool a = t[i] >= th, b = p[i] >= th;
                tp += a && b;
                fp += !a && b;
                fn += a && !b;
                tn += !a && !b;
                inter += a && b;
                uni += a || b;
            }
            const auto cc = metrics::confusion(t, p, th);
            ok = ok && cc.tp == tp && cc.fp == fp && cc.tn == tn && cc.fn == fn;
            const auto s = metrics::csi(cc);
            ok = ok && (uni == 0 ? !s.has_value() : (s && std::abs(*s - double(inter) / double(uni)) < 1e-15));
            // standard Heidke form from the brute-force table
            const double n = 64.0;
            const double expected = (double(tp) + double(fn)) * (double(tp) + double(fp)) / n +
                                    (double(tn) + double(fn)) * (double(tn) + double(fp)) / n;
            const double denom = n - expected;
            const auto h = metrics::hss(cc);
            if (denom == 0.0) {
                ok = ok && !h.has_value();
            } else {
                ok = ok && h && std::abs(*h - (double(tp + tn) - expected) / denom) < 1e-12;
            }
            const auto row = metrics::diagram_row(cc);
            if (row.defined() && *row.csi > 0.0) {
                ++defined_rows;
                ok = ok && std::abs(1.0 / *row.csi - (1.0 / *row.pod + 1.0 / *row.sr - 1.0)) < kDiagramTol;
            }
            if (!ok) c.expect(false, "trial " + std::to_string(trial) + " threshold " + fmt("%g", th));
        }
    }
    c.expect(ok, "brute-force agreement");
    c.expect(defined_rows > 1000, "diagram identity exercised");
    c.note(std::to_string(defined_rows) + " diagram rows checked");
}

// ---- 6 ------------------------------------------------------------------
void baseline_correctness(Checker& c) {
    const auto moving = testsupport::scene_sample(make_translation_scene(1.0, -1.0, 64));
    const auto zero = baseline::extrapolate(moving, baseline::MotionField::zero(64, 64));
    const auto pers = baseline::persistence_forecast(moving, 10);
    for (int t = 0; t < kHours; ++t)
        c.expect(zero.predictions[t].values == pers.predictions[t].values, "zero motion equals persistence");

    const auto s = testsupport::scene_sample(make_translation_scene(3.0, -2.0, 64));
    const auto motion = baseline::estimate_motion(s.radar_in[kInputFrames - 2], s.radar_in[kInputFrames - 1]);
    c.expect(!motion.degenerate, "motion found");
    int worst = 0;
    for (std::size_t i = 0; i < motion.u.size(); ++i)
        worst = std::max({worst, std::abs(motion.u[i] - 3), std::abs(motion.v[i] + 2)});
    c.expect(worst <= kMotionTolPx, "motion error " + std::to_string(worst) + " px");
    const auto ex = baseline::extrapolate(s, motion);
    const auto ps = baseline::persistence_forecast(s, 10);
    const auto ce = metrics::csi(metrics::confusion(s.targets[0].grid, ex.predictions[0], 1.0));
    const auto cp = metrics::csi(metrics::confusion(s.targets[0].grid, ps.predictions[0], 1.0));
    c.expect(ce && cp && *ce > *cp, "extrapolation CSI beats persistence");
    if (ce && cp) c.note("CSI(>=1) extrapolation " + fmt("%.3f", *ce) + " vs persistence " + fmt("%.3f", *cp));
}

// ---- 7 ------------------------------------------------------------------
struct ToyScores {
    double haze = 0.0;
    double wmae_0 = 0.0;
    double wmae_05 = 0.0;
};

/// Dry-region haze: predicted pixels in (0, 0.5) mm/hr where the target is below 0.5.
ToyScores toy_scores(net::ModelState& st, const std::vector<SequenceSample>& samples) {
    std::size_t hazy = 0, dry = 0;
    metrics::ReportBuilder rb(st.variant, "test", {1.0}, {0, 1, 2});
    for (const auto& s : samples) {
        const auto fb = st.model.forecast_sample(s, st.norm, st.variant);
        rb.add(s, fb);
        for (int t = 0; t < kHours; ++t)
            for (std::size_t i = 0; i < fb.predictions[t].size(); ++i) {
                if (s.targets[t].grid.values[i] >= 0.5) continue;
                ++dry;
                const double p = fb.predictions[t].values[i];
                hazy += p > 0.0 && p < 0.5;
            }
    }
    const auto rep = rb.finish();
    ToyScores out;
    out.haze = static_cast<double>(hazy) / static_cast<double>(std::max<std::size_t>(dry, 1));
    for (int h = 0; h < kHours; ++h) {
        out.wmae_0 += rep.hour(h).wmae_0 / kHours;
        out.wmae_05 += rep.hour(h).wmae_05 / kHours;
    }
    return out;
}

void toy_training(Checker& c) {
    CorpusConfig cc;
    cc.scenes = 200;
    cc.height = cc.width = 32;
    cc.seed = 7;
    // exact zeros in dry regions; without them the unfloored Gaussian tails count as rain
    cc.rain_floor = kToyRainFloor;
    const auto src = sample_corpus_in_memory(cc);
    const NormStats norm = train::fit_training_stats(src);
    const auto tr = window_samples(src, Split::Train);
    const auto va = window_samples(src, Split::Val);
    const auto te = window_samples(src, Split::Test);
    c.note(std::to_string(tr.size()) + "/" + std::to_string(va.size()) + "/" + std::to_string(te.size()) +
           " samples");

    train::TrainConfig cfg;
    cfg.variant = train::Variant::GruWmaeAdv;
    cfg.loss = train::default_loss_for(cfg.variant);
    cfg.net.encoder_channels = {8, 16, 16};
    cfg.learning_rate = 3e-3;
    cfg.epochs = 30;
    cfg.seed = 1;

    // w_adv = 0 trains the discriminator but leaves the predictor on the plain WMAE path
    cfg.loss.w_adv = 0.0;
    auto base = train::train(cfg, tr, va, norm);
    cfg.loss.w_adv = 0.05;
    auto adv = train::train(cfg, tr, va, norm);

    const auto& be = base.ledger.epochs;
    const double first = be.front().val_lpred, best = be[base.ledger.best_epoch].val_lpred;
    const double drop = 1.0 - best / first;
    c.expect(drop >= kValDropRequired, "(a) val L_pred drop " + fmt("%.3f", drop));
    c.note("(a) val " + fmt("%.3f", first) + " -> " + fmt("%.3f", best) + " (" + fmt("%.0f%%", 100 * drop) + ")");

    const ToyScores b = toy_scores(base.state, te);
    const ToyScores a = toy_scores(adv.state, te);
    c.expect(a.haze < b.haze, "(b) haze " + fmt("%.4f", a.haze) + " vs " + fmt("%.4f", b.haze));
    c.note("(b) haze adv " + fmt("%.4f", a.haze) + " vs " + fmt("%.4f", b.haze));
    c.expect(a.wmae_0 < b.wmae_0, "(c) WMAE(0) " + fmt("%.4f", a.wmae_0) + " vs " + fmt("%.4f", b.wmae_0));
    const double degrade = a.wmae_05 / b.wmae_05 - 1.0;
    c.expect(degrade < kWmae05SlackRel, "(c) WMAE(0.5) change " + fmt("%+.3f", degrade));
    c.note("(c) WMAE(0) " + fmt("%.4f", a.wmae_0) + " vs " + fmt("%.4f", b.wmae_0) + ", WMAE(0.5) " +
           fmt("%.4f", a.wmae_05) + " vs " + fmt("%.4f", b.wmae_05));
}

// ---- 8 ------------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

int shell(const std::string& cmd) {
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

void determinism(Checker& c) {
    const fs::path root = fs::temp_directory_path() / "nowcast_acceptance_det";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "corpus.cfg") << "scenes = 40\nheight = 32\nwidth = 32\n";
    std::ofstream(root / "train.cfg") << "[train]\nepochs = 3\nlearning_rate = 0.001\n"
                                         "[net]\nencoder_channels = 8,16,16\n";
    const std::string cli = NOWCAST_CLI;
    for (const char* run : {"a", "b"}) {
        const fs::path dir = root / run;
        const std::string cd = "cd '" + root.string() + "' && '" + cli + "' ";
        const std::string quiet = " > /dev/null 2>> '" + (root / "stderr.txt").string() + "'";
        c.expect(shell(cd + "synth --config corpus.cfg --seed 5 --out " + std::string(run) + "/corpus" + quiet) == 0,
                 std::string(run) + ": synth");
        c.expect(shell(cd + "train --config train.cfg --seed 5 --variant GRU+WMAE+Adv+Atn --data " + run +
                       "/corpus --out " + run + "/model" + quiet) == 0,
                 std::string(run) + ": train");
        c.expect(shell(cd + "eval --checkpoint " + run + "/model/best.nwck --data " + run + "/corpus --out " + run +
                       "/eval --with-baselines" + quiet) == 0,
                 std::string(run) + ": eval");
    }
    const std::pair<const char*, const char*> files[] = {
        {"model/ledger_stable.csv", "ledger"},
        {"eval/report.csv", "report"},
        {"eval/diagram.csv", "diagram"},
        {"model/best.nwck", "checkpoint"},
    };
    for (auto [f, what] : files) {
        const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
        c.expect(!a.empty() && a == b, std::string(what) + " identical");
    }
    c.expect(slurp(root / "a/corpus/manifest.tsv") == slurp(root / "b/corpus/manifest.tsv"), "manifest identical");
}

// ---- 9 ------------------------------------------------------------------
void blend_exact(Checker& c) {
    std::mt19937_64 rng(99);
    ForecastBundle model, pers;
    for (int t = 0; t < kHours; ++t) {
        model.predictions[t] = testsupport::random_grid(20, 20, rng, 40.0);
        pers.predictions[t] = testsupport::random_grid(20, 20, rng, 40.0);
    }
    auto weights = [&](std::function<double()> f) {
        blend::BlendWeights w;
        for (auto& m : w.maps) {
            m = Grid(ChannelKind::Rain, 20, 20, 0);
            for (double& v : m.values) v = f();
        }
        return w;
    };
    const auto one = blend::blend(weights([] { return 1.0; }), model, pers);
    const auto zero = blend::blend(weights([] { return 0.0; }), model, pers);
    for (int t = 0; t < kHours; ++t) {
        c.expect(one.predictions[t].values == model.predictions[t].values, "W=1 is the model");
        c.expect(zero.predictions[t].values == pers.predictions[t].values, "W=0 is persistence");
    }
    std::uniform_real_distribution<double> d(0.0, 1.0);
    const auto mixed = blend::blend(weights([&] { return d(rng); }), model, pers);
    std::size_t checked = 0;
    bool ok = true;
    for (int t = 0; t < kHours && checked < 1000; ++t)
        for (std::size_t i = 0; i < 400 && checked < 1000; ++i, ++checked) {
            const double a = model.predictions[t].values[i], b = pers.predictions[t].values[i];
            const double v = mixed.predictions[t].values[i];
            ok = ok && v >= std::min(a, b) && v <= std::max(a, b);
        }
    c.expect(ok && checked == 1000, "bounded on 1000 pixels");
}

// ---- 10 -----------------------------------------------------------------
void target_split_contracts(Checker& c) {
    CorpusConfig cc;
    cc.scenes = 12;
    cc.height = cc.width = 16;
    cc.seed = 3;
    const auto src = sample_corpus_in_memory(cc);
    const auto samples = window_samples(src);
    c.expect(samples.size() == 12, "one window per scene");
    double worst = 0.0;
    for (const auto& s : samples) {
        for (int t = 0; t < kHours; ++t) {
            std::vector<double> acc(s.targets[t].grid.size(), 0.0);
            for (int k = 0; k < kFramesPerHour; ++k) {
                const auto [rain, radar] = src.load(s.anchor + 60 * t + 10 * k);
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += rain.values[i];
            }
            for (std::size_t i = 0; i < acc.size(); ++i)
                worst = std::max(worst, std::abs(acc[i] / kFramesPerHour - s.targets[t].grid.values[i]));
        }
        for (int k = 0; k < kInputFrames; ++k)
            c.expect(s.rain_in[k].timestamp == s.anchor - 60 + 10 * k, "input frame times");
    }
    c.expect(worst <= kTargetTol, "target error " + fmt("%.3g", worst));

    // every 10-minute stamp of 2018, plus the surrounding years
    std::size_t val = 0, test = 0, trn = 0, wrong = 0;
    for (Minutes ts = to_minutes(2015, 1, 1); ts < to_minutes(2019, 1, 1); ts += kFrameStep) {
        const std::int64_t days = day_index(ts);
        // civil date from a day count (proleptic Gregorian)
        const std::int64_t z = days + 719468;
        const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
        const std::int64_t doe = z - era * 146097;
        const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const std::int64_t mp = (5 * doy + 2) / 153;
        const std::int64_t day = doy - (153 * mp + 2) / 5 + 1;
        const std::int64_t month = mp < 10 ? mp + 3 : mp - 9;
        const std::int64_t year = yoe + era * 400 + (month <= 2);
        (void)month;
        const Split expect = year < 2018 ? Split::Train : (day <= 15 ? Split::Val : Split::Test);
        const Split got = split_by_time(ts);
        wrong += got != expect;
        if (year == 2018) (got == Split::Val ? val : test) += 1;
        if (year < 2018) trn += got == Split::Train;
    }
    c.expect(wrong == 0, std::to_string(wrong) + " timestamps misassigned");
    c.expect(val == 12u * 15u * 144u, "2018 validation days");
    c.expect(test == (365u - 180u) * 144u, "2018 test days");
    c.expect(split_by_time(to_minutes(2016, 6, 10)) == Split::Train, "2016-06-10 train");
    c.expect(split_by_time(to_minutes(2018, 3, 7)) == Split::Val, "2018-03-07 val");
    c.expect(split_by_time(to_minutes(2018, 3, 25)) == Split::Test, "2018-03-25 test");
    c.note(std::to_string(trn + val + test) + " stamps");
}

struct Criterion {
    int id;
    const char* name;
    std::function<void(Checker&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "weight-function table", weight_table},
        {2, "loss identities", loss_identities},
        {3, "gradient suite", gradient_suite},
        {4, "shape/identity suite", shape_identity},
        {5, "metric oracle equivalence", metric_oracles},
        {6, "baseline correctness", baseline_correctness},
        {7, "toy training reproduction", toy_training},
        {8, "determinism synth->train->eval", determinism},
        {9, "blend exact cases", blend_exact},
        {10, "hourly-target and split contracts", target_split_contracts},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& cr : all) {
        if (!wanted.empty() && !wanted.count(cr.id)) continue;
        Checker c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s  %2d  %-36s %7.1fs  %s\n", c.ok() ? "PASS" : "FAIL", cr.id, cr.name, secs,
                    c.summary().c_str());
        std::fflush(stdout);
        failed += !c.ok();
    }
    return failed == 0 ? 0 : 1;
}
